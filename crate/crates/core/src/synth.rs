//! Synthetic block-structured access data and the density-versus-overfitting
//! experiment.
//!
//! Users and documents are split into groups; each user reads documents of
//! its own group only, every in-group cell independently with the same
//! probability. Optionally each group also gets its own block of vocabulary
//! and documents get text drawn uniformly from their group's block. That text
//! exists only to exercise the content-based paths (three-way, user-words and
//! smoothing) on data with a known structure.

use std::ops::Range;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aspect::{train_with_validation, ObservationSet, TrainConfig};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::sparse::SparseCounts;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub users: Range<usize>,
    pub docs: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContentSpec {
    pub vocab_per_group: usize,
    pub tokens_per_doc: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_docs: usize,
    pub groups: Vec<Group>,
    /// Target fraction of nonzero cells over the whole matrix.
    pub density: f64,
    pub seed: u64,
    pub content: Option<ContentSpec>,
}

impl SyntheticSpec {
    /// `n_groups` equal blocks of `users_per_group` users and
    /// `docs_per_group` documents, laid out along the diagonal.
    pub fn blocks(
        n_groups: usize,
        users_per_group: usize,
        docs_per_group: usize,
        density: f64,
        seed: u64,
    ) -> Self {
        let groups = (0..n_groups)
            .map(|g| Group {
                users: g * users_per_group..(g + 1) * users_per_group,
                docs: g * docs_per_group..(g + 1) * docs_per_group,
            })
            .collect();
        SyntheticSpec {
            n_users: n_groups * users_per_group,
            n_docs: n_groups * docs_per_group,
            groups,
            density,
            seed,
            content: None,
        }
    }

    /// Three groups of 50 users and 300 documents: users 0–49 read documents
    /// 0–299, users 50–99 read 300–599, users 100–149 read 600–899.
    pub fn three_groups(density: f64, seed: u64) -> Self {
        Self::blocks(3, 50, 300, density, seed)
    }

    pub fn with_content(mut self, content: ContentSpec) -> Self {
        self.content = Some(content);
        self
    }

    fn in_group_cells(&self) -> usize {
        self.groups.iter().map(|g| g.users.len() * g.docs.len()).sum()
    }

    fn total_cells(&self) -> usize {
        self.n_users * self.n_docs
    }

    /// Probability of each in-group cell being read.
    pub fn cell_probability(&self) -> f64 {
        let in_group = self.in_group_cells();
        if in_group == 0 {
            0.0
        } else {
            self.density * self.total_cells() as f64 / in_group as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        let disjoint = |ranges: Vec<&Range<usize>>, bound: usize, what: &str| -> Result<()> {
            let mut sorted = ranges;
            sorted.sort_by_key(|r| r.start);
            for r in &sorted {
                if r.end > bound {
                    return Err(Error::param(format!("{what} range {r:?} exceeds {bound}")));
                }
            }
            if sorted.windows(2).any(|w| w[0].end > w[1].start) {
                return Err(Error::param(format!("{what} ranges overlap")));
            }
            Ok(())
        };
        disjoint(self.groups.iter().map(|g| &g.users).collect(), self.n_users, "user")?;
        disjoint(self.groups.iter().map(|g| &g.docs).collect(), self.n_docs, "document")?;
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::param(format!("density {} outside [0, 1]", self.density)));
        }
        if self.cell_probability() > 1.0 + 1e-12 {
            return Err(Error::param(format!(
                "density {} unachievable: groups cover only {} of {} cells",
                self.density,
                self.in_group_cells(),
                self.total_cells()
            )));
        }
        if let Some(c) = self.content {
            if c.vocab_per_group == 0 || c.tokens_per_doc == 0 {
                return Err(Error::param("content needs a positive vocabulary and document length"));
            }
        }
        Ok(())
    }

    /// Independent draw of the access matrix from the stream selected by
    /// `stream` (0 for the primary data set).
    pub fn accesses(&self, stream: u64) -> Result<SparseCounts> {
        self.validate()?;
        let p = self.cell_probability().min(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let mut cells = Vec::new();
        for g in &self.groups {
            for u in g.users.clone() {
                for d in g.docs.clone() {
                    if rng.gen::<f64>() < p {
                        cells.push((u, d, 1.0));
                    }
                }
            }
        }
        SparseCounts::from_triplets(self.n_users, self.n_docs, cells)
    }
}

/// Alphabetic name for word `i`, so generated text survives tokenization.
pub fn word_name(i: usize) -> String {
    let mut letters = Vec::new();
    let mut n = i;
    loop {
        letters.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    letters.reverse();
    format!("w{}", String::from_utf8(letters).expect("ascii"))
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    /// Generated document texts, when content was requested.
    pub texts: Option<Vec<String>>,
}

/// Generates the access matrix and, if requested, document content.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    let user_doc = spec.accesses(0)?;
    let users = (0..spec.n_users).map(|u| format!("u{u}")).collect();
    let documents = (0..spec.n_docs).map(|d| format!("d{d}")).collect();
    let Some(content) = spec.content else {
        let corpus = Corpus::new(
            users,
            documents,
            Vec::new(),
            user_doc,
            SparseCounts::zeros(spec.n_docs, 0),
        )?;
        return Ok(SyntheticData {
            corpus,
            texts: None,
        });
    };

    let v = content.vocab_per_group;
    let n_words = v * spec.groups.len();
    let vocabulary: Vec<String> = (0..n_words).map(word_name).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::MAX);
    let mut texts = vec![String::new(); spec.n_docs];
    let mut triplets = Vec::new();
    for (g, group) in spec.groups.iter().enumerate() {
        for d in group.docs.clone() {
            let tokens: Vec<usize> = (0..content.tokens_per_doc)
                .map(|_| g * v + rng.gen_range(0..v))
                .collect();
            texts[d] = tokens
                .iter()
                .map(|&w| vocabulary[w].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            triplets.extend(tokens.into_iter().map(|w| (d, w, 1.0)));
        }
    }
    let doc_word = SparseCounts::accumulate(spec.n_docs, n_words, triplets)?;
    Ok(SyntheticData {
        corpus: Corpus::new(users, documents, vocabulary, user_doc, doc_word)?,
        texts: Some(texts),
    })
}

/// A test access matrix of the same density, drawn independently of the
/// training draw in [`generate`].
pub fn generate_test(spec: &SyntheticSpec) -> Result<SparseCounts> {
    spec.accesses(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverfitConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub min_ll_gain: f64,
}

impl Default for OverfitConfig {
    fn default() -> Self {
        OverfitConfig {
            k: 3,
            restarts: 50,
            max_iters: 100,
            min_ll_gain: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverfitPoint {
    pub density: f64,
    pub mean_overfit_iteration: f64,
    /// Overfit iteration of every restart; `max_iters` if it never overfit.
    pub per_restart: Vec<usize>,
}

/// For each density, draws a training and an equally dense test set, trains
/// an untempered two-way model from `restarts` random starts validating on
/// the test set, and averages the iteration at which test log-likelihood
/// first fell.
pub fn overfit_experiment(
    template: &SyntheticSpec,
    densities: &[f64],
    config: &OverfitConfig,
) -> Result<Vec<OverfitPoint>> {
    if config.restarts == 0 {
        return Err(Error::param("restarts must be at least 1"));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(template.seed);
    densities
        .iter()
        .map(|&density| {
            let spec = SyntheticSpec {
                density,
                seed: seeds.next_u64(),
                content: None,
                ..template.clone()
            };
            let train = ObservationSet::two_way(spec.accesses(0)?);
            let test = ObservationSet::two_way(generate_test(&spec)?);
            let restart_seed = seeds.next_u64();
            let per_restart = (0..config.restarts)
                .into_par_iter()
                .map(|r| {
                    let train_config = TrainConfig {
                        k: config.k,
                        max_iters: config.max_iters,
                        restarts: 1,
                        seed: restart_seed.wrapping_add(r as u64),
                        tempered: false,
                        min_ll_gain: config.min_ll_gain,
                        ..TrainConfig::default()
                    };
                    let out = train_with_validation(&train, &test, &train_config)?;
                    Ok(out.trace.overfit_iteration.unwrap_or(config.max_iters))
                })
                .collect::<Result<Vec<usize>>>()?;
            let mean = per_restart.iter().sum::<usize>() as f64 / per_restart.len() as f64;
            Ok(OverfitPoint {
                density,
                mean_overfit_iteration: mean,
                per_restart,
            })
        })
        .collect()
}

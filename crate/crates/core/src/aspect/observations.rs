use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelDims, ModelKind};
use crate::error::{Error, Result};
use crate::sparse::SparseCounts;

/// Weighted observations for one model kind.
///
/// Three-way observations are never materialised: the weight of `(u, d, w)`
/// is `n(u, d) · n(d, w)` and the triples are enumerated by pairing each
/// nonzero `(u, d)` with the nonzero `(d, w)` of that document.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationSet {
    /// users × documents
    TwoWay(SparseCounts),
    ThreeWay {
        user_doc: SparseCounts,
        doc_word: SparseCounts,
    },
    /// users × words
    UserWords(SparseCounts),
}

impl ObservationSet {
    pub fn two_way(user_doc: SparseCounts) -> Self {
        ObservationSet::TwoWay(user_doc)
    }

    pub fn three_way(user_doc: SparseCounts, doc_word: SparseCounts) -> Result<Self> {
        if user_doc.n_cols() != doc_word.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "user_doc has {} documents, doc_word has {}",
                user_doc.n_cols(),
                doc_word.n_rows()
            )));
        }
        Ok(ObservationSet::ThreeWay { user_doc, doc_word })
    }

    /// `n(u, w) = Σ_d n(u, d) · n(d, w)`.
    pub fn user_words(user_doc: &SparseCounts, doc_word: &SparseCounts) -> Result<Self> {
        Ok(ObservationSet::UserWords(user_doc.matmul(doc_word)?))
    }

    /// Observations for `kind` from a corpus's two matrices. Content-based
    /// kinds need a non-empty vocabulary.
    pub fn for_kind(
        kind: ModelKind,
        user_doc: &SparseCounts,
        doc_word: &SparseCounts,
    ) -> Result<Self> {
        if kind.has_words() && doc_word.n_cols() == 0 {
            return Err(Error::param(format!(
                "{kind} model needs document text, but the vocabulary is empty"
            )));
        }
        match kind {
            ModelKind::TwoWay => Ok(Self::two_way(user_doc.clone())),
            ModelKind::ThreeWay => Self::three_way(user_doc.clone(), doc_word.clone()),
            ModelKind::UserWords => Self::user_words(user_doc, doc_word),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ObservationSet::TwoWay(_) => ModelKind::TwoWay,
            ObservationSet::ThreeWay { .. } => ModelKind::ThreeWay,
            ObservationSet::UserWords(_) => ModelKind::UserWords,
        }
    }

    pub fn dims(&self) -> ModelDims {
        match self {
            ObservationSet::TwoWay(m) => ModelDims {
                users: m.n_rows(),
                docs: m.n_cols(),
                words: 0,
            },
            ObservationSet::ThreeWay { user_doc, doc_word } => ModelDims {
                users: user_doc.n_rows(),
                docs: user_doc.n_cols(),
                words: doc_word.n_cols(),
            },
            ObservationSet::UserWords(m) => ModelDims {
                users: m.n_rows(),
                docs: 0,
                words: m.n_cols(),
            },
        }
    }

    pub(crate) fn n_users(&self) -> usize {
        self.primary().n_rows()
    }

    /// The matrix whose rows are users.
    fn primary(&self) -> &SparseCounts {
        match self {
            ObservationSet::TwoWay(m) | ObservationSet::UserWords(m) => m,
            ObservationSet::ThreeWay { user_doc, .. } => user_doc,
        }
    }

    fn with_primary(&self, m: SparseCounts) -> ObservationSet {
        match self {
            ObservationSet::TwoWay(_) => ObservationSet::TwoWay(m),
            ObservationSet::UserWords(_) => ObservationSet::UserWords(m),
            ObservationSet::ThreeWay { doc_word, .. } => ObservationSet::ThreeWay {
                user_doc: m,
                doc_word: doc_word.clone(),
            },
        }
    }

    /// Weight of each stored cell of the primary matrix, in row-major order.
    fn cell_weights(&self) -> Vec<f64> {
        match self {
            ObservationSet::TwoWay(m) | ObservationSet::UserWords(m) => {
                m.iter().map(|(_, _, v)| v).collect()
            }
            ObservationSet::ThreeWay { user_doc, doc_word } => {
                let lengths = doc_word.row_sums();
                user_doc.iter().map(|(_, d, v)| v * lengths[d]).collect()
            }
        }
    }

    /// Total observation weight `Σ n`.
    pub fn total_weight(&self) -> f64 {
        self.cell_weights().iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_weights().iter().all(|&w| w == 0.0)
    }

    /// Splits off roughly `fraction` of the observation weight as a validation
    /// set. Cells of the user-indexed matrix are shuffled with `seed` and moved
    /// to validation until the held-out weight reaches the target; a
    /// three-way cell `(u, d)` carries all of its words with it.
    pub fn holdout(&self, fraction: f64, seed: u64) -> Result<(ObservationSet, ObservationSet)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::param(format!("holdout fraction {fraction} outside (0, 1)")));
        }
        let primary = self.primary();
        let cells: Vec<(usize, usize, f64)> = primary.iter().collect();
        let weights = self.cell_weights();
        let target = fraction * weights.iter().sum::<f64>();
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut held = vec![false; cells.len()];
        let mut held_weight = 0.0;
        for i in order {
            if held_weight >= target {
                break;
            }
            held[i] = true;
            held_weight += weights[i];
        }
        let pick = |keep_held: bool| {
            SparseCounts::from_triplets(
                primary.n_rows(),
                primary.n_cols(),
                cells
                    .iter()
                    .zip(&held)
                    .filter(|(_, &h)| h == keep_held)
                    .map(|(&c, _)| c),
            )
            .expect("cells come from a valid matrix")
        };
        let train = self.with_primary(pick(false));
        if train.is_empty() {
            return Err(Error::EmptyTraining);
        }
        Ok((train, self.with_primary(pick(true))))
    }

    /// Drops every observation involving a user, document or word that has no
    /// weight in `train`; a model fitted on `train` assigns such observations
    /// zero probability. Returns the restricted set and the weight dropped.
    pub fn restricted_to_support(&self, train: &ObservationSet) -> Result<(ObservationSet, f64)> {
        if self.kind() != train.kind() || self.dims() != train.dims() {
            return Err(Error::DimensionMismatch(
                "validation and training observations differ in kind or shape".into(),
            ));
        }
        let before = self.total_weight();
        let restricted = match (self, train) {
            (ObservationSet::TwoWay(m), ObservationSet::TwoWay(t))
            | (ObservationSet::UserWords(m), ObservationSet::UserWords(t)) => {
                let rows = positive(&t.row_sums());
                let cols = positive(&t.col_sums());
                self.with_primary(keep_cells(m, &rows, &cols))
            }
            (
                ObservationSet::ThreeWay { user_doc, doc_word },
                ObservationSet::ThreeWay {
                    user_doc: train_ud,
                    doc_word: train_dw,
                },
            ) => {
                let lengths = train_dw.row_sums();
                let mut user_mass = vec![0.0; train_ud.n_rows()];
                let mut doc_mass = vec![0.0; train_ud.n_cols()];
                for (u, d, v) in train_ud.iter() {
                    user_mass[u] += v * lengths[d];
                    doc_mass[d] += v * lengths[d];
                }
                let word_mass = train_ud.col_sums().iter().enumerate().fold(
                    vec![0.0; train_dw.n_cols()],
                    |mut acc, (d, &n)| {
                        if n > 0.0 {
                            for (w, c) in train_dw.row_iter(d) {
                                acc[w] += n * c;
                            }
                        }
                        acc
                    },
                );
                let unsupported_words: Vec<bool> = word_mass.iter().map(|&m| m <= 0.0).collect();
                ObservationSet::ThreeWay {
                    user_doc: keep_cells(user_doc, &positive(&user_mass), &positive(&doc_mass)),
                    doc_word: doc_word.without_cols(&unsupported_words),
                }
            }
            _ => unreachable!("kinds checked above"),
        };
        let dropped = before - restricted.total_weight();
        Ok((restricted, dropped.max(0.0)))
    }
}

fn positive(mass: &[f64]) -> Vec<bool> {
    mass.iter().map(|&m| m > 0.0).collect()
}

fn keep_cells(m: &SparseCounts, rows: &[bool], cols: &[bool]) -> SparseCounts {
    SparseCounts::from_triplets(
        m.n_rows(),
        m.n_cols(),
        m.iter().filter(|&(r, c, _)| rows[r] && cols[c]),
    )
    .expect("cells come from a valid matrix")
}

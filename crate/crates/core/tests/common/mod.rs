//! Shared fixtures: random small instances and a dense, loop-by-loop EM
//! written independently of the library's sparse implementation.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use aspect_rec::aspect::{score_documents, train, AspectModel, ModelDims, ModelKind, ObservationSet, TrainConfig};
use aspect_rec::SparseCounts;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small random instance with dense count arrays alongside the sparse ones.
#[derive(Debug, Clone)]
pub struct Instance {
    pub kind: ModelKind,
    pub k: usize,
    pub user_doc: Vec<Vec<f64>>,
    pub doc_word: Vec<Vec<f64>>,
}

fn dense_random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fill: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    if rng.gen::<f64>() < fill {
                        rng.gen_range(1..=3) as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

pub fn to_sparse(dense: &[Vec<f64>], cols: usize) -> SparseCounts {
    let cells = dense
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().filter(|(_, v)| **v > 0.0).map(move |(c, &v)| (r, c, v)));
    SparseCounts::from_triplets(dense.len(), cols, cells).unwrap()
}

impl Instance {
    /// Up to 10 users, documents and words and up to 4 classes; never empty.
    pub fn random(kind: ModelKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let users = rng.gen_range(1..=10);
            let docs = rng.gen_range(1..=10);
            let words = rng.gen_range(1..=10);
            let k = rng.gen_range(1..=4);
            let fill = rng.gen_range(0.2..0.8);
            let inst = Instance {
                kind,
                k,
                user_doc: dense_random(&mut rng, users, docs, fill),
                doc_word: dense_random(&mut rng, docs, words, fill),
            };
            if inst.observations().total_weight() > 0.0 {
                return inst;
            }
        }
    }

    pub fn users(&self) -> usize {
        self.user_doc.len()
    }

    pub fn docs(&self) -> usize {
        self.doc_word.len()
    }

    pub fn words(&self) -> usize {
        self.doc_word[0].len()
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            users: self.users(),
            docs: if self.kind.has_documents() { self.docs() } else { 0 },
            words: if self.kind.has_words() { self.words() } else { 0 },
        }
    }

    pub fn observations(&self) -> ObservationSet {
        let ud = to_sparse(&self.user_doc, self.docs());
        let dw = to_sparse(&self.doc_word, self.words());
        ObservationSet::for_kind(self.kind, &ud, &dw).unwrap()
    }

    /// Every `(u, d, w)` with its weight; `None` stands for an absent index.
    pub fn dense_observations(&self) -> Vec<(usize, Option<usize>, Option<usize>, f64)> {
        let mut out = Vec::new();
        for u in 0..self.users() {
            match self.kind {
                ModelKind::TwoWay => {
                    for d in 0..self.docs() {
                        out.push((u, Some(d), None, self.user_doc[u][d]));
                    }
                }
                ModelKind::ThreeWay => {
                    for d in 0..self.docs() {
                        for w in 0..self.words() {
                            out.push((u, Some(d), Some(w), self.user_doc[u][d] * self.doc_word[d][w]));
                        }
                    }
                }
                ModelKind::UserWords => {
                    for w in 0..self.words() {
                        let n: f64 = (0..self.docs()).map(|d| self.user_doc[u][d] * self.doc_word[d][w]).sum();
                        out.push((u, None, Some(w), n));
                    }
                }
            }
        }
        out.retain(|o| o.3 > 0.0);
        out
    }
}

/// Plain-array model parameters: `pu[u][z]`, `pd[d][z]`, `pw[w][z]`.
#[derive(Debug, Clone)]
pub struct DenseModel {
    pub pz: Vec<f64>,
    pub pu: Vec<Vec<f64>>,
    pub pd: Vec<Vec<f64>>,
    pub pw: Vec<Vec<f64>>,
}

fn table_rows(t: Option<&aspect_rec::aspect::ConditionalTable>) -> Vec<Vec<f64>> {
    t.map_or_else(Vec::new, |t| (0..t.rows()).map(|r| t.row(r).to_vec()).collect())
}

impl DenseModel {
    pub fn of(m: &AspectModel) -> Self {
        DenseModel {
            pz: m.pz().to_vec(),
            pu: table_rows(Some(m.pu_z())),
            pd: table_rows(m.pd_z()),
            pw: table_rows(m.pw_z()),
        }
    }

    fn component(&self, z: usize, u: usize, d: Option<usize>, w: Option<usize>) -> f64 {
        let mut p = self.pz[z] * self.pu[u][z];
        if let Some(d) = d {
            p *= self.pd[d][z];
        }
        if let Some(w) = w {
            p *= self.pw[w][z];
        }
        p
    }

    pub fn log_likelihood(&self, obs: &[(usize, Option<usize>, Option<usize>, f64)]) -> f64 {
        obs.iter()
            .map(|&(u, d, w, n)| {
                let p: f64 = (0..self.pz.len()).map(|z| self.component(z, u, d, w)).sum();
                n * p.ln()
            })
            .sum()
    }

    /// One (tempered) EM step by direct enumeration.
    pub fn em_step(&self, obs: &[(usize, Option<usize>, Option<usize>, f64)], beta: f64) -> DenseModel {
        let k = self.pz.len();
        let zeros = |rows: usize| vec![vec![0.0; k]; rows];
        let mut next = DenseModel {
            pz: vec![0.0; k],
            pu: zeros(self.pu.len()),
            pd: zeros(self.pd.len()),
            pw: zeros(self.pw.len()),
        };
        for &(u, d, w, n) in obs {
            let raw: Vec<f64> = (0..k).map(|z| self.component(z, u, d, w).powf(beta)).collect();
            let total: f64 = raw.iter().sum();
            for z in 0..k {
                let r = n * raw[z] / total;
                next.pz[z] += r;
                next.pu[u][z] += r;
                if let Some(d) = d {
                    next.pd[d][z] += r;
                }
                if let Some(w) = w {
                    next.pw[w][z] += r;
                }
            }
        }
        for table in [&mut next.pu, &mut next.pd, &mut next.pw] {
            for z in 0..k {
                let s: f64 = table.iter().map(|row| row[z]).sum();
                for row in table.iter_mut() {
                    row[z] /= s;
                }
            }
        }
        let total: f64 = next.pz.iter().sum();
        next.pz.iter_mut().for_each(|p| *p /= total);
        next
    }

    pub fn max_abs_diff(&self, other: &DenseModel) -> f64 {
        let flat = |m: &DenseModel| -> Vec<f64> {
            let mut v = m.pz.clone();
            for t in [&m.pu, &m.pd, &m.pw] {
                v.extend(t.iter().flatten());
            }
            v
        };
        flat(self)
            .iter()
            .zip(flat(other))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Utility computed straight from the definition, with `powf`.
pub fn oracle_r(rankings: &BTreeMap<usize, Vec<usize>>, tests: &BTreeMap<usize, BTreeSet<usize>>, alpha: f64) -> f64 {
    let weight = |j: usize| 1.0 / 2f64.powf((j as f64 - 1.0) / (alpha - 1.0));
    let mut num = 0.0;
    let mut den = 0.0;
    for (u, test) in tests {
        if let Some(ranked) = rankings.get(u) {
            for (pos, d) in ranked.iter().enumerate() {
                if test.contains(d) {
                    num += weight(pos + 1);
                }
            }
        }
        for j in 1..=test.len() {
            den += weight(j);
        }
    }
    if den == 0.0 {
        0.0
    } else {
        100.0 * num / den
    }
}


pub fn random_access(seed: u64) -> SparseCounts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (users, docs) = (rng.gen_range(2..12), rng.gen_range(2..12));
    let mut cells = vec![(0, 0, 1.0)];
    for u in 0..users {
        for d in 0..docs {
            if (u, d) != (0, 0) && rng.gen_bool(0.4) {
                cells.push((u, d, rng.gen_range(1..4) as f64));
            }
        }
    }
    SparseCounts::from_triplets(users, docs, cells).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}


/// Largest parameter or score difference between two-way and single-word
/// three-way training on the instance drawn from `seed`.
pub fn reduction_gap(seed: u64) -> f64 {
    let user_doc = random_access(seed);
    let one_word = SparseCounts::from_triplets(
        user_doc.n_cols(),
        1,
        (0..user_doc.n_cols()).map(|d| (d, 0, 1.0)),
    )
    .unwrap();
    let config = TrainConfig {
        k: 1 + (seed as usize % 4),
        max_iters: 30,
        restarts: 2,
        seed,
        ..TrainConfig::default()
    };
    let two = train(ModelKind::TwoWay, &ObservationSet::two_way(user_doc.clone()), &config).unwrap();
    let three_obs = ObservationSet::three_way(user_doc.clone(), one_word.clone()).unwrap();
    let three = train(ModelKind::ThreeWay, &three_obs, &config).unwrap();
    let (m2, m3) = (&two.model, &three.model);
    let mut gap = max_diff(m2.pz(), m3.pz())
        .max(max_diff(m2.pu_z().as_slice(), m3.pu_z().as_slice()))
        .max(max_diff(m2.pd_z().unwrap().as_slice(), m3.pd_z().unwrap().as_slice()));
    for u in 0..user_doc.n_rows() {
        let s2 = score_documents(m2, u, None, None).unwrap().scores;
        let s3 = score_documents(m3, u, Some(&one_word), None).unwrap().scores;
        gap = gap.max(max_diff(&s2, &s3));
    }
    gap
}

pub type RankCase = (BTreeMap<usize, Vec<usize>>, BTreeMap<usize, BTreeSet<usize>>, f64);

/// Random partial rankings and test sets for a handful of users.
pub fn random_rank_case(rng: &mut ChaCha8Rng) -> RankCase {
    let n_docs = rng.gen_range(1..40);
    let n_users = rng.gen_range(1..6);
    let alpha = rng.gen_range(1.5..10.0);
    let mut rankings = BTreeMap::new();
    let mut tests = BTreeMap::new();
    for u in 0..n_users {
        let mut docs: Vec<usize> = (0..n_docs).collect();
        docs.shuffle(rng);
        docs.truncate(rng.gen_range(0..=n_docs));
        rankings.insert(u, docs);
        let test: BTreeSet<usize> = (0..n_docs).filter(|_| rng.gen_bool(0.2)).collect();
        tests.insert(u, test);
    }
    (rankings, tests, alpha)
}

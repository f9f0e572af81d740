//! Similarity-based smoothing of the user-document matrix.
//!
//! A zero cell `(u, d)` is filled with an aggregate of the content similarity
//! between `d` and the documents `u` accessed, if that aggregate clears a
//! threshold. Observed cells are never touched.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::SparseCounts;
use crate::textproc::DocVector;

/// How pairwise similarities to a user's accessed documents are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Mean over all accessed documents; the threshold gates the mean.
    #[default]
    MeanAll,
    /// Mean over only the pairwise similarities at or above the threshold;
    /// the cell is filled if at least one pair qualifies.
    MeanAboveThreshold,
}

/// Inverted index over L2-normalised tf-idf vectors.
pub struct SimilarityIndex {
    n_docs: usize,
    unit: Vec<Vec<(usize, f64)>>,
    postings: Vec<Vec<(usize, f64)>>,
}

impl SimilarityIndex {
    pub fn new(vectors: &[DocVector]) -> Self {
        let n_words = vectors
            .iter()
            .flat_map(|v| v.weights.last().map(|&(w, _)| w + 1))
            .max()
            .unwrap_or(0);
        let mut postings = vec![Vec::new(); n_words];
        let mut unit = vec![Vec::new(); vectors.len()];
        for (d, v) in vectors.iter().enumerate() {
            if v.norm == 0.0 {
                continue;
            }
            unit[d] = v.weights.iter().map(|&(w, x)| (w, x / v.norm)).collect();
            for &(w, x) in &unit[d] {
                postings[w].push((d, x));
            }
        }
        SimilarityIndex {
            n_docs: vectors.len(),
            unit,
            postings,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Adds `cosine(doc, d)` into `out[d]` for every `d`, recording the
    /// indices that were touched.
    fn similarities_into(&self, doc: usize, out: &mut [f64], touched: &mut Vec<usize>) {
        for &(w, x) in &self.unit[doc] {
            for &(d, y) in &self.postings[w] {
                if out[d] == 0.0 {
                    touched.push(d);
                }
                out[d] += x * y;
            }
        }
    }

    /// Fill values for one user's zero cells, as `(doc, value)` sorted by doc.
    fn fills_for_user(
        &self,
        accessed: &[usize],
        threshold: f64,
        aggregation: Aggregation,
    ) -> Vec<(usize, f64)> {
        if accessed.is_empty() {
            return Vec::new();
        }
        let mut sum = vec![0.0; self.n_docs];
        let mut count = vec![0u32; self.n_docs];
        let mut row = vec![0.0; self.n_docs];
        let mut touched = Vec::new();
        let mut any = Vec::new();
        for &a in accessed {
            self.similarities_into(a, &mut row, &mut touched);
            for d in touched.drain(..) {
                let s = row[d].min(1.0);
                row[d] = 0.0;
                if s <= 0.0 {
                    continue;
                }
                if aggregation == Aggregation::MeanAboveThreshold && s < threshold {
                    continue;
                }
                if count[d] == 0 {
                    any.push(d);
                }
                sum[d] += s;
                count[d] += 1;
            }
        }
        any.sort_unstable();
        any.into_iter()
            .filter(|d| accessed.binary_search(d).is_err())
            .filter_map(|d| {
                let value = match aggregation {
                    Aggregation::MeanAll => sum[d] / accessed.len() as f64,
                    Aggregation::MeanAboveThreshold => sum[d] / count[d] as f64,
                };
                let value = value.min(1.0);
                (value > 0.0 && value >= threshold).then_some((d, value))
            })
            .collect()
    }
}

fn check_inputs(user_doc: &SparseCounts, index: &SimilarityIndex, threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::param(format!(
            "similarity threshold {threshold} outside [0, 1]"
        )));
    }
    if index.n_docs() != user_doc.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} document vectors for {} documents",
            index.n_docs(),
            user_doc.n_cols()
        )));
    }
    Ok(())
}

/// Smooths `user_doc` using tf-idf document vectors.
pub fn smooth(
    user_doc: &SparseCounts,
    vectors: &[DocVector],
    threshold: f64,
    aggregation: Aggregation,
) -> Result<SparseCounts> {
    smooth_with_index(user_doc, &SimilarityIndex::new(vectors), threshold, aggregation)
}

pub fn smooth_with_index(
    user_doc: &SparseCounts,
    index: &SimilarityIndex,
    threshold: f64,
    aggregation: Aggregation,
) -> Result<SparseCounts> {
    check_inputs(user_doc, index, threshold)?;
    let rows: Vec<Vec<(usize, f64)>> = (0..user_doc.n_rows())
        .into_par_iter()
        .map(|u| {
            let (accessed, _) = user_doc.row(u);
            let fills = index.fills_for_user(accessed, threshold, aggregation);
            merge_sorted(user_doc.row_iter(u), fills)
        })
        .collect();
    Ok(SparseCounts::from_sorted_rows(user_doc.n_cols(), rows))
}

fn merge_sorted(
    observed: impl Iterator<Item = (usize, f64)>,
    fills: Vec<(usize, f64)>,
) -> Vec<(usize, f64)> {
    let mut row: Vec<(usize, f64)> = observed.chain(fills).collect();
    row.sort_by_key(|&(c, _)| c);
    row
}

/// Density of the smoothed matrix at each threshold.
pub fn density_sweep(
    user_doc: &SparseCounts,
    vectors: &[DocVector],
    thresholds: &[f64],
    aggregation: Aggregation,
) -> Result<Vec<(f64, f64)>> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("thresholds must be sorted ascending"));
    }
    let index = SimilarityIndex::new(vectors);
    thresholds
        .iter()
        .map(|&t| Ok((t, smooth_with_index(user_doc, &index, t, aggregation)?.density())))
        .collect()
}

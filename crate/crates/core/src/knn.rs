//! User-based k-nearest-neighbour baseline.
//!
//! Users are compared by cosine similarity of their raw document-count rows.
//! A document's score is the similarity-weighted sum of the neighbours'
//! counts for it.

use crate::error::{Error, Result};
use crate::eval::rank_documents;
use crate::sparse::SparseCounts;

/// Cosine similarity of two sparse count rows; 0 if either is empty.
pub fn user_similarity(a: (&[usize], &[f64]), b: (&[usize], &[f64])) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a.1), norm(b.1));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.0.len() && j < b.0.len() {
        match a.0[i].cmp(&b.0[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a.1[i] * b.1[j];
                i += 1;
                j += 1;
            }
        }
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Neighbourhood search over a fixed user-document matrix.
pub struct KnnRecommender<'a> {
    user_doc: &'a SparseCounts,
    doc_users: SparseCounts,
}

impl<'a> KnnRecommender<'a> {
    pub fn new(user_doc: &'a SparseCounts) -> Self {
        KnnRecommender {
            user_doc,
            doc_users: user_doc.transpose(),
        }
    }

    /// Every other user ordered by similarity to `u`, most similar first, ties
    /// to the smaller index.
    pub fn neighbours(&self, u: usize) -> Vec<(usize, f64)> {
        let n = self.user_doc.n_rows();
        let mut sim = vec![0.0; n];
        let mut shares = vec![false; n];
        for (d, _) in self.user_doc.row_iter(u) {
            for (v, _) in self.doc_users.row_iter(d) {
                shares[v] = true;
            }
        }
        for v in (0..n).filter(|&v| shares[v] && v != u) {
            sim[v] = user_similarity(self.user_doc.row(u), self.user_doc.row(v));
        }
        let mut order: Vec<(usize, f64)> = (0..n).filter(|&v| v != u).map(|v| (v, sim[v])).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        order
    }

    /// Document scores from the first `k` entries of `neighbours`.
    pub fn scores(&self, neighbours: &[(usize, f64)], k: usize) -> Vec<f64> {
        let mut scores = vec![0.0; self.user_doc.n_cols()];
        for &(v, s) in neighbours.iter().take(k) {
            if s == 0.0 {
                continue;
            }
            for (d, n) in self.user_doc.row_iter(v) {
                scores[d] += s * n;
            }
        }
        scores
    }

    fn check_k(&self, k: usize) -> Result<()> {
        let n = self.user_doc.n_rows();
        if k == 0 || k >= n {
            return Err(Error::param(format!(
                "k = {k} must satisfy 1 <= k < {n} (number of users)"
            )));
        }
        Ok(())
    }

    /// Scores for all documents using the `k` nearest neighbours of `u`.
    pub fn score_user(&self, u: usize, k: usize) -> Result<Vec<f64>> {
        self.check_k(k)?;
        if u >= self.user_doc.n_rows() {
            return Err(Error::param(format!("user index {u} out of range")));
        }
        Ok(self.scores(&self.neighbours(u), k))
    }
}

/// All documents ranked for user `u`: by score descending, ties to the
/// smaller document index.
pub fn recommend_knn(user_doc: &SparseCounts, u: usize, k: usize) -> Result<Vec<(usize, f64)>> {
    let scores = KnnRecommender::new(user_doc).score_user(u, k)?;
    Ok(rank_documents(&scores, &[])
        .into_iter()
        .map(|d| (d, scores[d]))
        .collect())
}

use super::{AspectModel, ModelKind};
use crate::error::{Error, Result};
use crate::sparse::SparseCounts;

/// Per-document recommendation scores for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentScores {
    pub scores: Vec<f64>,
    /// Documents with no tokens; their score is 0. Only the user-words model
    /// produces these.
    pub empty_documents: Vec<usize>,
}

/// Scores every document for user `u`, proportional to `Pr(d|u)`.
///
/// Two-way and three-way models use `Σ_z Pr(z) Pr(u|z) Pr(d|z)`; summing the
/// three-way joint over words reduces to the same expression. The user-words
/// model scores a document by the geometric mean of `Pr(w|u)` over its tokens
/// (with multiplicity), computed in log space. `floor`, when given, is a
/// lower bound applied to `Pr(w|u)`; without it any token with `Pr(w|u) = 0`
/// zeroes the document's score.
pub fn score_documents(
    model: &AspectModel,
    u: usize,
    doc_word: Option<&SparseCounts>,
    floor: Option<f64>,
) -> Result<DocumentScores> {
    let dims = model.dims();
    if u >= dims.users {
        return Err(Error::param(format!(
            "user index {u} out of range (< {})",
            dims.users
        )));
    }
    let weights: Vec<f64> = model
        .pz()
        .iter()
        .zip(model.pu_z().row(u))
        .map(|(a, b)| a * b)
        .collect();

    if model.kind() != ModelKind::UserWords {
        let pd = model.pd_z().expect("model has Pr(d|z)");
        let scores = (0..pd.rows())
            .map(|d| weights.iter().zip(pd.row(d)).map(|(a, b)| a * b).sum())
            .collect();
        return Ok(DocumentScores {
            scores,
            empty_documents: Vec::new(),
        });
    }

    let doc_word = doc_word
        .ok_or_else(|| Error::param("user-words scoring needs the document-word matrix"))?;
    let pw = model.pw_z().expect("user-words model has Pr(w|z)");
    if doc_word.n_cols() != pw.rows() {
        return Err(Error::DimensionMismatch(format!(
            "document-word matrix has {} words, model has {}",
            doc_word.n_cols(),
            pw.rows()
        )));
    }
    let pu: f64 = weights.iter().sum();
    let log_pw_u: Vec<f64> = (0..pw.rows())
        .map(|w| {
            let joint: f64 = weights.iter().zip(pw.row(w)).map(|(a, b)| a * b).sum();
            let p = if pu > 0.0 { joint / pu } else { 0.0 };
            floor.map_or(p, |f| p.max(f)).ln()
        })
        .collect();

    let mut empty_documents = Vec::new();
    let scores = (0..doc_word.n_rows())
        .map(|d| {
            let (words, counts) = doc_word.row(d);
            let length: f64 = counts.iter().sum();
            if length == 0.0 {
                empty_documents.push(d);
                return 0.0;
            }
            let mut total = 0.0;
            for (&w, &n) in words.iter().zip(counts) {
                if log_pw_u[w] == f64::NEG_INFINITY {
                    return 0.0;
                }
                total += n * log_pw_u[w];
            }
            (total / length).exp()
        })
        .collect();
    Ok(DocumentScores {
        scores,
        empty_documents,
    })
}

//! Tokenization, tf-idf document vectors and cosine similarity.

use std::collections::HashSet;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::sparse::SparseCounts;

/// Lowercased maximal runs of alphabetic characters, in order.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Reads a stopword list, one word per line. Blank lines are ignored and words
/// are lowercased so they match tokenizer output.
pub fn read_stopwords<R: BufRead>(reader: R) -> Result<HashSet<String>> {
    let mut words = HashSet::new();
    for line in reader.lines() {
        let line = line?;
        let word = line.trim();
        if !word.is_empty() {
            words.insert(word.to_lowercase());
        }
    }
    Ok(words)
}

/// Number of documents containing each word.
pub fn document_frequencies(doc_word: &SparseCounts) -> Vec<usize> {
    let mut df = vec![0; doc_word.n_cols()];
    for (_, w, _) in doc_word.iter() {
        df[w] += 1;
    }
    df
}

/// `ln(|D| / df(w))`, with `|D|` the number of document rows.
pub fn idf(word: usize, doc_word: &SparseCounts) -> Result<f64> {
    if word >= doc_word.n_cols() {
        return Err(Error::AbsentWord(word));
    }
    let df = (0..doc_word.n_rows())
        .filter(|&d| doc_word.get(d, word) > 0.0)
        .count();
    if df == 0 {
        return Err(Error::AbsentWord(word));
    }
    Ok(idf_from_df(doc_word.n_rows(), df))
}

fn idf_from_df(n_docs: usize, df: usize) -> f64 {
    (n_docs as f64 / df as f64).ln()
}

/// Sparse tf-idf vector of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    pub document: usize,
    /// `(word, weight)` sorted by word; zero weights are not stored.
    pub weights: Vec<(usize, f64)>,
    pub norm: f64,
}

impl DocVector {
    pub fn new(document: usize, mut weights: Vec<(usize, f64)>) -> Self {
        weights.retain(|&(_, x)| x != 0.0);
        weights.sort_by_key(|&(w, _)| w);
        let norm = weights.iter().map(|&(_, x)| x * x).sum::<f64>().sqrt();
        DocVector {
            document,
            weights,
            norm,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.norm == 0.0
    }

    pub fn scaled(&self, factor: f64) -> DocVector {
        DocVector::new(
            self.document,
            self.weights.iter().map(|&(w, x)| (w, x * factor)).collect(),
        )
    }

    pub fn dot(&self, other: &DocVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut sum = 0.0;
        while i < self.weights.len() && j < other.weights.len() {
            let (wa, xa) = self.weights[i];
            let (wb, xb) = other.weights[j];
            match wa.cmp(&wb) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += xa * xb;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }
}

/// One tf-idf vector per document row.
pub fn tfidf_vectors(doc_word: &SparseCounts) -> Vec<DocVector> {
    let df = document_frequencies(doc_word);
    let n_docs = doc_word.n_rows();
    (0..n_docs)
        .map(|d| {
            let weights = doc_word
                .row_iter(d)
                .map(|(w, tf)| (w, tf * idf_from_df(n_docs, df[w])))
                .collect();
            DocVector::new(d, weights)
        })
        .collect()
}

/// Cosine similarity; 0 when either vector is empty.
pub fn cosine(a: &DocVector, b: &DocVector) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (a.norm * b.norm)).clamp(0.0, 1.0)
}

//! Real-valued sparse co-occurrence matrices.
//!
//! `SparseCounts` is stored in compressed sparse row form. Rows are sorted by
//! column index and only strictly positive values are stored, so a cell that
//! is absent is a zero.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCounts {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCounts {
    /// An all-zero matrix.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseCounts {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            cols: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triples. Duplicate cells are
    /// rejected.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for (row, col, value) in triplets {
            check_cell(n_rows, n_cols, row, col, value)?;
            rows[row].push((col, value));
        }
        for (row, entries) in rows.iter_mut().enumerate() {
            entries.sort_by_key(|&(c, _)| c);
            if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::DuplicateEntry { row, col: w[0].0 });
            }
        }
        Ok(Self::from_sorted_rows(n_cols, rows))
    }

    /// Builds a matrix by summing the values of repeated cells.
    pub fn accumulate<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_rows];
        for (row, col, value) in triplets {
            check_cell(n_rows, n_cols, row, col, value)?;
            *rows[row].entry(col).or_insert(0.0) += value;
        }
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().collect::<Vec<_>>())
            .collect();
        Ok(Self::from_sorted_rows(n_cols, rows))
    }

    /// Rows must already be sorted by column, duplicate free, in range and
    /// strictly positive.
    pub(crate) fn from_sorted_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n_rows = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                debug_assert!(c < n_cols && v > 0.0);
                cols.push(c);
                values.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseCounts {
            n_rows,
            n_cols,
            row_ptr,
            cols,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of stored (nonzero) cells.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[span.clone()], &self.values[span])
    }

    pub fn row_iter(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (c, v) = self.row(r);
        c.iter().copied().zip(v.iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if r >= self.n_rows {
            return 0.0;
        }
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    /// All stored cells in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row_iter(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|r| self.row(r).1.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols];
        for (c, v) in self.cols.iter().zip(&self.values) {
            sums[*c] += v;
        }
        sums
    }

    /// Fraction of nonzero cells; 0 for a matrix with no cells.
    pub fn density(&self) -> f64 {
        let cells = self.n_rows as f64 * self.n_cols as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.nnz() as f64 / cells
        }
    }

    pub fn transpose(&self) -> SparseCounts {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_cols];
        for (r, c, v) in self.iter() {
            rows[c].push((r, v));
        }
        Self::from_sorted_rows(self.n_rows, rows)
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &SparseCounts) -> Result<SparseCounts> {
        if self.n_cols != other.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut acc = vec![0.0; other.n_cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut rows = Vec::with_capacity(self.n_rows);
        for r in 0..self.n_rows {
            for (k, a) in self.row_iter(r) {
                for (c, b) in other.row_iter(k) {
                    if acc[c] == 0.0 {
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            let row = touched
                .drain(..)
                .map(|c| (c, std::mem::replace(&mut acc[c], 0.0)))
                .collect();
            rows.push(row);
        }
        Ok(Self::from_sorted_rows(other.n_cols, rows))
    }

    /// Keeps the listed rows and columns (in the given order) and reindexes.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> SparseCounts {
        let mut col_map = vec![usize::MAX; self.n_cols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let kept = rows
            .iter()
            .map(|&r| {
                let mut row: Vec<(usize, f64)> = self
                    .row_iter(r)
                    .filter(|&(c, _)| col_map[c] != usize::MAX).map(|(c, v)| (col_map[c], v))
                    .collect();
                row.sort_by_key(|&(c, _)| c);
                row
            })
            .collect();
        Self::from_sorted_rows(cols.len(), kept)
    }

    /// Same matrix with extra empty rows/columns appended.
    pub fn resized(&self, n_rows: usize, n_cols: usize) -> SparseCounts {
        assert!(n_rows >= self.n_rows && n_cols >= self.n_cols);
        let mut row_ptr = self.row_ptr.clone();
        row_ptr.resize(n_rows + 1, self.values.len());
        SparseCounts {
            n_rows,
            n_cols,
            row_ptr,
            cols: self.cols.clone(),
            values: self.values.clone(),
        }
    }

    /// Drops the given columns (sets them to zero).
    pub fn without_cols(&self, drop: &[bool]) -> SparseCounts {
        let rows = (0..self.n_rows)
            .map(|r| self.row_iter(r).filter(|&(c, _)| !drop[c]).collect())
            .collect();
        Self::from_sorted_rows(self.n_cols, rows)
    }
}

fn check_cell(n_rows: usize, n_cols: usize, row: usize, col: usize, value: f64) -> Result<()> {
    if row >= n_rows || col >= n_cols {
        return Err(Error::IndexOutOfBounds {
            row,
            col,
            n_rows,
            n_cols,
        });
    }
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::InvalidValue { row, col, value });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_of_small_matrices() {
        let m = SparseCounts::from_triplets(2, 2, [(0, 1, 1.0)]).unwrap();
        assert_eq!(m.density(), 0.25);
        assert_eq!(SparseCounts::zeros(0, 0).density(), 0.0);
        let full =
            SparseCounts::from_triplets(2, 2, [(0, 0, 1.), (0, 1, 1.), (1, 0, 1.), (1, 1, 1.)])
                .unwrap();
        assert_eq!(full.density(), 1.0);
    }

    #[test]
    fn rejects_bad_cells() {
        assert!(matches!(
            SparseCounts::from_triplets(1, 1, [(0, 1, 1.0)]),
            Err(Error::IndexOutOfBounds { .. })
        ));
        assert!(matches!(
            SparseCounts::from_triplets(1, 1, [(0, 0, 0.0)]),
            Err(Error::InvalidValue { .. })
        ));
        assert!(matches!(
            SparseCounts::from_triplets(1, 1, [(0, 0, 1.0), (0, 0, 2.0)]),
            Err(Error::DuplicateEntry { .. })
        ));
    }

    #[test]
    fn accumulate_sums_repeats() {
        let m = SparseCounts::accumulate(2, 2, [(0, 0, 1.0), (0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = SparseCounts::from_triplets(2, 3, [(0, 0, 1.), (0, 2, 2.), (1, 1, 3.)]).unwrap();
        let b = SparseCounts::from_triplets(3, 2, [(0, 1, 4.), (1, 0, 5.), (2, 1, 6.)]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.get(0, 1), 1. * 4. + 2. * 6.);
        assert_eq!(c.get(1, 0), 15.0);
        assert_eq!(c.get(1, 1), 0.0);
        assert_eq!(c.nnz(), 2);
    }

    #[test]
    fn restrict_and_transpose() {
        let a = SparseCounts::from_triplets(3, 3, [(0, 0, 1.), (1, 2, 2.), (2, 1, 3.)]).unwrap();
        let r = a.restrict(&[2, 1], &[2, 1]);
        assert_eq!(r.get(0, 1), 3.0);
        assert_eq!(r.get(1, 0), 2.0);
        assert_eq!(r.nnz(), 2);
        assert_eq!(a.transpose().get(2, 1), 2.0);
    }
}

//! Rank-scoring evaluation and linear trend fits.
//!
//! The utility of a ranked list for user `u` is
//! `R_u = Σ_j δ(u, j) / 2^((j - 1) / (α - 1))`, where `δ(u, j)` is 1 when the
//! item at rank `j` (from 1) was accessed by `u` in the test period and `α`
//! is the rank with a 50% chance of being viewed. `R_u^max` is the utility
//! of a list with all test items on top, and the aggregate score is
//! `R = 100 Σ R_u / Σ R_u^max`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::sparse::SparseCounts;

pub const DEFAULT_HALF_LIFE: f64 = 5.0;

/// Weight of rank `j` (1-based).
pub fn rank_weight(j: usize, alpha: f64) -> f64 {
    (-((j - 1) as f64) / (alpha - 1.0)).exp2()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("half-life {alpha} must exceed 1")))
    }
}

/// `(R_u, R_u^max)` for one user.
pub fn rank_score_user(
    ranked: &[usize],
    test_set: &BTreeSet<usize>,
    alpha: f64,
) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let mut seen = BTreeSet::new();
    let mut r = 0.0;
    for (i, &d) in ranked.iter().enumerate() {
        if !seen.insert(d) {
            return Err(Error::DuplicateRanked(d));
        }
        if test_set.contains(&d) {
            r += rank_weight(i + 1, alpha);
        }
    }
    Ok((r, max_utility(test_set.len(), alpha)))
}

/// Utility of a list with `n_test` test items at the top.
pub fn max_utility(n_test: usize, alpha: f64) -> f64 {
    (1..=n_test).map(|j| rank_weight(j, alpha)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserUtility {
    pub r: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub alpha: f64,
    pub per_user: BTreeMap<usize, UserUtility>,
    /// Aggregate score in `[0, 100]`.
    pub r: f64,
}

impl EvalReport {
    fn from_users(alpha: f64, per_user: BTreeMap<usize, UserUtility>) -> Self {
        let total: f64 = per_user.values().map(|u| u.r).sum();
        let total_max: f64 = per_user.values().map(|u| u.r_max).sum();
        let r = if total_max > 0.0 {
            // the ratio first, so a perfect ranking gives exactly 100
            100.0 * (total / total_max)
        } else {
            0.0
        };
        EvalReport { alpha, per_user, r }
    }

    /// One `user<TAB>R_u<TAB>R_u_max` line per user, then `R` and `alpha`
    /// footer lines.
    pub fn write_tsv<W: Write>(&self, mut out: W, user_names: &[String]) -> Result<()> {
        for (&u, util) in &self.per_user {
            let name = user_names.get(u).map_or_else(|| u.to_string(), Clone::clone);
            writeln!(out, "{name}\t{:?}\t{:?}", util.r, util.r_max)?;
        }
        writeln!(out, "R\t{:?}", self.r)?;
        writeln!(out, "alpha\t{:?}", self.alpha)?;
        Ok(())
    }
}

/// Aggregates per-user utilities. A test user without a ranked list is scored
/// as if the list were empty.
pub fn rank_score(
    recommendations: &BTreeMap<usize, Vec<usize>>,
    test: &BTreeMap<usize, BTreeSet<usize>>,
    alpha: f64,
) -> Result<EvalReport> {
    check_alpha(alpha)?;
    let mut per_user = BTreeMap::new();
    for (&u, test_set) in test {
        let ranked = recommendations.get(&u).map_or(&[][..], Vec::as_slice);
        let (r, r_max) = rank_score_user(ranked, test_set, alpha)?;
        per_user.insert(u, UserUtility { r, r_max });
    }
    Ok(EvalReport::from_users(alpha, per_user))
}

/// Document indices by score descending, ties to the smaller index, skipping
/// the sorted `exclude` list.
pub fn rank_documents(scores: &[f64], exclude: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len())
        .filter(|d| exclude.binary_search(d).is_err())
        .collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalProtocol {
    pub alpha: f64,
    /// Leave documents the user accessed in training out of both the
    /// candidate list and the test set.
    pub exclude_train: bool,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            alpha: DEFAULT_HALF_LIFE,
            exclude_train: true,
        }
    }
}

/// Test sets per user under `protocol`; users left with no test items are
/// omitted since they add nothing to either sum.
pub fn test_sets(
    train: &SparseCounts,
    test: &SparseCounts,
    protocol: &EvalProtocol,
) -> Result<BTreeMap<usize, BTreeSet<usize>>> {
    if train.n_rows() != test.n_rows() || train.n_cols() != test.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "train is {}x{}, test is {}x{}",
            train.n_rows(),
            train.n_cols(),
            test.n_rows(),
            test.n_cols()
        )));
    }
    Ok((0..test.n_rows())
        .filter_map(|u| {
            let set: BTreeSet<usize> = test
                .row(u)
                .0
                .iter()
                .copied()
                .filter(|&d| !protocol.exclude_train || train.get(u, d) == 0.0)
                .collect();
            (!set.is_empty()).then_some((u, set))
        })
        .collect())
}

/// Ranks documents for every user with test items using `scorer` and computes
/// the rank-scoring report.
pub fn evaluate<F>(
    train: &SparseCounts,
    test: &SparseCounts,
    protocol: &EvalProtocol,
    scorer: F,
) -> Result<EvalReport>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    check_alpha(protocol.alpha)?;
    let tests = test_sets(train, test, protocol)?;
    let users: Vec<usize> = tests.keys().copied().collect();
    let ranked: Vec<(usize, Vec<usize>)> = users
        .par_iter()
        .map(|&u| {
            let scores = scorer(u)?;
            if scores.len() != train.n_cols() {
                return Err(Error::DimensionMismatch(format!(
                    "{} scores for {} documents",
                    scores.len(),
                    train.n_cols()
                )));
            }
            let exclude: &[usize] = if protocol.exclude_train { train.row(u).0 } else { &[] };
            Ok((u, rank_documents(&scores, exclude)))
        })
        .collect::<Result<_>>()?;
    rank_score(&ranked.into_iter().collect(), &tests, protocol.alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendFit {
    pub slope: f64,
    pub intercept: f64,
    /// Two-sided p-value of the slope under the usual t-test with `n - 2`
    /// degrees of freedom.
    pub slope_p_value: f64,
}

/// Ordinary least squares line through `points`.
pub fn fit_linear_trend(points: &[(f64, f64)]) -> Result<TrendFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::param(format!("trend fit needs at least 3 points, got {n}")));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(Error::param("trend fit needs at least two distinct x values"));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let df = nf - 2.0;
    let se = (sse / df / sxx).sqrt();
    let slope_p_value = if se == 0.0 {
        if slope == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let t = (slope / se).abs();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::param(e.to_string()))?;
        (2.0 * dist.sf(t)).min(1.0)
    };
    Ok(TrendFit {
        slope,
        intercept,
        slope_p_value,
    })
}

//! EM and tempered EM training with validation tracking and restarts.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{em_iteration, log_likelihood, AspectModel, ModelKind, ObservationSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Number of latent classes.
    pub k: usize,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Lower `beta` by `eta` whenever validation likelihood drops.
    pub tempered: bool,
    pub eta: f64,
    pub beta_floor: f64,
    /// Share of observation weight held out for validation by [`train`].
    pub holdout_fraction: f64,
    /// Stop once the absolute change in training log-likelihood falls below
    /// this.
    pub min_ll_gain: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 10,
            max_iters: 100,
            restarts: 1,
            seed: 0,
            tempered: false,
            eta: 0.9,
            beta_floor: 0.6,
            holdout_fraction: 0.1,
            min_ll_gain: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::param(m));
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.max_iters == 0 {
            return fail("max_iters must be at least 1".into());
        }
        if self.restarts == 0 {
            return fail("restarts must be at least 1".into());
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return fail(format!("eta {} outside (0, 1)", self.eta));
        }
        if !(self.beta_floor > 0.0 && self.beta_floor <= 1.0) {
            return fail(format!("beta_floor {} outside (0, 1]", self.beta_floor));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return fail(format!(
                "holdout fraction {} outside (0, 1)",
                self.holdout_fraction
            ));
        }
        if self.min_ll_gain.is_nan() || self.min_ll_gain < 0.0 {
            return fail(format!("min_ll_gain {} is negative", self.min_ll_gain));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical text form of every field.
    pub fn digest(&self) -> String {
        let canonical = format!(
            "k={};max_iters={};restarts={};seed={};tempered={};eta={:?};beta_floor={:?};holdout={:?};min_ll_gain={:?}",
            self.k,
            self.max_iters,
            self.restarts,
            self.seed,
            self.tempered,
            self.eta,
            self.beta_floor,
            self.holdout_fraction,
            self.min_ll_gain
        );
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Seed used to initialise the parameters of restart `r`.
    pub fn restart_seed(&self, r: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let mut seed = rng.next_u64();
        for _ in 0..r {
            seed = rng.next_u64();
        }
        seed
    }

    fn holdout_seed(&self) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2);
        rng.next_u64()
    }
}

/// Log-likelihoods of the model after an iteration, and the inverse
/// temperature used to produce it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub train_ll: f64,
    pub valid_ll: f64,
    pub beta: f64,
}

/// Per-iteration history of one training run. Row 0 is the random initial
/// model; row `i` is the model after `i` EM updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub overfit_iteration: Option<usize>,
    /// Iteration (≥ 1) with the greatest validation log-likelihood.
    pub best_iteration: usize,
    pub restart: usize,
    pub seed: u64,
}

impl TrainTrace {
    pub fn valid_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.valid_ll).collect()
    }

    pub fn train_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.train_ll).collect()
    }

    pub fn best_valid_ll(&self) -> f64 {
        self.rows[self.best_iteration].valid_ll
    }

    /// Tab-separated `iter train_ll valid_ll beta` with a header line.
    pub fn write_tsv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iter\ttrain_ll\tvalid_ll\tbeta")?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(out, "{i}\t{:?}\t{:?}\t{:?}", r.train_ll, r.valid_ll, r.beta)?;
        }
        Ok(())
    }
}

/// Smallest `i ≥ 1` with `series[i] < series[i - 1]`.
pub fn first_decrease(series: &[f64]) -> Option<usize> {
    (1..series.len()).find(|&i| series[i] < series[i - 1])
}

/// First iteration at which validation log-likelihood strictly decreased.
pub fn detect_overfit(trace: &TrainTrace) -> Option<usize> {
    first_decrease(&trace.valid_series())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model at the best validation iteration of the selected restart.
    pub model: AspectModel,
    /// Trace of the selected restart.
    pub trace: TrainTrace,
    /// Traces of all restarts, in restart order.
    pub restarts: Vec<TrainTrace>,
}

/// Trains on `obs` after holding out `config.holdout_fraction` of its weight
/// for validation.
pub fn train(kind: ModelKind, obs: &ObservationSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if obs.kind() != kind {
        return Err(Error::KindMismatch {
            model: kind.name(),
            observations: obs.kind().name(),
        });
    }
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let (train_obs, valid_obs) = obs.holdout(config.holdout_fraction, config.holdout_seed())?;
    train_with_validation(&train_obs, &valid_obs, config)
}

/// Trains on `train_obs`, tracking log-likelihood on `valid_obs`. Validation
/// observations involving entities without training weight are ignored,
/// since every fitted model gives them probability zero.
///
/// Each restart runs EM from its own random start until `max_iters`, until
/// the training log-likelihood stops changing by `min_ll_gain`, or, when
/// tempered, until `beta` would fall below `beta_floor`. The restart with the
/// greatest best validation log-likelihood wins; if the validation set is
/// empty, the final training log-likelihood decides instead.
pub fn train_with_validation(
    train_obs: &ObservationSet,
    valid_obs: &ObservationSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let (valid_obs, _) = valid_obs.restricted_to_support(train_obs)?;
    let has_validation = !valid_obs.is_empty();

    let mut best: Option<(f64, AspectModel, TrainTrace)> = None;
    let mut traces = Vec::with_capacity(config.restarts);
    for restart in 0..config.restarts {
        let (model, trace) = run_restart(train_obs, &valid_obs, config, restart, has_validation)?;
        let score = if has_validation {
            trace.best_valid_ll()
        } else {
            trace.rows[trace.best_iteration].train_ll
        };
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, model, trace.clone()));
        }
        traces.push(trace);
    }
    let (_, model, trace) = best.expect("at least one restart");
    Ok(TrainOutcome {
        model,
        trace,
        restarts: traces,
    })
}

fn run_restart(
    train_obs: &ObservationSet,
    valid_obs: &ObservationSet,
    config: &TrainConfig,
    restart: usize,
    has_validation: bool,
) -> Result<(AspectModel, TrainTrace)> {
    let seed = config.restart_seed(restart);
    let mut model = AspectModel::random(train_obs.kind(), config.k, train_obs.dims(), seed)?;
    let mut beta = 1.0;
    let mut rows = vec![TraceRow {
        train_ll: log_likelihood(&model, train_obs)?.value,
        valid_ll: log_likelihood(&model, valid_obs)?.value,
        beta,
    }];
    let mut best: Option<(usize, AspectModel)> = None;

    for iter in 1..=config.max_iters {
        let (next, _) = em_iteration(&model, train_obs, beta)?;
        let row = TraceRow {
            train_ll: log_likelihood(&next, train_obs)?.value,
            valid_ll: log_likelihood(&next, valid_obs)?.value,
            beta,
        };
        let prev = rows[iter - 1];
        rows.push(row);
        model = next;

        let improves = match &best {
            None => true,
            Some((b, _)) if has_validation => row.valid_ll > rows[*b].valid_ll,
            Some(_) => true,
        };
        if improves {
            best = Some((iter, model.clone()));
        }

        if config.tempered && row.valid_ll < prev.valid_ll {
            let lowered = beta * config.eta;
            if lowered < config.beta_floor {
                break;
            }
            beta = lowered;
        }
        if (row.train_ll - prev.train_ll).abs() < config.min_ll_gain {
            break;
        }
    }

    let (best_iteration, best_model) = best.expect("max_iters is at least 1");
    let trace = TrainTrace {
        overfit_iteration: first_decrease(&rows.iter().map(|r| r.valid_ll).collect::<Vec<_>>()),
        rows,
        best_iteration,
        restart,
        seed,
    };
    Ok((best_model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseCounts;

    #[test]
    fn first_decrease_examples() {
        assert_eq!(first_decrease(&[-10.0, -8.0, -7.0, -7.5]), Some(3));
        assert_eq!(first_decrease(&[-10.0, -9.0, -8.0]), None);
        assert_eq!(first_decrease(&[-10.0, -11.0, -12.0]), Some(1));
        assert_eq!(first_decrease(&[-10.0, -10.0]), None);
        assert_eq!(first_decrease(&[-10.0]), None);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { k: 0, ..Default::default() },
            TrainConfig { eta: 1.0, ..Default::default() },
            TrainConfig { beta_floor: 0.0, ..Default::default() },
            TrainConfig { holdout_fraction: 1.0, ..Default::default() },
            TrainConfig { restarts: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn digest_tracks_fields() {
        let a = TrainConfig::default();
        let b = TrainConfig { eta: 0.8, ..a.clone() };
        assert_eq!(a.digest(), TrainConfig::default().digest());
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn restart_seeds_differ() {
        let c = TrainConfig::default();
        assert_ne!(c.restart_seed(0), c.restart_seed(1));
        assert_eq!(c.restart_seed(3), c.restart_seed(3));
    }

    fn block_counts() -> SparseCounts {
        let mut cells = Vec::new();
        for u in 0..6 {
            for d in 0..6 {
                if (u < 3) == (d < 3) && (u + d) % 4 != 0 {
                    cells.push((u, d, 1.0 + ((u * d) % 3) as f64));
                }
            }
        }
        SparseCounts::from_triplets(6, 6, cells).unwrap()
    }

    #[test]
    fn restart_selection_is_argmax_of_best_validation() {
        let obs = ObservationSet::two_way(block_counts());
        let config = TrainConfig {
            k: 2,
            restarts: 3,
            max_iters: 20,
            holdout_fraction: 0.2,
            ..Default::default()
        };
        let out = train(ModelKind::TwoWay, &obs, &config).unwrap();
        assert_eq!(out.restarts.len(), 3);
        let best = out
            .restarts
            .iter()
            .map(TrainTrace::best_valid_ll)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.trace.best_valid_ll(), best);
        assert!(out.model.invariant_violation(1e-9).is_none());
        for t in &out.restarts {
            assert_eq!(t.overfit_iteration, detect_overfit(t));
            assert!(t.best_iteration >= 1);
        }
    }

    #[test]
    fn tempering_lowers_beta_after_a_validation_drop() {
        let obs = ObservationSet::two_way(block_counts());
        let config = TrainConfig {
            k: 4,
            max_iters: 50,
            tempered: true,
            eta: 0.9,
            beta_floor: 0.5,
            holdout_fraction: 0.3,
            min_ll_gain: 0.0,
            ..Default::default()
        };
        let out = train(ModelKind::TwoWay, &obs, &config).unwrap();
        let rows = &out.trace.rows;
        for i in 2..rows.len() {
            let dropped = rows[i - 1].valid_ll < rows[i - 2].valid_ll;
            let expected = if dropped { rows[i - 1].beta * 0.9 } else { rows[i - 1].beta };
            assert!((rows[i].beta - expected).abs() < 1e-15, "row {i}");
            assert!(rows[i].beta >= 0.5);
        }
    }

    #[test]
    fn untempered_training_is_deterministic() {
        let obs = ObservationSet::two_way(block_counts());
        let config = TrainConfig { k: 2, restarts: 2, max_iters: 10, ..Default::default() };
        let a = train(ModelKind::TwoWay, &obs, &config).unwrap();
        let b = train(ModelKind::TwoWay, &obs, &config).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.restarts, b.restarts);
    }

    #[test]
    fn kind_mismatch_rejected() {
        let obs = ObservationSet::two_way(block_counts());
        assert!(train(ModelKind::UserWords, &obs, &TrainConfig::default()).is_err());
    }
}

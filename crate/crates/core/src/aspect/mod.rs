//! Latent-class aspect models over co-occurrence data.
//!
//! Three model kinds share one parameterisation: a class prior `Pr(z)` and
//! class-conditional tables for each observed entity.
//!
//! | kind         | observation | tables                              |
//! |--------------|-------------|-------------------------------------|
//! | `two_way`    | `(u, d)`    | `Pr(u|z)`, `Pr(d|z)`                |
//! | `three_way`  | `(u, d, w)` | `Pr(u|z)`, `Pr(d|z)`, `Pr(w|z)`     |
//! | `user_words` | `(u, w)`    | `Pr(u|z)`, `Pr(w|z)`                |
//!
//! Models are fitted with EM, optionally tempered, see [`train`].

mod em;
mod observations;
mod score;
mod snapshot;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use em::{em_iteration, log_likelihood, LogLikelihood};
pub use observations::ObservationSet;
pub use score::{score_documents, DocumentScores};
pub use snapshot::SnapshotMeta;
pub use train::{
    detect_overfit, first_decrease, train, train_with_validation, TraceRow, TrainConfig,
    TrainOutcome, TrainTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    TwoWay,
    ThreeWay,
    UserWords,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TwoWay => "two_way",
            ModelKind::ThreeWay => "three_way",
            ModelKind::UserWords => "user_words",
        }
    }

    pub fn has_documents(self) -> bool {
        self != ModelKind::UserWords
    }

    pub fn has_words(self) -> bool {
        self != ModelKind::TwoWay
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_way" => Ok(ModelKind::TwoWay),
            "three_way" => Ok(ModelKind::ThreeWay),
            "user_words" => Ok(ModelKind::UserWords),
            other => Err(Error::param(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Sizes of the entity sets a model is defined over. Unused sizes are 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub users: usize,
    pub docs: usize,
    pub words: usize,
}

/// `Pr(x|z)` for one entity type, stored row-major as `[x * k + z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    rows: usize,
    k: usize,
    data: Vec<f64>,
}

impl ConditionalTable {
    pub fn from_row_major(rows: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * k {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{k} table",
                data.len()
            )));
        }
        Ok(ConditionalTable { rows, k, data })
    }

    fn random(rows: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut data = vec![0.0; rows * k];
        for z in 0..k {
            for r in 0..rows {
                // (0, 1]
                data[r * k + z] = 1.0 - rng.gen::<f64>();
            }
        }
        let mut table = ConditionalTable { rows, k, data };
        table.normalize_columns();
        table
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.k..(r + 1) * self.k]
    }

    pub fn get(&self, r: usize, z: usize) -> f64 {
        self.data[r * self.k + z]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column_sum(&self, z: usize) -> f64 {
        (0..self.rows).map(|r| self.get(r, z)).sum()
    }

    /// Scales each column to sum to one; an all-zero column becomes uniform.
    fn normalize_columns(&mut self) {
        for z in 0..self.k {
            let sum = self.column_sum(z);
            for r in 0..self.rows {
                let x = &mut self.data[r * self.k + z];
                *x = if sum > 0.0 { *x / sum } else { 1.0 / self.rows as f64 };
            }
        }
    }
}

/// Inputs to [`AspectModel::posterior`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    UserDoc { user: usize, doc: usize },
    UserDocWord { user: usize, doc: usize, word: usize },
    UserWord { user: usize, word: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AspectModel {
    kind: ModelKind,
    pz: Vec<f64>,
    pu_z: ConditionalTable,
    pd_z: Option<ConditionalTable>,
    pw_z: Option<ConditionalTable>,
}

impl AspectModel {
    /// Random strictly positive parameters, deterministic in `seed`. Draws
    /// `Pr(z)`, then `Pr(u|z)`, `Pr(d|z)` and `Pr(w|z)` in that order, so kinds
    /// sharing a table prefix start from identical values for that prefix.
    pub fn random(kind: ModelKind, k: usize, dims: ModelDims, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("number of latent classes must be at least 1"));
        }
        let need_docs = kind.has_documents();
        let need_words = kind.has_words();
        if dims.users == 0 || (need_docs && dims.docs == 0) || (need_words && dims.words == 0) {
            return Err(Error::param(format!(
                "{kind} model needs positive dimensions, got {dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pz: Vec<f64> = (0..k).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let total: f64 = pz.iter().sum();
        pz.iter_mut().for_each(|p| *p /= total);
        let pu_z = ConditionalTable::random(dims.users, k, &mut rng);
        let pd_z = need_docs.then(|| ConditionalTable::random(dims.docs, k, &mut rng));
        let pw_z = need_words.then(|| ConditionalTable::random(dims.words, k, &mut rng));
        Ok(AspectModel {
            kind,
            pz,
            pu_z,
            pd_z,
            pw_z,
        })
    }

    /// Assembles a model from explicit parameters, validating all invariants
    /// to within `1e-9`.
    pub fn from_parts(
        kind: ModelKind,
        pz: Vec<f64>,
        pu_z: ConditionalTable,
        pd_z: Option<ConditionalTable>,
        pw_z: Option<ConditionalTable>,
    ) -> Result<Self> {
        if pd_z.is_some() != kind.has_documents() || pw_z.is_some() != kind.has_words() {
            return Err(Error::param(format!("wrong set of tables for a {kind} model")));
        }
        let model = AspectModel {
            kind,
            pz,
            pu_z,
            pd_z,
            pw_z,
        };
        if model.pz.is_empty() {
            return Err(Error::param("number of latent classes must be at least 1"));
        }
        for table in model.tables() {
            if table.k != model.k() {
                return Err(Error::DimensionMismatch("table class count differs from Pr(z)".into()));
            }
        }
        if let Some(problem) = model.invariant_violation(1e-9) {
            return Err(Error::param(problem));
        }
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.pz.len()
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            users: self.pu_z.rows,
            docs: self.pd_z.as_ref().map_or(0, |t| t.rows),
            words: self.pw_z.as_ref().map_or(0, |t| t.rows),
        }
    }

    pub fn pz(&self) -> &[f64] {
        &self.pz
    }

    pub fn pu_z(&self) -> &ConditionalTable {
        &self.pu_z
    }

    pub fn pd_z(&self) -> Option<&ConditionalTable> {
        self.pd_z.as_ref()
    }

    pub fn pw_z(&self) -> Option<&ConditionalTable> {
        self.pw_z.as_ref()
    }

    fn tables(&self) -> impl Iterator<Item = &ConditionalTable> {
        std::iter::once(&self.pu_z)
            .chain(self.pd_z.as_ref())
            .chain(self.pw_z.as_ref())
    }

    /// Describes the first broken invariant, if any: negative or non-finite
    /// entries, or a distribution not summing to one within `tol`.
    pub fn invariant_violation(&self, tol: f64) -> Option<String> {
        let bad = |x: &f64| !(x.is_finite() && *x >= 0.0);
        if self.pz.iter().any(bad) {
            return Some("Pr(z) has a negative or non-finite entry".into());
        }
        let total: f64 = self.pz.iter().sum();
        if (total - 1.0).abs() > tol {
            return Some(format!("Pr(z) sums to {total}"));
        }
        for (name, table) in ["Pr(u|z)", "Pr(d|z)", "Pr(w|z)"]
            .into_iter()
            .zip([Some(&self.pu_z), self.pd_z.as_ref(), self.pw_z.as_ref()])
            .filter_map(|(n, t)| t.map(|t| (n, t)))
        {
            if table.data.iter().any(bad) {
                return Some(format!("{name} has a negative or non-finite entry"));
            }
            for z in 0..self.k() {
                let s = table.column_sum(z);
                if (s - 1.0).abs() > tol {
                    return Some(format!("{name} column {z} sums to {s}"));
                }
            }
        }
        None
    }

    /// Untempered joint component `Pr(z) Pr(..|z)...` of one event, per class.
    fn joint_components(&self, event: Event, out: &mut [f64]) -> Result<()> {
        let users = self.pu_z.rows;
        let check = |i: usize, n: usize, what: &str| {
            if i < n {
                Ok(())
            } else {
                Err(Error::param(format!("{what} index {i} out of range (< {n})")))
            }
        };
        let missing = || Error::param(format!("event {event:?} does not fit a {} model", self.kind));
        check_event_kind(self.kind, event).map_err(|_| missing())?;
        let (user, doc, word) = match event {
            Event::UserDoc { user, doc } => (user, Some(doc), None),
            Event::UserDocWord { user, doc, word } => (user, Some(doc), Some(word)),
            Event::UserWord { user, word } => (user, None, Some(word)),
        };
        check(user, users, "user")?;
        out.copy_from_slice(&self.pz);
        for (z, o) in out.iter_mut().enumerate() {
            *o *= self.pu_z.get(user, z);
        }
        if let Some(d) = doc {
            let t = self.pd_z.as_ref().ok_or_else(missing)?;
            check(d, t.rows, "document")?;
            for (z, o) in out.iter_mut().enumerate() {
                *o *= t.get(d, z);
            }
        }
        if let Some(w) = word {
            let t = self.pw_z.as_ref().ok_or_else(missing)?;
            check(w, t.rows, "word")?;
            for (z, o) in out.iter_mut().enumerate() {
                *o *= t.get(w, z);
            }
        }
        Ok(())
    }

    /// Joint probability of one event, marginalised over classes.
    pub fn joint(&self, event: Event) -> Result<f64> {
        let mut buf = vec![0.0; self.k()];
        self.joint_components(event, &mut buf)?;
        Ok(buf.iter().sum())
    }

    /// E-step posterior `Pr(z|event)` with every factor raised to `beta`.
    pub fn posterior(&self, event: Event, beta: f64) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; self.k()];
        self.joint_components(event, &mut buf)?;
        em::temper_and_normalize(&mut buf, beta)
            .ok_or_else(|| Error::ZeroNormaliser(format!("{event:?}")))?;
        Ok(buf)
    }
}

fn check_event_kind(kind: ModelKind, event: Event) -> std::result::Result<(), ()> {
    match (kind, event) {
        (ModelKind::TwoWay, Event::UserDoc { .. })
        | (ModelKind::ThreeWay, Event::UserDocWord { .. })
        | (ModelKind::UserWords, Event::UserWord { .. }) => Ok(()),
        _ => Err(()),
    }
}

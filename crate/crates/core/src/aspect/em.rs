//! E and M steps.
//!
//! The E step visits observations user by user. Users are split into a fixed
//! number of contiguous chunks that are processed in parallel, and the chunk
//! totals are added in chunk order, so results do not depend on the number of
//! worker threads.

use std::ops::Range;

use rayon::prelude::*;

use super::{AspectModel, ConditionalTable, ObservationSet};
use crate::error::{Error, Result};
use crate::sparse::SparseCounts;

const CHUNKS: usize = 8;

/// `Σ n · ln Pr(observation)`. `value` is negative infinity when some
/// observation has zero probability; `zero_probability` counts those.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub zero_probability: usize,
}

impl LogLikelihood {
    pub fn is_finite(&self) -> bool {
        self.zero_probability == 0
    }
}

/// Raises each component to `beta` and normalises in place. Returns the
/// untempered sum, or `None` when the normaliser is zero or not finite.
pub(crate) fn temper_and_normalize(components: &mut [f64], beta: f64) -> Option<f64> {
    let joint: f64 = components.iter().sum();
    let norm = if beta == 1.0 {
        joint
    } else {
        components.iter_mut().for_each(|x| *x = x.powf(beta));
        components.iter().sum()
    };
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    components.iter_mut().for_each(|x| *x /= norm);
    Some(joint)
}

fn user_chunks(n_users: usize) -> Vec<Range<usize>> {
    let size = n_users.div_ceil(CHUNKS).max(1);
    (0..n_users)
        .step_by(size)
        .map(|start| start..(start + size).min(n_users))
        .collect()
}

fn check_kind(model: &AspectModel, obs: &ObservationSet) -> Result<()> {
    if model.kind() != obs.kind() {
        return Err(Error::KindMismatch {
            model: model.kind().name(),
            observations: obs.kind().name(),
        });
    }
    let (m, o) = (model.dims(), obs.dims());
    if m != o {
        return Err(Error::DimensionMismatch(format!(
            "model dimensions {m:?} differ from observation dimensions {o:?}"
        )));
    }
    Ok(())
}

/// The second (and, for three-way, third) table paired with `Pr(u|z)`.
fn partner_tables(model: &AspectModel) -> (&ConditionalTable, Option<&ConditionalTable>) {
    match (model.pd_z(), model.pw_z()) {
        (Some(d), w) => (d, w),
        (None, Some(w)) => (w, None),
        (None, None) => unreachable!("every model has a second table"),
    }
}

/// Fills `out[z] = Pr(z) Pr(u|z) Pr(x|z)`.
#[inline]
fn pair_components(pz: &[f64], pu: &[f64], px: &[f64], out: &mut [f64]) {
    for z in 0..out.len() {
        out[z] = pz[z] * pu[z] * px[z];
    }
}

pub fn log_likelihood(model: &AspectModel, obs: &ObservationSet) -> Result<LogLikelihood> {
    check_kind(model, obs)?;
    let k = model.k();
    let (second, third) = partner_tables(model);
    let parts: Vec<(f64, usize)> = user_chunks(obs.n_users())
        .into_par_iter()
        .map(|users| {
            let mut buf = vec![0.0; k];
            let mut base = vec![0.0; k];
            let (mut ll, mut zeros) = (0.0, 0usize);
            let mut add = |weight: f64, p: f64| {
                if p > 0.0 {
                    ll += weight * p.ln();
                } else {
                    zeros += 1;
                }
            };
            match obs {
                ObservationSet::TwoWay(m) | ObservationSet::UserWords(m) => {
                    for u in users {
                        for (x, n) in m.row_iter(u) {
                            pair_components(model.pz(), model.pu_z().row(u), second.row(x), &mut buf);
                            add(n, buf.iter().sum());
                        }
                    }
                }
                ObservationSet::ThreeWay { user_doc, doc_word } => {
                    let pw = third.expect("three-way model has Pr(w|z)");
                    for u in users {
                        for (d, n_ud) in user_doc.row_iter(u) {
                            pair_components(model.pz(), model.pu_z().row(u), second.row(d), &mut base);
                            for (w, n_dw) in doc_word.row_iter(d) {
                                let p: f64 = base.iter().zip(pw.row(w)).map(|(a, b)| a * b).sum();
                                add(n_ud * n_dw, p);
                            }
                        }
                    }
                }
            }
            (ll, zeros)
        })
        .collect();
    let zero_probability = parts.iter().map(|p| p.1).sum();
    let value = if zero_probability > 0 {
        f64::NEG_INFINITY
    } else {
        parts.iter().map(|p| p.0).sum()
    };
    Ok(LogLikelihood {
        value,
        zero_probability,
    })
}

/// Posterior-weighted totals gathered by one E-step chunk.
struct Totals {
    ll: f64,
    pz: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
    third: Vec<f64>,
}

impl Totals {
    fn zeros(k: usize, model: &AspectModel) -> Self {
        let dims = model.dims();
        let (second, third) = partner_tables(model);
        Totals {
            ll: 0.0,
            pz: vec![0.0; k],
            first: vec![0.0; dims.users * k],
            second: vec![0.0; second.rows() * k],
            third: vec![0.0; third.map_or(0, |t| t.rows()) * k],
        }
    }

    fn add(&mut self, other: &Totals) {
        self.ll += other.ll;
        for (a, b) in [
            (&mut self.pz, &other.pz),
            (&mut self.first, &other.first),
            (&mut self.second, &other.second),
            (&mut self.third, &other.third),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

fn zero_normaliser(what: String) -> Error {
    Error::ZeroNormaliser(what)
}

fn e_step_pairs(
    model: &AspectModel,
    second: &ConditionalTable,
    m: &SparseCounts,
    beta: f64,
    users: Range<usize>,
    totals: &mut Totals,
    label: &str,
) -> Result<()> {
    let k = model.k();
    let mut q = vec![0.0; k];
    for u in users {
        for (x, n) in m.row_iter(u) {
            pair_components(model.pz(), model.pu_z().row(u), second.row(x), &mut q);
            let joint = temper_and_normalize(&mut q, beta)
                .ok_or_else(|| zero_normaliser(format!("(user {u}, {label} {x})")))?;
            totals.ll += n * joint.ln();
            for z in 0..k {
                let r = n * q[z];
                totals.pz[z] += r;
                totals.first[u * k + z] += r;
                totals.second[x * k + z] += r;
            }
        }
    }
    Ok(())
}

fn e_step_triples(
    model: &AspectModel,
    user_doc: &SparseCounts,
    doc_word: &SparseCounts,
    beta: f64,
    users: Range<usize>,
    totals: &mut Totals,
) -> Result<()> {
    let k = model.k();
    let pd = model.pd_z().expect("three-way model has Pr(d|z)");
    let pw = model.pw_z().expect("three-way model has Pr(w|z)");
    let mut base = vec![0.0; k];
    let mut q = vec![0.0; k];
    let mut cell = vec![0.0; k];
    for u in users {
        for (d, n_ud) in user_doc.row_iter(u) {
            pair_components(model.pz(), model.pu_z().row(u), pd.row(d), &mut base);
            cell.iter_mut().for_each(|c| *c = 0.0);
            for (w, n_dw) in doc_word.row_iter(d) {
                for ((qz, b), p) in q.iter_mut().zip(&base).zip(pw.row(w)) {
                    *qz = b * p;
                }
                let joint = temper_and_normalize(&mut q, beta).ok_or_else(|| {
                    zero_normaliser(format!("(user {u}, document {d}, word {w})"))
                })?;
                let n = n_ud * n_dw;
                totals.ll += n * joint.ln();
                for z in 0..k {
                    let r = n * q[z];
                    cell[z] += r;
                    totals.third[w * k + z] += r;
                }
            }
            for z in 0..k {
                totals.pz[z] += cell[z];
                totals.first[u * k + z] += cell[z];
                totals.second[d * k + z] += cell[z];
            }
        }
    }
    Ok(())
}

fn table_from_totals(rows: usize, k: usize, data: Vec<f64>) -> ConditionalTable {
    let mut table = ConditionalTable::from_row_major(rows, k, data).expect("sized by model");
    table.normalize_columns();
    table
}

/// One EM update with inverse temperature `beta` (`beta = 1` is plain EM).
/// Returns the updated model and the log-likelihood of `model` on `obs`,
/// which the E step computes as a by-product.
pub fn em_iteration(
    model: &AspectModel,
    obs: &ObservationSet,
    beta: f64,
) -> Result<(AspectModel, f64)> {
    check_kind(model, obs)?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param(format!("inverse temperature {beta} outside (0, 1]")));
    }
    let k = model.k();
    let (second, _) = partner_tables(model);
    let chunk_totals: Vec<Totals> = user_chunks(obs.n_users())
        .into_par_iter()
        .map(|users| {
            let mut totals = Totals::zeros(k, model);
            match obs {
                ObservationSet::TwoWay(m) => {
                    e_step_pairs(model, second, m, beta, users, &mut totals, "document")?
                }
                ObservationSet::UserWords(m) => {
                    e_step_pairs(model, second, m, beta, users, &mut totals, "word")?
                }
                ObservationSet::ThreeWay { user_doc, doc_word } => {
                    e_step_triples(model, user_doc, doc_word, beta, users, &mut totals)?
                }
            }
            Ok(totals)
        })
        .collect::<Result<_>>()?;
    let mut totals = Totals::zeros(k, model);
    for chunk in &chunk_totals {
        totals.add(chunk);
    }

    let mass: f64 = totals.pz.iter().sum();
    if mass.is_nan() || mass <= 0.0 {
        return Err(Error::EmptyObservations);
    }
    let pz = totals.pz.iter().map(|&t| t / mass).collect();
    let dims = model.dims();
    let pu_z = table_from_totals(dims.users, k, totals.first);
    let (pd_z, pw_z) = match obs {
        ObservationSet::TwoWay(_) => (Some(table_from_totals(dims.docs, k, totals.second)), None),
        ObservationSet::UserWords(_) => (None, Some(table_from_totals(dims.words, k, totals.second))),
        ObservationSet::ThreeWay { .. } => (
            Some(table_from_totals(dims.docs, k, totals.second)),
            Some(table_from_totals(dims.words, k, totals.third)),
        ),
    };
    let updated = AspectModel {
        kind: model.kind(),
        pz,
        pu_z,
        pd_z,
        pw_z,
    };
    Ok((updated, totals.ll))
}

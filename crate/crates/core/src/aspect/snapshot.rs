//! Model snapshot format.
//!
//! ```text
//! aspect-rec model v1
//! kind <two_way|three_way|user_words>
//! k <K>
//! dims <users> <docs> <words>
//! seed <seed>
//! config <hex digest>
//! pz
//! <K values>
//! table pu_z <rows>
//! <K values per row>
//! table pd_z <rows>        (absent for user_words)
//! table pw_z <rows>        (absent for two_way)
//! ```
//!
//! Every value is written in scientific notation with 17 significant digits,
//! which reproduces the `f64` exactly on reading.

use std::io::{BufRead, Write};

use super::{AspectModel, ConditionalTable, ModelDims, ModelKind};
use crate::corpus::LineReader;
use crate::error::Result;

const MAGIC: &str = "aspect-rec model v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotMeta {
    pub seed: u64,
    pub config_digest: String,
}

fn write_values<W: Write>(out: &mut W, values: &[f64]) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            out.write_all(b" ")?;
        }
        write!(out, "{v:.16e}")?;
        first = false;
    }
    out.write_all(b"\n")?;
    Ok(())
}

impl AspectModel {
    pub fn write_snapshot<W: Write>(&self, mut out: W, meta: &SnapshotMeta) -> Result<()> {
        let dims = self.dims();
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "kind {}", self.kind)?;
        writeln!(out, "k {}", self.k())?;
        writeln!(out, "dims {} {} {}", dims.users, dims.docs, dims.words)?;
        writeln!(out, "seed {}", meta.seed)?;
        writeln!(out, "config {}", meta.config_digest)?;
        writeln!(out, "pz")?;
        write_values(&mut out, &self.pz)?;
        let tables = [("pu_z", Some(&self.pu_z)), ("pd_z", self.pd_z.as_ref()), ("pw_z", self.pw_z.as_ref())];
        for (name, table) in tables {
            if let Some(t) = table {
                writeln!(out, "table {name} {}", t.rows())?;
                for r in 0..t.rows() {
                    write_values(&mut out, t.row(r))?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(reader: R) -> Result<(AspectModel, SnapshotMeta)> {
        let mut lines = LineReader::new(reader);
        let magic = lines.next_line()?;
        if magic != MAGIC {
            return Err(lines.err(format!("bad header {magic:?}")));
        }
        let kind: ModelKind = single(&mut lines, "kind")?
            .parse()
            .map_err(|e| lines.err(format!("{e}")))?;
        let k: usize = {
            let s = single(&mut lines, "k")?;
            lines.parse(&s)?
        };
        let dims = {
            let f = lines.header("dims")?;
            if f.len() != 3 {
                return Err(lines.err("expected `dims users docs words`"));
            }
            ModelDims {
                users: lines.parse(&f[0])?,
                docs: lines.parse(&f[1])?,
                words: lines.parse(&f[2])?,
            }
        };
        let seed = {
            let s = single(&mut lines, "seed")?;
            lines.parse(&s)?
        };
        let config_digest = single(&mut lines, "config")?;
        lines.header("pz")?;
        let pz = read_values(&mut lines, k)?;
        let pu_z = read_table(&mut lines, "pu_z", dims.users, k)?;
        let pd_z = kind
            .has_documents()
            .then(|| read_table(&mut lines, "pd_z", dims.docs, k))
            .transpose()?;
        let pw_z = kind
            .has_words()
            .then(|| read_table(&mut lines, "pw_z", dims.words, k))
            .transpose()?;
        let model = AspectModel::from_parts(kind, pz, pu_z, pd_z, pw_z)
            .map_err(|e| lines.err(format!("{e}")))?;
        Ok((
            model,
            SnapshotMeta {
                seed,
                config_digest,
            },
        ))
    }
}

fn single<R: BufRead>(lines: &mut LineReader<R>, keyword: &str) -> Result<String> {
    let fields = lines.header(keyword)?;
    match fields.as_slice() {
        [v] => Ok(v.clone()),
        _ => Err(lines.err(format!("expected `{keyword} <value>`"))),
    }
}

fn read_values<R: BufRead>(lines: &mut LineReader<R>, k: usize) -> Result<Vec<f64>> {
    let line = lines.next_line()?;
    let values = line
        .split(' ')
        .map(|s| lines.parse::<f64>(s))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != k {
        return Err(lines.err(format!("expected {k} values, found {}", values.len())));
    }
    Ok(values)
}

fn read_table<R: BufRead>(
    lines: &mut LineReader<R>,
    name: &str,
    rows: usize,
    k: usize,
) -> Result<ConditionalTable> {
    let f = lines.header("table")?;
    if f.len() != 2 || f[0] != name || lines.parse::<usize>(&f[1])? != rows {
        return Err(lines.err(format!("expected `table {name} {rows}`")));
    }
    let mut data = Vec::with_capacity(rows * k);
    for _ in 0..rows {
        data.extend(read_values(lines, k)?);
    }
    ConditionalTable::from_row_major(rows, k, data)
}

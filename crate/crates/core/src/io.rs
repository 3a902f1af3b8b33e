//! Constellation files, the ELLPACK-style sparse store and CSV results.
//!
//! Files use 1-based row/column indices; everything in memory is 0-based.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grassmann::{Constellation, GrassmannPoint};
use crate::linalg::{CMatrix, C64};

/// Entries with magnitude at or below this count as structural zeros.
pub const SPARSITY_THRESHOLD: f64 = 1e-12;

/// Column slot of an empty row.
pub const EMPTY_SLOT: u32 = u32::MAX;

/// One `(column, value)` slot per row and codeword. Valid for disjoint-support
/// codewords, which have at most one nonzero per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseConstellationStore {
    t: usize,
    m: usize,
    s: usize,
    cardinality: usize,
    cols: Vec<u32>,
    vals: Vec<C64>,
}

impl SparseConstellationStore {
    pub fn t_slots(&self) -> usize {
        self.t
    }

    pub fn m_antennas(&self) -> usize {
        self.m
    }

    /// Populated rows per codeword.
    pub fn sparsity(&self) -> usize {
        self.s
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    /// Number of stored slots, `|𝒳|·T`.
    pub fn slot_count(&self) -> usize {
        self.cols.len()
    }

    pub fn populated_count(&self) -> usize {
        self.cols.iter().filter(|&&c| c != EMPTY_SLOT).count()
    }

    /// Column slots and values of codeword `i`, `T` entries each.
    pub fn codeword(&self, i: usize) -> (&[u32], &[C64]) {
        let r = i * self.t..(i + 1) * self.t;
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn densify(&self) -> Result<Constellation> {
        let points = (0..self.cardinality)
            .map(|i| {
                let (cols, vals) = self.codeword(i);
                let mut x = CMatrix::zeros(self.t, self.m);
                for (row, (&c, &v)) in cols.iter().zip(vals).enumerate() {
                    if c != EMPTY_SLOT {
                        x[(row, c as usize)] = v;
                    }
                }
                GrassmannPoint::new(x)
            })
            .collect::<Result<Vec<_>>>()?;
        Constellation::new(points)
    }
}

pub fn to_sparse_store(c: &Constellation) -> Result<SparseConstellationStore> {
    let (t, m) = (c.t_slots(), c.m_antennas());
    let mut cols = Vec::with_capacity(c.cardinality() * t);
    let mut vals = Vec::with_capacity(c.cardinality() * t);
    let mut s = None;
    for (i, p) in c.points().iter().enumerate() {
        let x = p.entries();
        let mut populated = 0;
        for row in 0..t {
            let mut slot = (EMPTY_SLOT, C64::new(0.0, 0.0));
            for col in 0..m {
                if x[(row, col)].norm() > SPARSITY_THRESHOLD {
                    if slot.0 != EMPTY_SLOT {
                        return Err(Error::NotSparse { codeword: i, row });
                    }
                    slot = (col as u32, x[(row, col)]);
                }
            }
            populated += usize::from(slot.0 != EMPTY_SLOT);
            cols.push(slot.0);
            vals.push(slot.1);
        }
        match s {
            None => s = Some(populated),
            Some(prev) if prev != populated => {
                return Err(Error::invalid(format!("codeword {i} has {populated} populated rows, expected {prev}")));
            }
            _ => {}
        }
    }
    Ok(SparseConstellationStore {
        t,
        m,
        s: s.unwrap_or(0),
        cardinality: c.cardinality(),
        cols,
        vals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageFormat {
    Dense,
    Ellpack,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Complex {
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Slot {
    /// 1-based column, `null` for an empty row.
    col: Option<u32>,
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Entries {
    /// Codeword, row, column.
    Dense(Vec<Vec<Vec<Complex>>>),
    /// Codeword, row.
    Ellpack(Vec<Vec<Slot>>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstellationFile {
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "M")]
    m: usize,
    cardinality: usize,
    format: StorageFormat,
    entries: Entries,
    #[serde(default)]
    provenance: Value,
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

impl ConstellationFile {
    fn from_constellation(c: &Constellation, format: StorageFormat) -> Result<Self> {
        let (t, m) = (c.t_slots(), c.m_antennas());
        let entries = match format {
            StorageFormat::Dense => Entries::Dense(
                c.points()
                    .iter()
                    .map(|p| {
                        (0..t)
                            .map(|r| (0..m).map(|k| p.entries()[(r, k)]).map(|z| Complex { re: z.re, im: z.im }).collect())
                            .collect()
                    })
                    .collect(),
            ),
            StorageFormat::Ellpack => {
                let store = to_sparse_store(c)?;
                Entries::Ellpack(
                    (0..store.cardinality())
                        .map(|i| {
                            let (cols, vals) = store.codeword(i);
                            cols.iter()
                                .zip(vals)
                                .map(|(&col, v)| Slot {
                                    col: (col != EMPTY_SLOT).then_some(col + 1),
                                    re: v.re,
                                    im: v.im,
                                })
                                .collect()
                        })
                        .collect(),
                )
            }
        };
        Ok(Self {
            t,
            m,
            cardinality: c.cardinality(),
            format,
            entries,
            provenance: c.provenance.clone(),
        })
    }

    fn into_constellation(self) -> Result<Constellation> {
        let (t, m) = (self.t, self.m);
        let matrices: Vec<CMatrix> = match (self.format, self.entries) {
            (StorageFormat::Dense, Entries::Dense(words)) => words
                .into_iter()
                .map(|rows| {
                    if rows.len() != t || rows.iter().any(|r| r.len() != m) {
                        return Err(schema(format!("dense codeword is not {t}x{m}")));
                    }
                    Ok(CMatrix::from_fn(t, m, |r, k| C64::new(rows[r][k].re, rows[r][k].im)))
                })
                .collect::<Result<_>>()?,
            (StorageFormat::Ellpack, Entries::Ellpack(words)) => words
                .into_iter()
                .map(|slots| {
                    if slots.len() != t {
                        return Err(schema(format!("ellpack codeword needs {t} slots")));
                    }
                    let mut x = CMatrix::zeros(t, m);
                    for (r, s) in slots.iter().enumerate() {
                        match s.col {
                            Some(k) if k >= 1 && (k as usize) <= m => x[(r, k as usize - 1)] = C64::new(s.re, s.im),
                            Some(k) => return Err(schema(format!("column index {k} outside 1..={m}"))),
                            None => {}
                        }
                    }
                    Ok(x)
                })
                .collect::<Result<_>>()?,
            (StorageFormat::Ellpack, Entries::Dense(words)) if words.is_empty() => Vec::new(),
            _ => return Err(schema("entries do not match the declared format")),
        };
        if matrices.len() != self.cardinality {
            return Err(schema(format!("declared cardinality {} but found {} codewords", self.cardinality, matrices.len())));
        }
        let points = matrices.into_iter().map(GrassmannPoint::new).collect::<Result<Vec<_>>>()?;
        Constellation::with_provenance(points, self.provenance)
    }
}

pub fn save_constellation(c: &Constellation, path: impl AsRef<Path>, format: StorageFormat) -> Result<()> {
    let file = ConstellationFile::from_constellation(c, format)?;
    write_json(&file, path)
}

/// Loads a constellation file and validates every codeword.
pub fn load_constellation(path: impl AsRef<Path>) -> Result<Constellation> {
    let reader = BufReader::new(File::open(path)?);
    let file: ConstellationFile = serde_json::from_reader(reader).map_err(|e| schema(e.to_string()))?;
    file.into_constellation()
}

/// Storage format recorded in a constellation file.
pub fn stored_format(path: impl AsRef<Path>) -> Result<StorageFormat> {
    let reader = BufReader::new(File::open(path)?);
    let file: ConstellationFile = serde_json::from_reader(reader).map_err(|e| schema(e.to_string()))?;
    Ok(file.format)
}

/// Pretty-printed JSON for reports and manifests.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let reader = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(reader)?)
}

/// One row of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub snr_db: f64,
    pub metric: String,
    pub value: f64,
    pub half_width: f64,
    pub frames: u64,
}

pub const RESULT_HEADER: [&str; 5] = ["snr_db", "metric", "value", "half_width", "frames"];

/// Writes rows with floats in shortest round-trip scientific notation.
pub fn write_results_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{:e}", r.snr_db),
            r.metric.clone(),
            format!("{:e}", r.value),
            format!("{:e}", r.half_width),
            r.frames.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULT_HEADER {
        return Err(schema(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// One row of a bound sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub snr_db: f64,
    pub union_bound: f64,
    pub union_bound_conventional: f64,
    pub ami_lower_bound: f64,
    pub lambda_star: f64,
    pub kappa: f64,
    pub crossover_db: f64,
}

pub const BOUNDS_HEADER: [&str; 7] = [
    "snr_db",
    "union_bound",
    "union_bound_conventional",
    "ami_lower_bound",
    "lambda_star",
    "kappa",
    "crossover_db",
];

pub fn write_bounds_csv(rows: &[BoundsRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BOUNDS_HEADER)?;
    for r in rows {
        let vals = [
            r.snr_db,
            r.union_bound,
            r.union_bound_conventional,
            r.ami_lower_bound,
            r.lambda_star,
            r.kappa,
            r.crossover_db,
        ];
        w.write_record(vals.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bounds_csv(path: impl AsRef<Path>) -> Result<Vec<BoundsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != BOUNDS_HEADER {
        return Err(schema(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| schema(format!("bad number {f:?}: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != BOUNDS_HEADER.len() {
            return Err(schema("short bounds row"));
        }
        out.push(BoundsRow {
            snr_db: v[0],
            union_bound: v[1],
            union_bound_conventional: v[2],
            ami_lower_bound: v[3],
            lambda_star: v[4],
            kappa: v[5],
            crossover_db: v[6],
        });
    }
    Ok(out)
}

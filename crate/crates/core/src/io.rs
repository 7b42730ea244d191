//! CSV reading and writing.
//!
//! Floats are written as `{:.17e}`, which round-trips every `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{BandwidthSchedule, KernelSpec};
use crate::nw::{GridAccumulator, ProjectionLog};
use crate::sim::Sample;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_sample<W: Write>(sample: &Sample, mut out: W) -> std::io::Result<()> {
    let header: Vec<String> = (1..=sample.dim()).map(|j| format!("x{j}")).collect();
    writeln!(out, "{},y", header.join(","))?;
    for (x, y) in sample.iter() {
        for v in x.iter() {
            write!(out, "{v:.17e},")?;
        }
        writeln!(out, "{y:.17e}")?;
    }
    out.flush()
}

/// Header `x1,...,xp,y`, one row per observation in stream order.
pub fn write_sample_csv(sample: &Sample, path: &Path) -> Result<()> {
    write_sample(sample, create(path)?).map_err(|e| Error::io(path, e))
}

fn ingest_error(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.display().to_string(),
        row,
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Reads numeric rows of a CSV file whose header must equal `expect(width)`.
/// Rows are numbered from 1 at the first line after the header.
fn read_numeric(path: &Path, check_header: impl Fn(&csv::StringRecord) -> Result<()>) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers().map_err(|e| ingest_error(path, 0, e.to_string()))?.clone();
    check_header(&header)?;
    let width = header.len();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| ingest_error(path, row, e.to_string()))?;
        if rec.len() != width {
            return Err(ingest_error(
                path,
                row,
                format!("ragged row: {} cells, header has {width}", rec.len()),
            ));
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                let v: f64 = cell.parse().map_err(|_| {
                    ingest_error(path, row, format!("non-numeric cell `{cell}` in column {}", header[j].to_string()))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ingest_error(path, row, format!("non-finite value `{cell}` in column {}", &header[j])))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(vals);
    }
    Ok((width, rows))
}

/// Reads a sample CSV with header `x1..xp,y`; `p` is inferred and row order kept.
pub fn ingest_csv(path: &Path) -> Result<Sample> {
    let (width, rows) = read_numeric(path, |h| {
        if h.len() < 2 || h.get(h.len() - 1) != Some("y") {
            return Err(ingest_error(path, 0, "missing y column: the last header cell must be `y`"));
        }
        if let Some(c) = h.iter().take(h.len() - 1).find(|c| *c == "y") {
            return Err(ingest_error(path, 0, format!("duplicate response column `{c}`")));
        }
        Ok(())
    })?;
    let p = width - 1;
    let n = rows.len();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let y = DVector::from_fn(n, |i, _| rows[i][p]);
    Sample::new(x, y)
}

/// Reads covariate vectors from a CSV with header `x1..xp` (no response column).
pub fn read_covariates(path: &Path) -> Result<Vec<DVector<f64>>> {
    let (_, rows) = read_numeric(path, |h| {
        if h.is_empty() || h.iter().any(|c| c == "y") {
            return Err(ingest_error(path, 0, "expected covariate columns only"));
        }
        Ok(())
    })?;
    Ok(rows.into_iter().map(DVector::from_vec).collect())
}

fn exact_header<'a>(path: &'a Path, want: &'static [&'static str]) -> impl Fn(&csv::StringRecord) -> Result<()> + 'a {
    move |h| {
        if h.iter().eq(want.iter().copied()) {
            Ok(())
        } else {
            Err(ingest_error(path, 0, format!("expected header `{}`", want.join(","))))
        }
    }
}

pub fn write_projection_log(log: &ProjectionLog, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    log.write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Rebuilds a projection log saved with [`write_projection_log`].
pub fn read_projection_log(path: &Path, kernel: KernelSpec, schedule: BandwidthSchedule) -> Result<ProjectionLog> {
    let (_, rows) = read_numeric(path, exact_header(path, &["k", "u", "y"]))?;
    let mut log = ProjectionLog::new(kernel, schedule);
    for (i, r) in rows.iter().enumerate() {
        let k = r[0];
        if k < 1.0 || k.fract() != 0.0 {
            return Err(ingest_error(path, i + 1, format!("step index {k} is not a positive integer")));
        }
        log.push(k as usize, r[1], r[2])
            .map_err(|e| ingest_error(path, i + 1, e.to_string()))?;
    }
    Ok(log)
}

pub fn write_grid(grid: &GridAccumulator, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    grid.write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a `u,k` table of kernel values on `u >= 0`; the kernel is mirrored to negative `u`.
pub fn read_kernel_table(path: &Path) -> Result<KernelSpec> {
    let (_, rows) = read_numeric(path, exact_header(path, &["u", "k"]))?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "tabulated".into());
    KernelSpec::tabulated(name, &pts)
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

//! File formats: raw count histograms with JSON sidecars, two-column
//! series, matrices, and JSON documents. Every CSV has a header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photophysics::SpinInit;
use crate::pipeline::{PlTrace, RawTrace};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.to_path_buf(), source }
}

/// Shortest text that parses back to the same `f64`: whole numbers without
/// a fraction, exponent form for very large or small magnitudes.
pub fn fmt_f64(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:?}")
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        Error::Json {
            path: path.to_path_buf(),
            at: if at == "." { String::new() } else { format!("`{at}`: ") },
            source: e.into_inner(),
        }
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        at: String::new(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

/// Numeric table with the given header. Rows must match the header width.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_f64(v))).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a numeric table whose header must equal `header` exactly.
pub fn read_table(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err(path))?;
    let found: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(Error::Config(format!(
            "{}: expected header `{}`, found `{}`",
            path.display(),
            header.join(","),
            found.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .zip(header)
            .map(|(cell, col)| {
                cell.parse::<f64>().map_err(|_| {
                    Error::Config(format!(
                        "{}: row {}: column `{col}` is not a number: `{cell}`",
                        path.display(),
                        line + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn read_pairs(path: &Path, header: &[&str; 2]) -> Result<Vec<(f64, f64)>> {
    Ok(read_table(path, header)?.into_iter().map(|r| (r[0], r[1])).collect())
}

pub const DECAY_HEADER: [&str; 2] = ["time_s", "normalized_pl"];
pub const POWER_HEADER: [&str; 2] = ["power_uW", "rate_per_s"];

/// Dark-decay series `(time_s, normalized_pl)`.
pub fn read_decay_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    read_pairs(path, &DECAY_HEADER)
}

/// Charge-conversion rate against laser power, `(power_uW, rate_per_s)`.
pub fn read_power_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    read_pairs(path, &POWER_HEADER)
}

/// Acquisition metadata stored next to each raw histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSidecar {
    pub bin_width_ps: f64,
    #[serde(rename = "power_uW")]
    pub power_uw: f64,
    pub spin_init: SpinInit,
}

/// `trace.csv` → `trace.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Reads `bin_index,count` rows and the JSON sidecar beside them. Bin
/// indices must run 0, 1, 2, … in order.
pub fn read_raw_trace(csv_path: &Path) -> Result<RawTrace> {
    let meta: TraceSidecar = read_json(&sidecar_path(csv_path))?;
    let rows = read_table(csv_path, &["bin_index", "count"])?;
    let mut counts = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        if r[0] != k as f64 {
            return Err(Error::Config(format!(
                "{}: bin_index {} out of sequence, expected {k}",
                csv_path.display(),
                r[0]
            )));
        }
        counts.push(r[1]);
    }
    RawTrace::new(meta.bin_width_ps, counts, meta.power_uw, meta.spin_init)
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`; returns the CSV path.
pub fn write_raw_trace(dir: &Path, stem: &str, trace: &RawTrace) -> Result<PathBuf> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let rows: Vec<Vec<f64>> = trace.counts.iter().enumerate().map(|(k, &c)| vec![k as f64, c]).collect();
    write_table(&csv_path, &["bin_index", "count"], &rows)?;
    let meta = TraceSidecar { bin_width_ps: trace.bin_width_ps, power_uw: trace.power_uw, spin_init: trace.spin_init };
    write_json(&sidecar_path(&csv_path), &meta)?;
    Ok(csv_path)
}

/// File stem used for a trace at `power_uw` and `spin`, e.g. `p0660_ms1`.
pub fn trace_stem(power_uw: f64, spin: SpinInit) -> String {
    if power_uw.fract() == 0.0 && power_uw < 1e4 {
        format!("p{:04}_{}", power_uw as u32, spin.label())
    } else {
        format!("p{power_uw}_{}", spin.label())
    }
}

/// Raw traces for every `.csv` in `dir` that has a sidecar, sorted by path.
pub fn read_trace_dir(dir: &Path) -> Result<Vec<RawTrace>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && sidecar_path(p).is_file())
        .collect();
    paths.sort();
    paths.iter().map(|p| read_raw_trace(p)).collect()
}

/// Data against model for one processed trace: `time_ns,data,model,residual`.
pub fn write_model_vs_data(path: &Path, trace: &PlTrace, model: &[f64]) -> Result<()> {
    let rows: Vec<Vec<f64>> =
        trace.times_ns.iter().zip(&trace.values).zip(model).map(|((&t, &d), &m)| vec![t, d, m, d - m]).collect();
    write_table(path, &["time_ns", "data", "model", "residual"], &rows)
}

/// Matrix with Γ_ion down the first column and one column per Γ_rec.
pub fn write_matrix_csv(path: &Path, ion_grid: &[f64], rec_grid: &[f64], m: &[Vec<f64>]) -> Result<()> {
    let mut header = vec!["gamma_ion_MHz".to_string()];
    header.extend(rec_grid.iter().map(|&r| format!("rec={}", fmt_f64(r))));
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(&header).map_err(csv_err(path))?;
    for (ion, row) in ion_grid.iter().zip(m) {
        let mut rec = vec![fmt_f64(*ion)];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// `(ion_grid, rec_grid, m)` as read back from a matrix CSV.
pub type MatrixTable = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> Result<MatrixTable> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let bad = |what: &str| Error::Config(format!("{}: malformed matrix {what}", path.display()));
    let rec_grid = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .skip(1)
        .map(|h| h.strip_prefix("rec=").and_then(|v| v.parse().ok()).ok_or_else(|| bad("header")))
        .collect::<Result<Vec<f64>>>()?;
    let mut ion_grid = Vec::new();
    let mut m = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let vals = rec.iter().map(|v| v.parse::<f64>().map_err(|_| bad("cell"))).collect::<Result<Vec<f64>>>()?;
        ion_grid.push(vals[0]);
        m.push(vals[1..].to_vec());
    }
    Ok((ion_grid, rec_grid, m))
}

/// Writes `text` to `path`, replacing any existing file.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

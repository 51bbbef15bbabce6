//! CSV/JSON writers and raw dataset persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{CellSummary, RateReport, RunRecord};
use crate::schedules::{ContourKind, LevelSchedule};
use crate::synth::SampleSet;

/// Fifteen significant digits, shortest form (so `63.99999999999999` prints as `64`).
pub fn fmt_g15(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.14e}").parse().expect("formatted float parses");
    rounded.to_string()
}

pub fn write_runs_csv<W: Write>(out: W, runs: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "n", "trial", "error_sq", "elapsed_ms"])?;
    for r in runs {
        w.write_record([
            r.estimator.as_str().to_string(),
            r.n.to_string(),
            r.trial.to_string(),
            r.error_sq.to_string(),
            r.elapsed_ms.map_or_else(String::new, |ms| ms.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, summaries: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "n", "median_error_sq", "iqr_low", "iqr_high"])?;
    for s in summaries {
        w.write_record([
            s.estimator.as_str().to_string(),
            s.n.to_string(),
            s.median_error_sq.to_string(),
            s.iqr_low.to_string(),
            s.iqr_high.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `level,x,y,lambda,row_start,row_end`; rows are 1-based, end exclusive.
pub fn write_schedule_csv<W: Write>(out: W, schedule: &LevelSchedule) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "x", "y", "lambda", "row_start", "row_end"])?;
    for (i, l) in schedule.levels.iter().enumerate() {
        w.write_record([
            i.to_string(),
            fmt_g15(l.x),
            fmt_g15(l.y),
            fmt_g15(l.lambda),
            l.rows.start.to_string(),
            l.rows.end.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `kind,x,y`.
pub fn write_contour_csv<W: Write>(
    out: W,
    curves: &[(ContourKind, Vec<(f64, f64)>)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "x", "y"])?;
    for (kind, points) in curves {
        for &(x, y) in points {
            w.write_record([kind.as_str().to_string(), fmt_g15(x), fmt_g15(y)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_json<W: Write>(mut out: W, report: &RateReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes `runs.csv`, `summary.csv` and `report.json` into `dir`.
pub fn write_report_dir(dir: &Path, report: &RateReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_runs_csv(
        BufWriter::new(File::create(dir.join("runs.csv"))?),
        &report.runs,
    )?;
    write_summary_csv(
        BufWriter::new(File::create(dir.join("summary.csv"))?),
        &report.summaries,
    )?;
    write_report_json(
        BufWriter::new(File::create(dir.join("report.json"))?),
        report,
    )?;
    Ok(())
}

/// Sidecar describing a raw dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub n: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub seed: u64,
    /// Always `"f64-le-row-major"`: `u` then `v`.
    pub layout: String,
}

const LAYOUT: &str = "f64-le-row-major";

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `u` then `v` as little-endian `f64`, row-major, to `path`, and a
/// JSON header to `path.json`.
pub fn save_dataset(path: &Path, data: &SampleSet) -> Result<()> {
    let header = DatasetHeader {
        n: data.n(),
        d_in: data.u.ncols(),
        d_out: data.v.ncols(),
        seed: data.seed_used,
        layout: LAYOUT.into(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    for m in [&data.u, &data.v] {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                w.write_all(&m[(r, c)].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    std::fs::write(sidecar(path), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<SampleSet> {
    let header: DatasetHeader = serde_json::from_str(&std::fs::read_to_string(sidecar(path))?)?;
    if header.layout != LAYOUT {
        return Err(Error::config(
            "layout",
            format!("unsupported dataset layout `{}`", header.layout),
        ));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let expected = header.n * (header.d_in + header.d_out) * 8;
    if bytes.len() != expected {
        return Err(Error::DimensionMismatch {
            context: "dataset file size in bytes",
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    let split = header.n * header.d_in;
    Ok(SampleSet {
        u: DMatrix::from_row_slice(header.n, header.d_in, &values[..split]),
        v: DMatrix::from_row_slice(header.n, header.d_out, &values[split..]),
        seed_used: header.seed,
    })
}

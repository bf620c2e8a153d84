//! CSV and JSON file formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use semicomp_core::em::TraceRow;
use semicomp_core::metrics::BbsCurve;
use semicomp_core::sim::LatentRecord;
use semicomp_core::{Dataset, ObservedRecord};

const DATASET_COLUMNS: [&str; 4] = ["y1", "delta1", "y2", "delta2"];

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))
}

fn parse_f64(field: &str, row: usize, column: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .with_context(|| format!("row {row}, column {column}: {field:?} is not a number"))
}

fn parse_indicator(field: &str, row: usize, column: &str) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => bail!("row {row}, column {column}: indicator must be 0 or 1, found {other:?}"),
    }
}

/// Reads `y1,delta1,y2,delta2,x1,...,xp` and validates the records.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 4 || headers.iter().take(4).ne(DATASET_COLUMNS) {
        bail!("{}: header must start with y1,delta1,y2,delta2", path.display());
    }
    for (k, name) in headers.iter().skip(4).enumerate() {
        if name.trim() != format!("x{}", k + 1) {
            bail!("{}: covariate column {} must be named x{}", path.display(), k + 5, k + 1);
        }
    }
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: malformed row {row}", path.display()))?;
        if rec.len() != headers.len() {
            bail!("row {row}: expected {} fields, found {}", headers.len(), rec.len());
        }
        let covariates = (4..rec.len())
            .map(|j| parse_f64(&rec[j], row, &headers[j]))
            .collect::<Result<Vec<_>>>()?;
        records.push(ObservedRecord::new(
            parse_f64(&rec[0], row, "y1")?,
            parse_indicator(&rec[1], row, "delta1")?,
            parse_f64(&rec[2], row, "y2")?,
            parse_indicator(&rec[3], row, "delta2")?,
            covariates,
        ));
    }
    Ok(Dataset::new(records)?)
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = DATASET_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for r in data.iter() {
        let mut row = vec![
            r.y1.to_string(),
            u8::from(r.delta1).to_string(),
            r.y2.to_string(),
            u8::from(r.delta2).to_string(),
        ];
        row.extend(r.covariates.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Latent quantities of simulated subjects; `t1_true` is `inf` when the
/// terminal event came first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub gamma: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub t1_true: f64,
    pub t2_true: f64,
    pub c: f64,
}

impl From<&LatentRecord> for TruthRow {
    fn from(l: &LatentRecord) -> Self {
        Self {
            gamma: l.gamma,
            h1: l.h[0],
            h2: l.h[1],
            h3: l.h[2],
            t1_true: l.t1,
            t2_true: l.t2,
            c: l.c,
        }
    }
}

pub fn write_truth(path: &Path, latent: &[LatentRecord]) -> Result<()> {
    write_rows(path, latent.iter().map(TruthRow::from))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceCsvRow {
    pub iter: usize,
    pub obs_loglik: f64,
    pub theta: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

impl From<&TraceRow> for TraceCsvRow {
    fn from(r: &TraceRow) -> Self {
        Self {
            iter: r.iter,
            obs_loglik: r.obs_loglik,
            theta: r.theta,
            q1: r.q.q1,
            q2: r.q.q2,
            q3: r.q.q3,
            q4: r.q.q4,
        }
    }
}

pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    write_rows(path, trace.iter().map(TraceCsvRow::from))
}

/// One predicted joint event-free survival probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject: usize,
    pub t: f64,
    pub pi: f64,
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    write_rows(path, preds.iter().copied())
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    read_rows(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BbsRow {
    pub t: f64,
    pub bbs: f64,
}

pub fn write_bbs_curve(path: &Path, curve: &BbsCurve) -> Result<()> {
    write_rows(
        path,
        curve.grid.iter().zip(&curve.values).map(|(&t, &bbs)| BbsRow { t, bbs }),
    )
}

pub fn read_bbs_curve(path: &Path) -> Result<Vec<BbsRow>> {
    read_rows(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BbsSummary {
    pub ibbs: f64,
    pub horizon: f64,
    pub n_points: usize,
}

/// Serializes any rows with named fields, header first.
pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = reader(path)?;
    rdr.deserialize()
        .enumerate()
        .map(|(row, r)| r.with_context(|| format!("{}: malformed row {row}", path.display())))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("{}: invalid JSON", path.display()))
}

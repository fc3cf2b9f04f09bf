// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! CSV and SVG reports.
//!
//! Run summaries always use the columns in [`CSV_COLUMNS`]; mode comparisons
//! append `mode` and `state_digest`. Runs that submitted nothing produce no
//! row, so an empty run yields a header-only file.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{RunMetrics, BUCKET_US};

pub const CSV_COLUMNS: [&str; 12] = [
    "run_id",
    "seed",
    "n",
    "f",
    "submitted",
    "committed",
    "dropped",
    "tps_mean",
    "p50",
    "p90",
    "p99",
    "superblock_mean_blocks",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Plot { path: PathBuf, message: String },
}

/// One CSV row. Percentiles are seconds; empty when nothing committed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_id: String,
    pub seed: u64,
    pub n: usize,
    pub f: usize,
    pub submitted: u64,
    pub committed: u64,
    pub dropped: u64,
    pub tps_mean: f64,
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub p99: Option<f64>,
    pub superblock_mean_blocks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    #[serde(flatten)]
    pub run: RunRow,
    pub mode: String,
    pub state_digest: String,
}

impl From<&RunMetrics> for RunRow {
    fn from(m: &RunMetrics) -> Self {
        Self {
            run_id: m.run_id.clone(),
            seed: m.seed,
            n: m.n,
            f: m.f,
            submitted: m.submitted,
            committed: m.committed,
            dropped: m.dropped,
            tps_mean: m.tps_mean,
            p50: m.p50,
            p90: m.p90,
            p99: m.p99,
            superblock_mean_blocks: m.superblock_mean_blocks(),
        }
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_runs_csv(path: &Path, runs: &[RunMetrics]) -> Result<(), ReportError> {
    let err = csv_err(path);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(&err)?;
    w.write_record(CSV_COLUMNS).map_err(&err)?;
    for m in runs.iter().filter(|m| m.submitted > 0) {
        w.serialize(RunRow::from(m)).map_err(&err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

pub fn write_comparison_csv(path: &Path, runs: &[RunMetrics]) -> Result<(), ReportError> {
    let err = csv_err(path);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(&err)?;
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    header.extend(["mode", "state_digest"]);
    w.write_record(&header).map_err(&err)?;
    for m in runs.iter().filter(|m| m.submitted > 0) {
        let r = RunRow::from(m);
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            r.run_id,
            r.seed.to_string(),
            r.n.to_string(),
            r.f.to_string(),
            r.submitted.to_string(),
            r.committed.to_string(),
            r.dropped.to_string(),
            r.tps_mean.to_string(),
            opt(r.p50),
            opt(r.p90),
            opt(r.p99),
            r.superblock_mean_blocks.to_string(),
            m.commit_mode.clone(),
            m.state_digest.clone(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRow>, ReportError> {
    let err = csv_err(path);
    let mut r = csv::Reader::from_path(path).map_err(&err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(err)
}

fn plot_err(path: &Path) -> impl Fn(String) -> ReportError + '_ {
    move |message| ReportError::Plot {
        path: path.to_path_buf(),
        message,
    }
}

const PALETTE: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

/// Line chart of several named series over shared x values.
fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> Result<(), ReportError> {
    let err = plot_err(path);
    let pts = series.iter().flat_map(|(_, s)| s.iter());
    let (mut x_max, mut y_max) = (1.0f64, 1.0f64);
    let mut x_min = f64::MAX;
    for (x, y) in pts {
        x_max = x_max.max(*x);
        x_min = x_min.min(*x);
        y_max = y_max.max(*y);
    }
    if x_min >= x_max {
        x_min = 0.0;
    }
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_min..x_max, 0.0..y_max * 1.1)
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    for (i, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(points.iter().copied(), &color))
            .map_err(|e| err(e.to_string()))?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))
}

fn series_over_time(m: &RunMetrics) -> Vec<(f64, f64)> {
    let width = BUCKET_US as f64 / 1e6;
    m.throughput.iter().enumerate().map(|(i, v)| (i as f64 * width, *v)).collect()
}

/// Throughput against simulated time, one line per run.
pub fn plot_throughput(path: &Path, runs: &[RunMetrics]) -> Result<(), ReportError> {
    let series: Vec<_> = runs.iter().map(|m| (m.run_id.clone(), series_over_time(m))).collect();
    line_chart(path, "Throughput over time", "time (s)", "tx/s", &series)
}

/// Mean throughput and median latency against the number of nodes.
pub fn plot_scaling(tps_path: &Path, latency_path: &Path, rows: &[RunRow]) -> Result<(), ReportError> {
    let mut by_n: std::collections::BTreeMap<usize, (f64, f64, usize)> = Default::default();
    for r in rows {
        let e = by_n.entry(r.n).or_default();
        e.0 += r.tps_mean;
        e.1 += r.p50.unwrap_or(0.0);
        e.2 += 1;
    }
    let tps: Vec<(f64, f64)> = by_n.iter().map(|(n, (t, _, k))| (*n as f64, t / *k as f64)).collect();
    let lat: Vec<(f64, f64)> = by_n.iter().map(|(n, (_, l, k))| (*n as f64, l / *k as f64)).collect();
    line_chart(tps_path, "Throughput by network size", "nodes", "tx/s", &[("mean throughput".into(), tps)])?;
    line_chart(latency_path, "Latency by network size", "nodes", "seconds", &[("median latency".into(), lat)])
}

/// Per-block against whole-superblock persistence over time.
pub fn plot_mode_comparison(path: &Path, per_block: &RunMetrics, whole: &RunMetrics) -> Result<(), ReportError> {
    line_chart(
        path,
        "Commit modes",
        "time (s)",
        "tx/s",
        &[
            ("per block".into(), series_over_time(per_block)),
            ("whole superblock".into(), series_over_time(whole)),
        ],
    )
}

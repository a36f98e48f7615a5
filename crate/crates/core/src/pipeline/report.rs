use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bundle::{write_atomic, Group};
use crate::envision::PromptMode;
use crate::error::{Error, Result};
use crate::metrics::DetectionMetrics;
use crate::scoring::ScoreConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub dataset: String,
    #[serde(flatten)]
    pub metrics: DetectionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub outlier_count: usize,
    pub outliers: Vec<String>,
    pub cache_keys: Vec<String>,
    pub datasets: Vec<DatasetMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_digest: String,
    pub mode: Option<PromptMode>,
    pub requested_outliers: usize,
    pub similarity_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Number of ID labels; text rows `0..k` are ID, the rest outliers.
    pub k: usize,
    pub tpr: f64,
    pub score: ScoreConfig,
    pub runs: Vec<RunReport>,
    /// Per-dataset means over runs.
    pub mean: Vec<DatasetMetrics>,
    /// Mean of the per-dataset means.
    pub average: DetectionMetrics,
    pub provenance: Provenance,
}

fn mean_of(items: impl ExactSizeIterator<Item = DetectionMetrics>) -> DetectionMetrics {
    let n = items.len() as f64;
    let (mut fpr, mut auroc, mut aupr) = (0.0, 0.0, 0.0);
    for m in items {
        fpr += m.fpr95;
        auroc += m.auroc;
        aupr += m.aupr;
    }
    DetectionMetrics {
        fpr95: fpr / n,
        auroc: auroc / n,
        aupr: aupr / n,
    }
}

/// Arithmetic mean per dataset across runs, plus the cross-dataset average row.
pub fn aggregate_runs(runs: &[Vec<DatasetMetrics>]) -> Result<(Vec<DatasetMetrics>, DetectionMetrics)> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Misaligned("no runs to aggregate".into()))?;
    if first.is_empty() {
        return Err(Error::Misaligned("runs contain no datasets".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = first.iter().find(|d| !seen.insert(d.dataset.as_str())) {
        return Err(Error::Misaligned(format!("dataset {:?} listed twice", dup.dataset)));
    }
    for (r, run) in runs.iter().enumerate() {
        let aligned = run.len() == first.len()
            && run.iter().zip(first).all(|(a, b)| a.dataset == b.dataset);
        if !aligned {
            return Err(Error::Misaligned(format!(
                "run {r} datasets differ from run 0"
            )));
        }
    }
    let mean: Vec<DatasetMetrics> = first
        .iter()
        .enumerate()
        .map(|(d, ds)| DatasetMetrics {
            dataset: ds.dataset.clone(),
            metrics: mean_of(runs.iter().map(|run| run[d].metrics).collect::<Vec<_>>().into_iter()),
        })
        .collect();
    let average = mean_of(mean.iter().map(|d| d.metrics).collect::<Vec<_>>().into_iter());
    Ok((mean, average))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::InvalidConfig(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn report_json(report: &MetricsReport) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

/// One row per OOD dataset plus `Average`; metrics as percentages with two decimals.
pub fn report_csv(report: &MetricsReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let pct = |x: f64| format!("{:.2}", 100.0 * x);
    w.write_record(["dataset", "FPR95", "AUROC", "AUPR"]).expect("in-memory write");
    let rows = report
        .mean
        .iter()
        .map(|d| (d.dataset.as_str(), d.metrics))
        .chain(std::iter::once(("Average", report.average)));
    for (name, m) in rows {
        w.write_record([name, &pct(m.fpr95), &pct(m.auroc), &pct(m.aupr)])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes `report.json` or `report.csv` into `dir` and returns the path.
pub fn emit_report(report: &MetricsReport, dir: &Path, format: ReportFormat) -> Result<PathBuf> {
    let (name, bytes) = match format {
        ReportFormat::Json => ("report.json", report_json(report)),
        ReportFormat::Csv => ("report.csv", report_csv(report)),
    };
    let path = dir.join(name);
    write_atomic(&path, &bytes)?;
    Ok(path)
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{} is not a report: {e}", path.display())))
}

/// One line of the per-sample scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub group: Group,
    pub score: f64,
}

pub fn scores_jsonl(scores: &[SampleScore]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in scores {
        serde_json::to_writer(&mut out, s).expect("score serializes");
        out.push(b'\n');
    }
    out
}

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EvalConfig, TextSource};
use super::report::{
    aggregate_runs, emit_report, DatasetMetrics, MetricsReport, Provenance, ReportFormat, RunReport,
    SampleScore,
};
use crate::bundle::{read_bundle, write_atomic, EmbeddingTable, Group, RowMeta};
use crate::envision::{envision, similarity_filter, EnvisionRun, PromptSpec};
use crate::error::{Error, Result};
use crate::labels::{normalize_label, LabelSet};
use crate::metrics::{DetectionMetrics, ScorePartition};
use crate::scoring::{match_scores, ScoreConfig};

/// File listing labels that still need text embeddings.
pub const LABELS_TO_EMBED: &str = "labels_to_embed.json";

/// Outlier labels used by one run, with the envisioning record when there was one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub envisioned: Option<EnvisionRun>,
    /// Labels dropped for being too similar to an ID label.
    pub dropped_by_similarity: Vec<String>,
    pub outliers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub runs: Vec<RunOutcome>,
}

/// Performs (or replays) every envisioning run. With envisioning disabled each run gets
/// an empty outlier set.
pub fn envision_runs(cfg: &EvalConfig, id_labels: &LabelSet) -> Result<Vec<RunOutcome>> {
    let Some(spec) = cfg.prompt_spec(id_labels)? else {
        return Ok((0..cfg.runs)
            .map(|run| RunOutcome {
                run,
                envisioned: None,
                dropped_by_similarity: Vec::new(),
                outliers: Vec::new(),
            })
            .collect());
    };
    let client = cfg.client()?;
    let one = |run: usize| -> Result<RunOutcome> {
        let record = envision(&spec, &client, run).map_err(|e| e.context(format!("envisioning run {run}")))?;
        Ok(RunOutcome {
            run,
            outliers: record.outliers.clone(),
            envisioned: Some(record),
            dropped_by_similarity: Vec::new(),
        })
    };
    if cfg.parallel_runs {
        (0..cfg.runs).into_par_iter().map(one).collect()
    } else {
        (0..cfg.runs).map(one).collect()
    }
}

/// Label lookup into a text bundle, by normalized row id.
struct TextIndex<'a> {
    table: &'a EmbeddingTable,
    by_label: HashMap<String, usize>,
}

impl<'a> TextIndex<'a> {
    fn new(table: &'a EmbeddingTable) -> Self {
        let mut by_label = HashMap::with_capacity(table.len());
        for (i, m) in table.meta().iter().enumerate() {
            by_label.entry(normalize_label(&m.id)).or_insert(i);
        }
        Self { table, by_label }
    }

    fn missing<'l>(&self, labels: impl IntoIterator<Item = &'l str>) -> Vec<String> {
        labels
            .into_iter()
            .filter(|l| !self.by_label.contains_key(&normalize_label(l)))
            .map(str::to_owned)
            .collect()
    }

    /// Text table whose rows are `labels` in order, each row id set to its label.
    fn assemble(&self, labels: &[&str]) -> Result<EmbeddingTable> {
        let rows = labels.iter().map(|l| {
            let i = self.by_label[&normalize_label(l)];
            (RowMeta::new(*l, None), self.table.row(i))
        });
        EmbeddingTable::from_rows(self.table.dim(), rows)
    }
}

fn write_labels_to_embed(dir: &Path, labels: &[String]) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(labels).expect("labels serialize");
    json.push(b'\n');
    write_atomic(&dir.join(LABELS_TO_EMBED), &json)
}

fn unique_in_order<'a>(labels: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    labels
        .into_iter()
        .filter(|l| seen.insert(normalize_label(l)))
        .map(str::to_owned)
        .collect()
}

/// Scores every row of `images` against `text` (ID rows first, `k` of them).
/// Rows without a group tag take `default_group`.
pub fn score_bundle(
    images: &EmbeddingTable,
    text: &EmbeddingTable,
    k: usize,
    score: &ScoreConfig,
    default_group: Group,
) -> Result<Vec<SampleScore>> {
    (0..images.len())
        .into_par_iter()
        .map(|i| {
            let meta = &images.meta()[i];
            let v = match_scores::<f64>(images.row(i), &meta.id, text, k)?;
            Ok(SampleScore {
                id: meta.id.clone(),
                group: meta.group.unwrap_or(default_group),
                score: score.score(&v)?,
            })
        })
        .collect()
}

fn load_named(cfg: &EvalConfig, name: &str, path: &Path) -> Result<EmbeddingTable> {
    read_bundle(cfg.resolve(path)).map_err(|e| Error::from(e).context(format!("loading bundle {name:?}")))
}

/// The full envision / assemble / score / measure / aggregate loop.
pub fn run_eval(cfg: &EvalConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let id_labels = cfg.load_id_labels()?;
    let k = id_labels.len();

    let id_images = load_named(cfg, "id", &cfg.id_bundle)?;
    let ood_images = cfg
        .ood_bundles
        .iter()
        .map(|b| Ok((b.name.clone(), load_named(cfg, &b.name, &b.path)?)))
        .collect::<Result<Vec<_>>>()?;
    if id_images.is_empty() {
        return Err(Error::InvalidConfig("ID image bundle is empty".into()));
    }
    if let Some((name, _)) = ood_images.iter().find(|(_, t)| t.is_empty()) {
        return Err(Error::InvalidConfig(format!("OOD image bundle {name:?} is empty")));
    }

    let mut runs = envision_runs(cfg, &id_labels)?;
    let out_dir = cfg.output_path();

    let text_path = match &cfg.text_bundle {
        TextSource::Precomputed(p) => cfg.resolve(p),
        TextSource::RequestExtraction => {
            let labels = unique_in_order(
                id_labels
                    .iter()
                    .chain(runs.iter().flat_map(|r| r.outliers.iter().map(String::as_str))),
            );
            write_labels_to_embed(&out_dir, &labels)?;
            write_run_records(&runs, &out_dir)?;
            return Err(Error::MissingLabels { labels });
        }
    };
    let text = read_bundle(&text_path).map_err(|e| Error::from(e).context("loading text bundle"))?;
    let index = TextIndex::new(&text);

    let wanted = id_labels
        .iter()
        .chain(runs.iter().flat_map(|r| r.outliers.iter().map(String::as_str)));
    let absent = index.missing(wanted);
    let missing = unique_in_order(absent.iter().map(String::as_str));
    if !missing.is_empty() {
        write_labels_to_embed(&out_dir, &missing)?;
        return Err(Error::MissingLabels { labels: missing });
    }

    let id_refs: Vec<&str> = id_labels.iter().collect();
    let id_text = index.assemble(&id_refs)?;
    let threshold = cfg.similarity_filter.as_ref().map(|f| f.threshold);

    let mut run_tables = Vec::with_capacity(runs.len());
    let mut run_reports = Vec::with_capacity(runs.len());
    for outcome in &mut runs {
        let run = outcome.run;
        if let Some(threshold) = threshold {
            let refs: Vec<&str> = outcome.outliers.iter().map(String::as_str).collect();
            let candidates = index.assemble(&refs)?;
            let kept = similarity_filter(&candidates, &id_text, threshold)
                .map_err(|e| e.context(format!("similarity filter, run {run}")))?;
            let (keep, drop): (Vec<_>, Vec<_>) = outcome
                .outliers
                .drain(..)
                .enumerate()
                .partition(|(i, _)| kept.binary_search(i).is_ok());
            outcome.outliers = keep.into_iter().map(|(_, l)| l).collect();
            outcome.dropped_by_similarity = drop.into_iter().map(|(_, l)| l).collect();
        }
        if outcome.outliers.is_empty() && cfg.score.requires_outliers() {
            return Err(Error::InvalidConfig(format!(
                "run {run}: score function {:?} needs outlier labels but none survived",
                cfg.score.function
            )));
        }

        let labels: Vec<&str> = id_refs
            .iter()
            .copied()
            .chain(outcome.outliers.iter().map(String::as_str))
            .collect();
        let text_table = index.assemble(&labels)?;

        let id_scores: Vec<f64> = score_bundle(&id_images, &text_table, k, &cfg.score, Group::Id)
            .map_err(|e| e.context(format!("scoring ID bundle, run {run}")))?
            .into_iter()
            .map(|s| s.score)
            .collect();
        let mut datasets = Vec::with_capacity(ood_images.len());
        for (name, images) in &ood_images {
            let ood_scores: Vec<f64> = score_bundle(images, &text_table, k, &cfg.score, Group::Ood)
                .map_err(|e| e.context(format!("scoring {name:?}, run {run}")))?
                .into_iter()
                .map(|s| s.score)
                .collect();
            let partition = ScorePartition::new(id_scores.clone(), ood_scores)
                .map_err(|e| e.context(format!("dataset {name:?}, run {run}")))?;
            datasets.push(DatasetMetrics {
                dataset: name.clone(),
                metrics: DetectionMetrics::compute(&partition, cfg.tpr),
            });
        }
        run_tables.push(datasets.clone());
        run_reports.push(RunReport {
            run,
            outlier_count: outcome.outliers.len(),
            outliers: outcome.outliers.clone(),
            cache_keys: outcome
                .envisioned
                .as_ref()
                .map(|e| e.cache_keys.clone())
                .unwrap_or_default(),
            datasets,
        });
    }

    let (mean, average) = aggregate_runs(&run_tables)?;
    let report = MetricsReport {
        k,
        tpr: cfg.tpr,
        score: cfg.score,
        runs: run_reports,
        mean,
        average,
        provenance: Provenance {
            config_digest: cfg.digest(),
            mode: cfg.envisions().then_some(cfg.mode).flatten(),
            requested_outliers: cfg
                .prompt_spec(&id_labels)?
                .as_ref()
                .map_or(0, PromptSpec::requested),
            similarity_threshold: threshold,
        },
    };
    Ok(Evaluation { report, runs })
}

/// Per-sample scores of the ID bundle and every OOD bundle against the ID labels plus
/// the given outlier labels.
pub fn score_samples(cfg: &EvalConfig, outliers: &LabelSet) -> Result<Vec<SampleScore>> {
    cfg.validate_paths()?;
    cfg.score.validate()?;
    let id_labels = cfg.load_id_labels()?;
    let text_path = match &cfg.text_bundle {
        TextSource::Precomputed(p) => cfg.resolve(p),
        TextSource::RequestExtraction => {
            return Err(Error::InvalidConfig("scoring needs a precomputed text bundle".into()))
        }
    };
    let text = read_bundle(&text_path).map_err(|e| Error::from(e).context("loading text bundle"))?;
    let index = TextIndex::new(&text);
    let labels: Vec<&str> = id_labels.iter().chain(outliers.iter()).collect();
    let missing = unique_in_order(index.missing(labels.iter().copied()).iter().map(String::as_str));
    if !missing.is_empty() {
        return Err(Error::MissingLabels { labels: missing });
    }
    let text_table = index.assemble(&labels)?;
    let k = id_labels.len();

    let mut scores = score_bundle(&load_named(cfg, "id", &cfg.id_bundle)?, &text_table, k, &cfg.score, Group::Id)?;
    for b in &cfg.ood_bundles {
        let images = load_named(cfg, &b.name, &b.path)?;
        scores.extend(
            score_bundle(&images, &text_table, k, &cfg.score, Group::Ood)
                .map_err(|e| e.context(format!("scoring {:?}", b.name)))?,
        );
    }
    Ok(scores)
}

/// `outliers_run<r>.json` for every run.
pub fn write_run_records(runs: &[RunOutcome], dir: &Path) -> Result<()> {
    for r in runs {
        let mut json = serde_json::to_vec_pretty(r).expect("run record serializes");
        json.push(b'\n');
        write_atomic(&dir.join(format!("outliers_run{}.json", r.run)), &json)?;
    }
    Ok(())
}

/// Report (JSON and CSV) plus per-run outlier records.
pub fn write_outputs(eval: &Evaluation, dir: &Path) -> Result<()> {
    emit_report(&eval.report, dir, ReportFormat::Json)?;
    emit_report(&eval.report, dir, ReportFormat::Csv)?;
    write_run_records(&eval.runs, dir)
}

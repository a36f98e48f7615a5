use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eoe::bundle::write_atomic as write_file;
use eoe::envision::EnvisionRun;
use eoe::pipeline::{
    emit_report, envision_runs, read_report, run_eval, score_samples, write_outputs, write_run_records,
    EvalConfig, Overrides, ReportFormat, SampleScore,
};
use eoe::{Error, LabelSet, Result, ScoreFunction};

#[derive(Parser)]
#[command(name = "eoe", version, about = "Zero-shot OOD detection with envisioned outlier labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Envision outlier labels for every run and cache the LLM responses.
    Envision(Common),
    /// Score the configured image bundles against ID (+ optional outlier) labels.
    Score {
        #[command(flatten)]
        common: Common,
        /// JSON array of outlier labels, or an `outliers_run<r>.json` record.
        #[arg(long)]
        outliers: Option<PathBuf>,
    },
    /// Full evaluation: envision, score, measure, aggregate and write the report.
    Eval(Common),
    /// Re-emit an existing JSON report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Serve LLM answers from the response cache only.
    #[arg(long)]
    replay: bool,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    score_fn: Option<ScoreFunction>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<EvalConfig> {
        let mut cfg = EvalConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            replay: self.replay,
            beta: self.beta,
            score_fn: self.score_fn,
            runs: self.runs,
            output_dir: self.out.clone(),
        });
        Ok(cfg)
    }
}

fn read_outliers(path: &Path) -> Result<LabelSet> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(labels) = serde_json::from_str::<Vec<String>>(&text) {
        return LabelSet::outlier(labels);
    }
    #[derive(serde::Deserialize)]
    struct Record {
        outliers: Vec<String>,
    }
    let record: Record = serde_json::from_str(&text).map_err(|e| {
        Error::InvalidConfig(format!("{} holds neither a label array nor a run record: {e}", path.display()))
    })?;
    LabelSet::outlier(record.outliers)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Envision(common) => {
            let cfg = common.load()?;
            cfg.validate()?;
            let id_labels = cfg.load_id_labels()?;
            let runs = envision_runs(&cfg, &id_labels)?;
            let out = cfg.output_path();
            write_run_records(&runs, &out)?;
            let mut labels: Vec<String> = id_labels.labels().to_vec();
            labels.extend(runs.iter().filter_map(|r| r.envisioned.as_ref()).flat_map(|r: &EnvisionRun| r.outliers.clone()));
            let mut seen = std::collections::HashSet::new();
            labels.retain(|l| seen.insert(eoe::normalize_label(l)));
            let mut json = serde_json::to_vec_pretty(&labels).expect("labels serialize");
            json.push(b'\n');
            write_file(&out.join(eoe::pipeline::eval::LABELS_TO_EMBED), &json)?;
            for r in &runs {
                eprintln!("run {}: {} outlier labels", r.run, r.outliers.len());
            }
        }
        Command::Score { common, outliers } => {
            let cfg = common.load()?;
            let outliers = match outliers {
                Some(p) => read_outliers(&p)?,
                None => LabelSet::empty_outliers(),
            };
            let scores: Vec<SampleScore> = score_samples(&cfg, &outliers)?;
            let path = cfg.output_path().join("scores.jsonl");
            write_file(&path, &eoe::pipeline::report::scores_jsonl(&scores))?;
            eprintln!("wrote {} scores to {}", scores.len(), path.display());
        }
        Command::Eval(common) => {
            let cfg = common.load()?;
            let eval = run_eval(&cfg)?;
            let out = cfg.output_path();
            write_outputs(&eval, &out)?;
            let avg = eval.report.average;
            println!(
                "average over {} dataset(s), {} run(s): FPR95 {:.2}  AUROC {:.2}  AUPR {:.2}",
                eval.report.mean.len(),
                eval.report.runs.len(),
                100.0 * avg.fpr95,
                100.0 * avg.auroc,
                100.0 * avg.aupr
            );
            eprintln!("report written to {}", out.display());
        }
        Command::Report { input, format, out } => {
            let report = read_report(&input)?;
            let format: ReportFormat = format.parse()?;
            let dir = out.unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
            let path = emit_report(&report, &dir, format)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

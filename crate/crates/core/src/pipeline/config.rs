use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envision::{EndpointConfig, LlmClient, PromptMode, PromptSpec, ResponseCache};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::scoring::{ScoreConfig, ScoreFunction};

/// Keyword for [`TextSource::RequestExtraction`] in the config file.
pub const REQUEST_EXTRACTION: &str = "request_extraction";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedBundle {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityFilterConfig {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    crate::envision::DEFAULT_SIMILARITY_THRESHOLD
}

/// Where text embeddings for ID and outlier labels come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TextSource {
    /// A bundle whose row ids are label strings.
    Precomputed(PathBuf),
    /// No embeddings yet: envision, then write the labels that need embedding.
    RequestExtraction,
}

impl Serialize for TextSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TextSource::Precomputed(p) => p.serialize(s),
            TextSource::RequestExtraction => s.serialize_str(REQUEST_EXTRACTION),
        }
    }
}

impl<'de> Deserialize<'de> for TextSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == REQUEST_EXTRACTION {
            TextSource::RequestExtraction
        } else {
            TextSource::Precomputed(PathBuf::from(s))
        })
    }
}

fn default_runs() -> usize {
    3
}

fn default_tpr() -> f64 {
    0.95
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("eoe-out")
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from("llm-cache")
}

/// Evaluation configuration, read from a single JSON file. Relative paths resolve
/// against the directory holding that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// JSON array of ID class names.
    pub id_labels: PathBuf,
    pub id_bundle: PathBuf,
    pub ood_bundles: Vec<NamedBundle>,
    pub text_bundle: TextSource,

    /// Envisioning regime; absent means no outlier labels.
    #[serde(default)]
    pub mode: Option<PromptMode>,
    #[serde(default, rename = "L")]
    pub total_outliers: Option<usize>,
    #[serde(default, rename = "l")]
    pub per_class: Option<usize>,
    #[serde(default)]
    pub class_type: Option<String>,
    #[serde(default)]
    pub endpoint: Option<EndpointConfig>,
    #[serde(default)]
    pub replay: bool,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub similarity_filter: Option<SimilarityFilterConfig>,

    #[serde(default)]
    pub score: ScoreConfig,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_tpr")]
    pub tpr: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Execute envisioning runs concurrently instead of one after another.
    #[serde(default)]
    pub parallel_runs: bool,

    #[serde(skip)]
    base_dir: PathBuf,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub replay: bool,
    pub beta: Option<f64>,
    pub score_fn: Option<ScoreFunction>,
    pub runs: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl EvalConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: EvalConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("cannot parse config: {e}")))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.replay {
            self.replay = true;
        }
        if let Some(beta) = o.beta {
            self.score.beta = beta;
        }
        if let Some(f) = o.score_fn {
            self.score.function = f;
        }
        if let Some(runs) = o.runs {
            self.runs = runs;
        }
        if let Some(out) = &o.output_dir {
            // flags are relative to the working directory, not the config file
            self.output_dir = std::path::absolute(out).unwrap_or_else(|_| out.clone());
        }
    }

    /// Checks shared by every subcommand that reads bundles.
    pub fn validate_paths(&self) -> Result<()> {
        if self.ood_bundles.is_empty() {
            return Err(Error::InvalidConfig("at least one OOD bundle is required".into()));
        }
        let mut names: Vec<&str> = self.ood_bundles.iter().map(|b| b.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("OOD bundle names must be unique".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_paths()?;
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be >= 1".into()));
        }
        if !(self.tpr > 0.0 && self.tpr <= 1.0) {
            return Err(Error::InvalidConfig(format!("tpr must lie in (0, 1], got {}", self.tpr)));
        }
        if let Some(f) = &self.similarity_filter {
            if !(f.threshold > 0.0 && f.threshold <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "similarity_filter.threshold must lie in (0, 1], got {}",
                    f.threshold
                )));
            }
        }
        self.score.validate()?;
        if self.envisions() && self.endpoint.is_none() {
            return Err(Error::InvalidConfig("envisioning requires an endpoint".into()));
        }
        if !self.envisions() && self.score.requires_outliers() {
            return Err(Error::InvalidConfig(format!(
                "score function {:?} needs envisioned outlier labels",
                self.score.function
            )));
        }
        Ok(())
    }

    /// False when no mode is set or `L = 0` forces an empty outlier set.
    pub fn envisions(&self) -> bool {
        self.mode.is_some() && self.total_outliers != Some(0) && self.per_class != Some(0)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn load_id_labels(&self) -> Result<LabelSet> {
        let path = self.resolve(&self.id_labels);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let labels: Vec<String> = serde_json::from_str(&text).map_err(|e| {
            Error::InvalidConfig(format!("{} is not a JSON array of strings: {e}", path.display()))
        })?;
        LabelSet::id(labels)
    }

    pub fn prompt_spec(&self, id_labels: &LabelSet) -> Result<Option<PromptSpec>> {
        if !self.envisions() {
            return Ok(None);
        }
        let mode = self.mode.expect("envisions() implies a mode");
        PromptSpec::new(
            mode,
            id_labels.clone(),
            self.total_outliers,
            self.per_class,
            self.class_type.as_deref(),
        )
        .map(Some)
    }

    pub fn client(&self) -> Result<LlmClient> {
        let endpoint = self
            .endpoint
            .clone()
            .ok_or_else(|| Error::InvalidConfig("envisioning requires an endpoint".into()))?;
        Ok(LlmClient::new(
            endpoint,
            ResponseCache::new(self.resolve(&self.cache_dir)),
            self.replay,
        ))
    }

    /// SHA-256 over the canonical config, excluding where outputs are written, whether
    /// responses come from the network or the cache, and how runs are scheduled.
    pub fn digest(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        canon.replay = false;
        canon.parallel_runs = false;
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "id_labels": "labels.json",
        "id_bundle": "id.manifest.json",
        "ood_bundles": [{"name": "a", "path": "a.manifest.json"}],
        "text_bundle": "text.manifest.json"
    }"#;

    #[test]
    fn defaults() {
        let cfg = EvalConfig::from_json(MINIMAL, "/data").unwrap();
        assert_eq!(cfg.runs, 3);
        assert_eq!(cfg.tpr, 0.95);
        assert_eq!(cfg.score, ScoreConfig::default());
        assert!(!cfg.envisions());
        assert_eq!(cfg.text_bundle, TextSource::Precomputed("text.manifest.json".into()));
        assert_eq!(cfg.resolve(Path::new("x")), PathBuf::from("/data/x"));
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_win() {
        let mut cfg = EvalConfig::from_json(MINIMAL, "/data").unwrap();
        cfg.apply(&Overrides {
            replay: true,
            beta: Some(0.5),
            score_fn: Some(ScoreFunction::Msp),
            runs: Some(1),
            output_dir: Some("/tmp/o".into()),
        });
        assert!(cfg.replay);
        assert_eq!(cfg.score.beta, 0.5);
        assert_eq!(cfg.score.function, ScoreFunction::Msp);
        assert_eq!(cfg.runs, 1);
        assert_eq!(cfg.output_path(), PathBuf::from("/tmp/o"));
    }

    #[test]
    fn invariants() {
        let mut cfg = EvalConfig::from_json(MINIMAL, "").unwrap();
        cfg.ood_bundles.clear();
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));

        let mut cfg = EvalConfig::from_json(MINIMAL, "").unwrap();
        cfg.runs = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = EvalConfig::from_json(MINIMAL, "").unwrap();
        cfg.mode = Some(PromptMode::Far);
        cfg.total_outliers = Some(5);
        assert!(cfg.validate().is_err(), "endpoint required");

        let mut cfg = EvalConfig::from_json(MINIMAL, "").unwrap();
        cfg.score.function = ScoreFunction::Energy;
        assert!(cfg.validate().is_err(), "energy needs outliers");

        assert!(EvalConfig::from_json(r#"{"id_labels": "x", "bogus": 1}"#, "").is_err());
    }

    #[test]
    fn digest_ignores_output_and_replay() {
        let a = EvalConfig::from_json(MINIMAL, "").unwrap();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.replay = true;
        assert_eq!(a.digest(), b.digest());
        b.score.beta = 0.3;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn request_extraction_keyword() {
        let text = MINIMAL.replace("\"text.manifest.json\"", "\"request_extraction\"");
        let cfg = EvalConfig::from_json(&text, "").unwrap();
        assert_eq!(cfg.text_bundle, TextSource::RequestExtraction);
    }
}

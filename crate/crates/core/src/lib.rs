//! Zero-shot out-of-distribution detection with LLM-envisioned outlier class labels.
//!
//! An LLM is asked for class names that look like, but are not, the in-distribution
//! classes. Their text embeddings join the ID label embeddings as extra classifier rows,
//! and a sample's detection score rewards similarity to ID labels while penalizing
//! similarity to the envisioned outliers. All embeddings arrive precomputed as bundles
//! (see [`bundle`]).
//!
//! The scoring and metric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the `f64` instantiations the pipeline uses.

pub mod bundle;
pub mod envision;
pub mod error;
pub mod labels;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod scoring;
pub mod similarity;

pub use bundle::{read_bundle, write_bundle, EmbeddingTable, Group, RowMeta};
pub use error::{Error, LoadError, Result};
pub use labels::{normalize_label, LabelSet, Role};
pub use metrics::{aupr, auroc, fpr_at_tpr, select_threshold, DetectionMetrics};
pub use scalar::Scalar;
pub use scoring::{
    detect, match_scores, score_energy, score_eoe, score_max, score_maxlogit, score_msp, Decision,
    ScoreConfig, ScoreFunction,
};
pub use similarity::cosine_similarity;

pub type ScoreVector = scoring::ScoreVector<f64>;
pub type ScoreVectorF32 = scoring::ScoreVector<f32>;
pub type ScorePartition = metrics::ScorePartition<f64>;
pub type ScorePartitionF32 = metrics::ScorePartition<f32>;

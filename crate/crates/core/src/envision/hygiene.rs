//! Candidate clean-up: exact-after-normalization deduplication against the ID labels and
//! the optional embedding-similarity filter.

use std::collections::HashSet;

use crate::bundle::EmbeddingTable;
use crate::error::{Error, Result};
use crate::labels::{normalize_label, LabelSet};
use crate::similarity::{cosine_similarity_named, widen};

/// Default cut-off when the similarity filter is enabled.
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.85;

/// Drops repeated candidates and any candidate equal to an ID label under
/// [`normalize_label`]. First occurrences keep their (trimmed) spelling and order.
pub fn dedup_and_filter<S: AsRef<str>>(candidates: &[S], id_labels: &LabelSet) -> LabelSet {
    let mut seen: HashSet<String> = id_labels.normalized();
    let kept: Vec<String> = candidates
        .iter()
        .map(|c| c.as_ref().trim())
        .filter(|c| {
            let key = normalize_label(c);
            !key.is_empty() && seen.insert(key)
        })
        .map(str::to_owned)
        .collect();
    LabelSet::outlier(kept).expect("deduplicated labels form a valid outlier set")
}

/// Indices of candidate rows whose best cosine similarity to any ID row is at most
/// `threshold`, in original order.
pub fn similarity_filter(
    candidates: &EmbeddingTable,
    id_embs: &EmbeddingTable,
    threshold: f64,
) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "similarity threshold must lie in (0, 1], got {threshold}"
        )));
    }
    if candidates.dim() != id_embs.dim() {
        return Err(Error::DimensionMismatch {
            expected: id_embs.dim(),
            found: candidates.dim(),
        });
    }
    let ids: Vec<(&str, Vec<f64>)> = id_embs
        .rows()
        .map(|(m, r)| (m.id.as_str(), widen(r)))
        .collect();
    let mut kept = Vec::with_capacity(candidates.len());
    for (i, (meta, row)) in candidates.rows().enumerate() {
        let cand: Vec<f64> = widen(row);
        let mut best = f64::NEG_INFINITY;
        for (id, id_row) in &ids {
            best = best.max(cosine_similarity_named(&cand, &meta.id, id_row, id)?);
        }
        if best <= threshold {
            kept.push(i);
        }
    }
    Ok(kept)
}

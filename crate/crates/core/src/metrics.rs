//! Threshold-free and threshold-based detection metrics with ID as the positive class.
//!
//! All comparisons against a threshold are inclusive (`score >= lambda` counts as
//! accepted), and the threshold itself is always an observed ID score.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scores of the ID and OOD populations for one evaluation pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePartition<T> {
    id: Vec<T>,
    ood: Vec<T>,
}

impl<T: Scalar> ScorePartition<T> {
    pub fn new(id: Vec<T>, ood: Vec<T>) -> Result<Self> {
        if id.is_empty() || ood.is_empty() {
            return Err(Error::InvalidConfig(
                "score partition needs non-empty ID and OOD populations".into(),
            ));
        }
        if id.iter().chain(&ood).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("scores must be finite".into()));
        }
        Ok(Self { id, ood })
    }

    pub fn id_scores(&self) -> &[T] {
        &self.id
    }

    pub fn ood_scores(&self) -> &[T] {
        &self.ood
    }

    /// The same scores with the roles of the two populations exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            id: self.ood.clone(),
            ood: self.id.clone(),
        }
    }
}

fn total_cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).expect("scores are finite")
}

fn sorted<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut v = xs.to_vec();
    v.sort_by(total_cmp);
    v
}

/// Smallest count `c` with `c / n >= tpr`, evaluated in the same floating-point form as
/// the definition so that no rounding of `tpr * n` can disagree with it.
fn required_count(n: usize, tpr: f64) -> usize {
    let nf = n as f64;
    let mut c = ((tpr * nf).ceil() as usize).clamp(1, n);
    while c > 1 && (c - 1) as f64 / nf >= tpr {
        c -= 1;
    }
    while c < n && (c as f64) / nf < tpr {
        c += 1;
    }
    c
}

/// Largest observed ID score `lambda` such that at least a `tpr` fraction of ID scores
/// satisfy `x >= lambda`.
///
/// # Panics
/// If `id_scores` is empty or `tpr` is outside `(0, 1]`.
pub fn select_threshold<T: Scalar>(id_scores: &[T], tpr: f64) -> T {
    assert!(!id_scores.is_empty(), "select_threshold needs at least one ID score");
    assert!(tpr > 0.0 && tpr <= 1.0, "tpr must lie in (0, 1], got {tpr}");
    let s = sorted(id_scores);
    let n = s.len();
    // The c-th largest value; ties below it only add to the accepted count.
    s[n - required_count(n, tpr)]
}

/// Fraction of OOD scores accepted at the threshold that keeps `tpr` of the ID scores.
pub fn fpr_at_tpr<T: Scalar>(p: &ScorePartition<T>, tpr: f64) -> f64 {
    let lambda = select_threshold(&p.id, tpr);
    let accepted = p.ood.iter().filter(|&&y| y >= lambda).count();
    accepted as f64 / p.ood.len() as f64
}

/// Mann-Whitney AUROC with half credit for ties, from mid-ranks of the pooled scores.
pub fn auroc<T: Scalar>(p: &ScorePartition<T>) -> f64 {
    let mut pooled: Vec<(T, bool)> = p
        .id
        .iter()
        .map(|&x| (x, true))
        .chain(p.ood.iter().map(|&y| (y, false)))
        .collect();
    pooled.sort_by(|a, b| total_cmp(&a.0, &b.0));

    // Twice the rank sum keeps mid-ranks integral.
    let mut twice_rank_sum_id: u64 = 0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1, mid-rank (i + j + 2) / 2
        let twice_mid = (i + j + 2) as u64;
        let ids_in_tie = pooled[i..=j].iter().filter(|e| e.1).count() as u64;
        twice_rank_sum_id += twice_mid * ids_in_tie;
        i = j + 1;
    }
    let n_id = p.id.len() as u64;
    let n_ood = p.ood.len() as u64;
    // 2U = 2R - n(n+1)
    let twice_u = twice_rank_sum_id - n_id * (n_id + 1);
    twice_u as f64 / (2 * n_id * n_ood) as f64
}

/// Step-wise area under the precision-recall curve, ID positive.
///
/// Thresholds sweep the distinct observed scores in descending order; each contributes
/// `precision * (recall - previous recall)`, starting from recall 0.
pub fn aupr<T: Scalar>(p: &ScorePartition<T>) -> f64 {
    let mut pooled: Vec<(T, bool)> = p
        .id
        .iter()
        .map(|&x| (x, true))
        .chain(p.ood.iter().map(|&y| (y, false)))
        .collect();
    pooled.sort_by(|a, b| total_cmp(&b.0, &a.0));

    let n_id = p.id.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == t {
            if pooled[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_id;
        if recall > prev_recall {
            let precision = tp as f64 / (tp + fp) as f64;
            area += precision * (recall - prev_recall);
            prev_recall = recall;
        }
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub fpr95: f64,
    pub auroc: f64,
    pub aupr: f64,
}

impl DetectionMetrics {
    /// FPR at the given TPR (reported under the `fpr95` name), AUROC and AUPR.
    pub fn compute<T: Scalar>(p: &ScorePartition<T>, tpr: f64) -> Self {
        Self {
            fpr95: fpr_at_tpr(p, tpr),
            auroc: auroc(p),
            aupr: aupr(p),
        }
    }
}

//! Class-name sets and the normalization rule used for every label equality test.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Id,
    Outlier,
}

/// Canonical form for label comparison: trimmed, case-folded, internal whitespace runs
/// collapsed to a single space.
pub fn normalize_label(label: &str) -> String {
    let lowered = label.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Ordered, duplicate-free (after normalization) list of class names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelSet {
    labels: Vec<String>,
    role: Role,
}

impl LabelSet {
    pub fn new(labels: Vec<String>, role: Role) -> Result<Self> {
        if role == Role::Id && labels.is_empty() {
            return Err(Error::InvalidLabels("ID label set must not be empty".into()));
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for label in &labels {
            let key = normalize_label(label);
            if key.is_empty() {
                return Err(Error::InvalidLabels("labels must be non-empty".into()));
            }
            if !seen.insert(key) {
                return Err(Error::InvalidLabels(format!("duplicate label {label:?}")));
            }
        }
        Ok(Self { labels, role })
    }

    pub fn id<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(labels.into_iter().map(Into::into).collect(), Role::Id)
    }

    pub fn outlier<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(labels.into_iter().map(Into::into).collect(), Role::Outlier)
    }

    pub fn empty_outliers() -> Self {
        Self {
            labels: Vec::new(),
            role: Role::Outlier,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    pub fn normalized(&self) -> HashSet<String> {
        self.labels.iter().map(|l| normalize_label(l)).collect()
    }

    /// Keeps the first `n` labels.
    pub fn truncate(&mut self, n: usize) {
        self.labels.truncate(n);
    }

    pub fn into_labels(self) -> Vec<String> {
        self.labels
    }
}

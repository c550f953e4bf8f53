//! Concept labels and their normalized keys.

use serde::{Deserialize, Serialize};

/// Case-folds, collapses internal whitespace and trims.
///
/// No stemming or lemmatization is applied, so "bias" and "biases" stay
/// distinct concepts.
pub fn normalize(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for word in label.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// A natural-language phrase naming a testable domain notion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Concept {
    label: String,
    norm: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("concept label {0:?} is empty after normalization")]
pub struct EmptyLabel(pub String);

impl Concept {
    pub fn new(label: &str) -> Result<Self, EmptyLabel> {
        let norm = normalize(label);
        if norm.is_empty() {
            return Err(EmptyLabel(label.to_string()));
        }
        Ok(Self {
            label: label.trim().to_string(),
            norm,
        })
    }

    /// Display form.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn norm(&self) -> &str {
        &self.norm
    }
}

impl std::fmt::Display for Concept {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label)
    }
}

//! Recall of a knowledge base against a reference concept list.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::concept::normalize;
use crate::kb::KnowledgeBase;
use crate::lm::{dot, unit, EmbeddingProvider};

/// Reference concepts for one task, deduplicated by norm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub task_name: String,
    pub concepts: Vec<String>,
}

impl GroundTruth {
    pub fn new(task_name: &str, labels: impl IntoIterator<Item = impl AsRef<str>>) -> Self {
        let mut seen = HashSet::new();
        let concepts = labels
            .into_iter()
            .map(|l| l.as_ref().trim().to_string())
            .filter(|l| !l.is_empty() && seen.insert(normalize(l)))
            .collect();
        Self {
            task_name: task_name.to_string(),
            concepts,
        }
    }

    /// One concept per line; blank lines ignored.
    pub fn from_text(task_name: &str, text: &str) -> Self {
        Self::new(task_name, text.lines())
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Count a near neighbour above the similarity threshold as a match.
    Automatic,
    /// Report exact matches only and list the nearest KB concepts for every
    /// other reference concept so a person can judge them.
    ExportForManual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRule {
    pub top_n: usize,
    pub sim_threshold: f64,
    pub mode: MatchMode,
}

impl Default for MatchRule {
    fn default() -> Self {
        Self {
            top_n: 10,
            sim_threshold: 0.8,
            mode: MatchMode::Automatic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub truth: String,
    pub kb_concept: String,
    pub similarity: f64,
}

/// Nearest KB concepts for a reference concept awaiting human judgment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualReview {
    pub truth: String,
    pub candidates: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_name: String,
    pub recall: f64,
    pub matched: Vec<Match>,
    pub unmatched: Vec<String>,
    pub kb_size: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub manual_review: Vec<ManualReview>,
}

impl EvalReport {
    /// Plain-text summary table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "task        {}\nrecall      {:.1}%\nmatched     {}\nunmatched   {}\nkb concepts {}\n",
            self.task_name,
            self.recall * 100.0,
            self.matched.len(),
            self.unmatched.len(),
            self.kb_size
        );
        if !self.unmatched.is_empty() {
            out.push_str("\nunmatched concepts:\n");
            for u in &self.unmatched {
                out.push_str(&format!("  {u}\n"));
            }
        }
        out
    }
}

pub fn compute_recall(
    kb: &KnowledgeBase,
    truth: &GroundTruth,
    rule: &MatchRule,
    embed: &dyn EmbeddingProvider,
) -> Result<EvalReport, EvalError> {
    let labels: Vec<String> = kb.labels().into_iter().map(str::to_string).collect();
    recall_against_labels(&labels, truth, rule, embed)
}

/// Recall against a flat list of KB labels.
pub fn recall_against_labels(
    kb_labels: &[String],
    truth: &GroundTruth,
    rule: &MatchRule,
    embed: &dyn EmbeddingProvider,
) -> Result<EvalReport, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::InvalidArgument("ground truth is empty".into()));
    }
    if rule.top_n == 0 {
        return Err(EvalError::InvalidArgument("top_n must be at least 1".into()));
    }
    let by_norm: HashMap<String, &String> = kb_labels.iter().map(|l| (normalize(l), l)).collect();
    let mut matched = Vec::new();
    let mut pending = Vec::new();
    for concept in &truth.concepts {
        match by_norm.get(&normalize(concept)) {
            Some(label) => matched.push(Match {
                truth: concept.clone(),
                kb_concept: (*label).clone(),
                similarity: 1.0,
            }),
            None => pending.push(concept.clone()),
        }
    }

    let mut unmatched = Vec::new();
    let mut manual_review = Vec::new();
    if !pending.is_empty() && !kb_labels.is_empty() {
        let kb_vectors: Vec<Vec<f64>> = embed.embed(kb_labels)?.into_iter().map(unit).collect::<Result<_, _>>()?;
        let truth_vectors: Vec<Vec<f64>> = embed.embed(&pending)?.into_iter().map(unit).collect::<Result<_, _>>()?;
        for (concept, v) in pending.into_iter().zip(&truth_vectors) {
            let mut neighbours: Vec<(usize, f64)> =
                kb_vectors.iter().map(|k| dot(v, k)).enumerate().collect();
            neighbours.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            neighbours.truncate(rule.top_n);
            match rule.mode {
                MatchMode::Automatic => match neighbours.first() {
                    Some(&(i, sim)) if sim >= rule.sim_threshold => matched.push(Match {
                        truth: concept,
                        kb_concept: kb_labels[i].clone(),
                        similarity: sim,
                    }),
                    _ => unmatched.push(concept),
                },
                MatchMode::ExportForManual => {
                    manual_review.push(ManualReview {
                        truth: concept.clone(),
                        candidates: neighbours
                            .into_iter()
                            .map(|(i, sim)| (kb_labels[i].clone(), sim))
                            .collect(),
                    });
                    unmatched.push(concept);
                }
            }
        }
    } else {
        unmatched = pending;
    }

    let total = matched.len() + unmatched.len();
    Ok(EvalReport {
        task_name: truth.task_name.clone(),
        recall: matched.len() as f64 / total as f64,
        matched,
        unmatched,
        kb_size: kb_labels.len(),
        manual_review,
    })
}

//! Edge sampling for manual precision labelling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::kb::{KnowledgeBase, NodeId, RelationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeLabel {
    Valid,
    Invalid,
}

impl std::str::FromStr for EdgeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "valid" | "1" | "yes" | "y" | "true" => Ok(Self::Valid),
            "invalid" | "0" | "no" | "n" | "false" => Ok(Self::Invalid),
            other => Err(format!("not an edge label: {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledEdge {
    pub parent_id: NodeId,
    pub parent: String,
    pub relation: RelationKind,
    pub child_id: NodeId,
    pub child: String,
    #[serde(default)]
    pub label: Option<EdgeLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSample {
    pub rng_seed: u64,
    pub edges: Vec<SampledEdge>,
}

/// Draws `size` distinct edges uniformly at random. The same KB and seed
/// always give the same sample.
pub fn sample_edges_for_precision(
    kb: &KnowledgeBase,
    size: usize,
    rng_seed: u64,
) -> Result<PrecisionSample, EvalError> {
    let edges = kb.edges();
    if size == 0 {
        return Err(EvalError::InvalidArgument("sample size must be at least 1".into()));
    }
    if size > edges.len() {
        return Err(EvalError::InvalidArgument(format!(
            "sample size {size} exceeds the {} edges in the knowledge base",
            edges.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picked = rand::seq::index::sample(&mut rng, edges.len(), size).into_vec();
    picked.sort_unstable();
    let edges = picked
        .into_iter()
        .map(|i| {
            let (p, c) = edges[i];
            let child = kb.node(c).expect("edge endpoints exist");
            SampledEdge {
                parent_id: p,
                parent: kb.node(p).expect("edge endpoints exist").label().to_string(),
                relation: child.relation.clone().expect("non-root node has a relation"),
                child_id: c,
                child: child.label().to_string(),
                label: None,
            }
        })
        .collect();
    Ok(PrecisionSample { rng_seed, edges })
}

/// Fraction of sampled edges labelled valid. Every edge must carry a label.
pub fn compute_precision(sample: &PrecisionSample) -> Result<f64, EvalError> {
    if sample.edges.is_empty() {
        return Err(EvalError::InvalidArgument("sample is empty".into()));
    }
    let missing = sample.edges.iter().filter(|e| e.label.is_none()).count();
    if missing > 0 {
        return Err(EvalError::IncompleteSample(missing));
    }
    let valid = sample
        .edges
        .iter()
        .filter(|e| e.label == Some(EdgeLabel::Valid))
        .count();
    Ok(valid as f64 / sample.edges.len() as f64)
}

//! Fully connected candidate graph: edge weights are pairwise concept
//! distances (diversity), node weights are normalized relevance to the
//! queried concept.

use crate::concept::Concept;
use crate::lm::{dot, relevance_sentence, EmbeddingProvider, ScoringProvider};

use super::RecommendError;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGraph {
    candidates: Vec<Concept>,
    seed: Concept,
    /// Row-major `n * n`.
    edge_w: Vec<f64>,
    node_w: Vec<f64>,
}

impl CandidateGraph {
    /// Builds a graph from explicit weights. The edge matrix must be square,
    /// symmetric, finite and non-negative with a zero diagonal; node weights
    /// finite and non-negative.
    pub fn from_weights(
        candidates: Vec<Concept>,
        seed: Concept,
        edge_w: &[Vec<f64>],
        node_w: Vec<f64>,
    ) -> Result<Self, RecommendError> {
        let n = candidates.len();
        let invalid = |msg: String| Err(RecommendError::InvalidArgument(msg));
        if edge_w.len() != n || node_w.len() != n || edge_w.iter().any(|row| row.len() != n) {
            return invalid(format!("weights do not match {n} candidates"));
        }
        for i in 0..n {
            if edge_w[i][i] != 0.0 {
                return invalid(format!("edge_w[{i}][{i}] must be 0"));
            }
            if !(node_w[i].is_finite() && node_w[i] >= 0.0) {
                return invalid(format!("node_w[{i}] = {} is not a non-negative real", node_w[i]));
            }
            for j in 0..n {
                let w = edge_w[i][j];
                if !(w.is_finite() && w >= 0.0) || w != edge_w[j][i] {
                    return invalid(format!("edge_w[{i}][{j}] = {w} breaks symmetry or sign"));
                }
            }
        }
        Ok(Self {
            candidates,
            seed,
            edge_w: edge_w.iter().flatten().copied().collect(),
            node_w,
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[Concept] {
        &self.candidates
    }

    pub fn seed(&self) -> &Concept {
        &self.seed
    }

    pub fn edge(&self, i: usize, j: usize) -> f64 {
        self.edge_w[i * self.len() + j]
    }

    pub fn node(&self, i: usize) -> f64 {
        self.node_w[i]
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_w
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.edge_w[i * n..(i + 1) * n]
    }

    /// Every node and edge weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            candidates: self.candidates.clone(),
            seed: self.seed.clone(),
            edge_w: self.edge_w.iter().map(|w| w * factor).collect(),
            node_w: self.node_w.iter().map(|w| w * factor).collect(),
        }
    }
}

/// Embeds the candidates and scores each one's relevance to `seed`.
///
/// Edge weight is cosine distance `1 - v_i·v_j` of unit embeddings, clamped
/// to `[0, 2]`. Relevance is `-ln(perplexity)` of the carrier sentence,
/// min-max normalized over the pool to `[0, 1]`; a pool with equal relevance
/// everywhere gets 0.5 for every node.
pub fn build_graph(
    candidates: Vec<Concept>,
    seed: &Concept,
    embed: &dyn EmbeddingProvider,
    score: &dyn ScoringProvider,
) -> Result<CandidateGraph, RecommendError> {
    let n = candidates.len();
    if n == 0 {
        return Err(RecommendError::InvalidArgument("no candidates".into()));
    }
    let labels: Vec<String> = candidates.iter().map(|c| c.label().to_string()).collect();
    let vectors = embed.embed(&labels)?;
    let mut edge_w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (1.0 - dot(&vectors[i], &vectors[j])).clamp(0.0, 2.0);
            edge_w[i][j] = d;
            edge_w[j][i] = d;
        }
    }

    let sentences: Vec<String> = labels
        .iter()
        .map(|label| relevance_sentence(label, seed.label()))
        .collect();
    let perplexities = score_all(&sentences, score)?;
    let raw: Vec<f64> = perplexities.iter().map(|p| -p.ln()).collect();
    let node_w = min_max(&raw);

    CandidateGraph::from_weights(candidates, seed.clone(), &edge_w, node_w)
}

fn score_all(sentences: &[String], score: &dyn ScoringProvider) -> Result<Vec<f64>, RecommendError> {
    const CHUNK: usize = 16;
    if sentences.len() <= CHUNK {
        return sentences
            .iter()
            .map(|s| score.perplexity(s).map_err(RecommendError::from))
            .collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = sentences
            .chunks(CHUNK)
            .map(|chunk| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|s| score.perplexity(s))
                        .collect::<Result<Vec<f64>, _>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(sentences.len());
        for handle in handles {
            out.extend(handle.join().expect("scoring thread panicked")?);
        }
        Ok(out)
    })
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range <= 1e-12 * max.abs().max(1.0) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - min) / range).collect()
}

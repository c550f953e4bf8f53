//! Diverse-yet-relevant concept recommendation.

mod brute;
mod graph;
mod peel;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::kb::{KbError, KnowledgeBase, NodeId};
use crate::lm::{EmbeddingProvider, LmError, ScoringProvider};

pub use brute::{binomial, brute_force_best, MAX_SUBSETS};
pub use graph::{build_graph, CandidateGraph};
pub use peel::{greedy_peel, objective_of, PeelStep, Peeler, RecommenderConfig, Selection};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecommendError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("C({n}, {k}) = {subsets} subsets exceeds the exhaustive-search limit")]
    TooLarge { n: usize, k: usize, subsets: u128 },
}

/// Result of one recommendation request for a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub node: NodeId,
    pub k: usize,
    /// Recommended pool members, best first.
    pub chosen: Vec<NodeId>,
    pub selection: Selection,
}

/// Graph construction and peeling bound to embedding/scoring providers.
#[derive(Clone)]
pub struct Recommender {
    pub config: RecommenderConfig,
    embed: Arc<dyn EmbeddingProvider>,
    score: Arc<dyn ScoringProvider>,
}

impl std::fmt::Debug for Recommender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Recommender")
            .field("config", &self.config)
            .field("embed", &self.embed.id())
            .field("score", &self.score.id())
            .finish()
    }
}

impl Recommender {
    pub fn new(
        config: RecommenderConfig,
        embed: Arc<dyn EmbeddingProvider>,
        score: Arc<dyn ScoringProvider>,
    ) -> Result<Self, RecommendError> {
        config.validate()?;
        Ok(Self { config, embed, score })
    }

    pub fn embedder(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.embed
    }

    /// Top-`k` children of `node`.
    pub fn recommend(&self, kb: &KnowledgeBase, node: NodeId, k: usize) -> Result<Recommendation, RecommendError> {
        let pool = kb.children(node)?.to_vec();
        self.recommend_pool(kb, node, &pool, k)
    }

    /// Top-`k` of an explicit pool, scored for relevance against `node`.
    pub fn recommend_pool(
        &self,
        kb: &KnowledgeBase,
        node: NodeId,
        pool: &[NodeId],
        k: usize,
    ) -> Result<Recommendation, RecommendError> {
        if k == 0 {
            return Err(RecommendError::InvalidArgument("k must be at least 1".into()));
        }
        let seed = kb.node(node)?.concept.clone();
        if pool.is_empty() {
            return Ok(Recommendation {
                node,
                k,
                chosen: Vec::new(),
                selection: Selection {
                    chosen: Vec::new(),
                    objective: 0.0,
                    peel_trace: Vec::new(),
                },
            });
        }
        let candidates = pool
            .iter()
            .map(|id| kb.node(*id).map(|n| n.concept.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let graph = build_graph(candidates, &seed, self.embed.as_ref(), self.score.as_ref())?;
        let cfg = RecommenderConfig { k, ..self.config.clone() };
        let selection = greedy_peel(&graph, &cfg);
        Ok(Recommendation {
            node,
            k,
            chosen: selection.chosen.iter().map(|&i| pool[i]).collect(),
            selection,
        })
    }
}

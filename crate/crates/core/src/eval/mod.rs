//! Measurement of generated knowledge bases.

mod cluster;
mod precision;
mod recall;

pub use cluster::{cut, cluster_concepts, cluster_hits, ward_clusters, ClusterAssignment, ClusteringConfig, Linkage, Merge};
pub use precision::{compute_precision, sample_edges_for_precision, EdgeLabel, PrecisionSample, SampledEdge};
pub use recall::{compute_recall, recall_against_labels, GroundTruth, ManualReview, Match, MatchMode, MatchRule, EvalReport};

use crate::lm::LmError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sample is incomplete: {0} edges lack a label")]
    IncompleteSample(usize),
}

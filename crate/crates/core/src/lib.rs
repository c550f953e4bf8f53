//! Requirements-elicitation engine for model testing.
//!
//! Starting from a seed concept, [`kb::generate_kb`] prompts a language model
//! with relation templates to grow a tree of related concepts. The
//! [`recommender`] picks diverse yet relevant children to show first, and
//! [`eval`] holds the measurement tools used to judge generated knowledge
//! bases: recall against reference concept lists, edge sampling for
//! precision labeling, and Ward clustering for distinctiveness.
//!
//! Every model-backed step goes through the provider traits in [`lm`]; the
//! [`lm::mock`] providers make the whole pipeline run offline and
//! deterministically.

pub mod concept;
pub mod eval;
pub mod kb;
pub mod lm;
pub mod recommender;

pub use concept::{normalize, Concept};
pub use kb::{ExpansionConfig, KbError, KnowledgeBase, NodeId, RelationKind};
pub use recommender::{Recommender, RecommenderConfig};

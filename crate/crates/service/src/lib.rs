//! Interactive sessions over a generated knowledge base.
//!
//! [`Engine`] holds the session logic and is fully synchronous; [`http`]
//! binds it to a JSON API.

mod engine;
mod error;
pub mod export;
pub mod http;
mod session;
mod store;

pub use engine::{Engine, Providers};
pub use error::ServiceError;
pub use export::{ExportBundle, ExportFormat, ExportedConcept, PathStep};
pub use session::{
    CreateNode, CreateSession, ExpandRequest, ExpandResponse, NearDuplicate, NodeRecommendation, NodeView,
    PrefetchReport, RecommendationView, RemoveResponse, SessionConfig, SessionOverrides, SessionRecord,
    SuggestRequest, SuggestionsView, TreeView, UpdateNode,
};
pub use store::{JsonFileStore, MemoryStore, SessionStore, StoreError};

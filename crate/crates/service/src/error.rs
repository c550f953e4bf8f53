use serde_json::{json, Value};
use weaver_core::kb::ExpansionError;
use weaver_core::lm::LmError;
use weaver_core::recommender::RecommendError;
use weaver_core::KbError;

use crate::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("session {0} does not exist")]
    UnknownSession(String),
    #[error(transparent)]
    Kb(KbError),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Conflict(String),
    #[error("model provider failed: {0}")]
    Provider(LmError),
    #[error("{message}")]
    Generation { message: String, detail: Value },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("no such endpoint")]
    NoRoute,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownSession(_) => "unknown_session",
            Self::Kb(KbError::UnknownNode(_)) => "unknown_node",
            Self::Kb(KbError::DuplicateConcept { .. }) => "duplicate_concept",
            Self::Kb(KbError::BudgetExhausted(_)) => "budget_exhausted",
            Self::Kb(KbError::Document(_)) => "corrupt_session",
            Self::Kb(_) | Self::Validation(_) => "invalid_request",
            Self::Conflict(_) => "conflict",
            Self::Provider(_) | Self::Generation { .. } => "provider_error",
            Self::Store(_) => "storage_error",
            Self::NoRoute => "not_found",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            Self::UnknownSession(_) | Self::Kb(KbError::UnknownNode(_)) | Self::NoRoute => 404,
            Self::Kb(KbError::DuplicateConcept { .. }) | Self::Conflict(_) => 409,
            Self::Kb(KbError::Document(_)) | Self::Store(_) => 500,
            Self::Kb(_) | Self::Validation(_) => 422,
            Self::Provider(_) | Self::Generation { .. } => 502,
        }
    }

    /// Conflicts can be retried as-is.
    pub fn retryable(&self) -> bool {
        matches!(self, Self::Conflict(_)) || matches!(self, Self::Provider(e) if e.is_transient())
    }

    pub fn detail(&self) -> Value {
        match self {
            Self::Kb(KbError::DuplicateConcept { existing, .. }) => json!({ "existing": existing }),
            Self::Provider(e) => provider_detail(e),
            Self::Generation { detail, .. } => detail.clone(),
            Self::Conflict(_) => json!({ "retryable": true }),
            _ => Value::Null,
        }
    }

    pub fn body(&self) -> Value {
        json!({ "code": self.code(), "message": self.to_string(), "detail": self.detail() })
    }
}

fn provider_detail(e: &LmError) -> Value {
    json!({ "status": e.status(), "transient": e.is_transient() })
}

impl From<KbError> for ServiceError {
    fn from(e: KbError) -> Self {
        Self::Kb(e)
    }
}

impl From<LmError> for ServiceError {
    fn from(e: LmError) -> Self {
        Self::Provider(e)
    }
}

impl From<RecommendError> for ServiceError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::Lm(e) => Self::Provider(e),
            RecommendError::Kb(e) => Self::Kb(e),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<ExpansionError> for ServiceError {
    fn from(e: ExpansionError) -> Self {
        match e {
            ExpansionError::Kb(e) => Self::Kb(e),
            ExpansionError::Stale(node) => {
                Self::Conflict(format!("node {node} was edited while its expansion was running; retry"))
            }
            ExpansionError::Recommend(e) => e.into(),
            ExpansionError::AllRelationsFailed { node, ref failures } => Self::Generation {
                message: e.to_string(),
                detail: json!({
                    "node": node,
                    "failures": failures
                        .iter()
                        .map(|(r, err)| json!({ "relation": r, "error": err.to_string(), "status": err.status() }))
                        .collect::<Vec<_>>(),
                }),
            },
            ExpansionError::EmptyFirstLayer => Self::Generation {
                message: e.to_string(),
                detail: Value::Null,
            },
        }
    }
}

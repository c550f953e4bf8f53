//! Session state, its persisted form, and the request/response types of the
//! API.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use weaver_core::kb::{KbDocument, KbNode, Provenance};
use weaver_core::{ExpansionConfig, KbError, KnowledgeBase, NodeId, RecommenderConfig, RelationKind};

use crate::error::ServiceError;

fn default_suggestions() -> usize {
    5
}

/// Per-session knobs besides the expansion config, which lives in the KB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub recommender: RecommenderConfig,
    #[serde(default = "default_suggestions")]
    pub suggestions: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            recommender: RecommenderConfig::default(),
            suggestions: default_suggestions(),
        }
    }
}

/// Current recommendation for one node's children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecommendation {
    pub k: usize,
    pub chosen: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub(crate) struct Session {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub config: SessionConfig,
    pub kb: KnowledgeBase,
    pub recommendations: BTreeMap<NodeId, NodeRecommendation>,
    pub suggestions: BTreeMap<NodeId, Vec<String>>,
}

/// On-disk form of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub config: SessionConfig,
    pub kb: KbDocument,
    #[serde(default)]
    pub recommendations: BTreeMap<NodeId, NodeRecommendation>,
    #[serde(default)]
    pub suggestions: BTreeMap<NodeId, Vec<String>>,
}

impl Session {
    pub fn to_record(&self) -> SessionRecord {
        SessionRecord {
            id: self.id.clone(),
            created_at: self.created_at,
            updated_at: self.updated_at,
            config: self.config.clone(),
            kb: self.kb.to_document(),
            recommendations: self.recommendations.clone(),
            suggestions: self.suggestions.clone(),
        }
    }

    pub fn from_record(record: SessionRecord) -> Result<Self, KbError> {
        let kb = KnowledgeBase::from_document(record.kb)?;
        for id in record.recommendations.keys().chain(record.suggestions.keys()) {
            if !kb.contains(*id) {
                return Err(KbError::Document(format!("session state refers to missing node {id}")));
            }
        }
        Ok(Self {
            id: record.id,
            created_at: record.created_at,
            updated_at: record.updated_at,
            config: record.config,
            kb,
            recommendations: record.recommendations,
            suggestions: record.suggestions,
        })
    }

    pub fn touch(&mut self) {
        self.updated_at = Utc::now().max(self.created_at);
    }

    /// Drops per-node state for removed nodes and prunes them from their
    /// parents' recommendation lists.
    pub fn forget(&mut self, removed: &[NodeId]) {
        for id in removed {
            self.recommendations.remove(id);
            self.suggestions.remove(id);
        }
        for rec in self.recommendations.values_mut() {
            rec.chosen.retain(|id| !removed.contains(id));
        }
    }

    pub fn node_view(&self, id: NodeId, depth: Option<usize>) -> Result<NodeView, KbError> {
        let node = self.kb.node(id)?;
        let children = match depth {
            Some(0) => Vec::new(),
            _ => node
                .children
                .iter()
                .map(|c| self.node_view(*c, depth.map(|d| d - 1)))
                .collect::<Result<_, _>>()?,
        };
        Ok(NodeView::new(&self.kb, node, self.recommendations.get(&id), children))
    }

    pub fn tree_view(&self) -> TreeView {
        TreeView {
            session_id: self.id.clone(),
            seed: self.kb.seed().label().to_string(),
            created_at: self.created_at,
            updated_at: self.updated_at,
            size: self.kb.len(),
            remaining_budget: self.kb.remaining_budget(),
            config: self.config.clone(),
            expansion: self.kb.config().clone(),
            tree: self.node_view(self.kb.root_id(), None).expect("root exists"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: NodeId,
    pub label: String,
    pub relation: Option<RelationKind>,
    /// Readable relation phrase, e.g. "a type of".
    pub relation_display: Option<String>,
    pub parent_id: Option<NodeId>,
    pub depth: usize,
    pub selected: bool,
    pub provenance: Provenance,
    pub child_count: usize,
    /// Recommended children, best first, when recommendations exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommended: Option<NodeRecommendation>,
    #[serde(default)]
    pub children: Vec<NodeView>,
}

impl NodeView {
    fn new(kb: &KnowledgeBase, node: &KbNode, rec: Option<&NodeRecommendation>, children: Vec<NodeView>) -> Self {
        Self {
            id: node.id,
            label: node.label().to_string(),
            relation: node.relation.clone(),
            relation_display: node
                .relation
                .as_ref()
                .and_then(|r| kb.catalog().get(r).ok())
                .map(|t| t.display.clone()),
            parent_id: node.parent,
            depth: node.depth,
            selected: node.selected,
            provenance: node.provenance.clone(),
            child_count: node.children.len(),
            recommended: rec.cloned(),
            children,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeView {
    pub session_id: String,
    pub seed: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub size: usize,
    pub remaining_budget: usize,
    pub config: SessionConfig,
    pub expansion: ExpansionConfig,
    pub tree: NodeView,
}

/// Optional overrides applied on top of the engine defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionOverrides {
    pub n_per_relation: Option<usize>,
    pub max_kb_size: Option<usize>,
    pub initial_layers: Option<usize>,
    pub relations_layer1: Option<Vec<RelationKind>>,
    pub relations_layer2: Option<Vec<RelationKind>>,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub k_growth: Option<usize>,
    pub suggestions: Option<usize>,
}

impl SessionOverrides {
    pub fn apply(&self, expansion: &mut ExpansionConfig, session: &mut SessionConfig) {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = &self.$field { $target = v.clone(); })*
            };
        }
        set!(
            n_per_relation => expansion.n_per_relation,
            max_kb_size => expansion.max_kb_size,
            initial_layers => expansion.initial_layers,
            relations_layer1 => expansion.relations_layer1,
            relations_layer2 => expansion.relations_layer2,
            k => session.recommender.k,
            alpha => session.recommender.alpha,
            k_growth => session.recommender.k_growth,
            suggestions => session.suggestions,
        );
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub seed: String,
    #[serde(default)]
    pub config: SessionOverrides,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpandRequest {
    /// Defaults to the session's layer-1 relations.
    pub relations: Option<Vec<RelationKind>>,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearDuplicate {
    pub node: NodeId,
    pub similar_to: NodeId,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRelation {
    pub relation: RelationKind,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandResponse {
    /// The expanded node with its direct children.
    pub node: NodeView,
    pub new_nodes: Vec<NodeId>,
    pub duplicates: usize,
    pub truncated: bool,
    pub failed: Vec<FailedRelation>,
    pub unparseable: Vec<RelationKind>,
    /// New concepts whose embedding is very close to an existing one.
    pub near_duplicates: Vec<NearDuplicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub node: NodeId,
    pub k: usize,
    pub chosen: Vec<NodeView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateNode {
    pub parent_id: NodeId,
    pub label: String,
    pub relation: Option<RelationKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateNode {
    pub label: Option<String>,
    pub selected: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoveResponse {
    pub removed: Vec<NodeId>,
    pub parent: NodeView,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestRequest {
    /// Number of test inputs; defaults to the session setting.
    pub m: Option<usize>,
    /// Task the tested model handles; defaults to the seed.
    pub task: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionsView {
    pub node: NodeId,
    pub prompt: String,
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefetchReport {
    pub warmed: Vec<NodeId>,
    pub skipped: Vec<NodeId>,
}

pub(crate) fn validate_overrides(expansion: &ExpansionConfig, config: &SessionConfig) -> Result<(), ServiceError> {
    expansion.validate()?;
    config.recommender.validate()?;
    if config.suggestions == 0 {
        return Err(ServiceError::Validation("suggestions must be at least 1".into()));
    }
    Ok(())
}

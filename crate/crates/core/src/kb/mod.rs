//! Knowledge-base data model: a rooted tree of concepts where every non-root
//! node records its relation to the parent and where it came from.

mod document;
mod expand;
mod parse;
mod prompt;
mod relation;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::concept::{Concept, EmptyLabel};

pub use document::{KbDocument, NodeRecord, SCHEMA_VERSION};
pub use expand::{
    apply_expansion, expand_node, fetch_expansion, generate_kb, plan_expansion, ExpansionError,
    ExpansionOutcome, ExpansionPlan, Generation, PlannedPrompt,
};
pub use parse::{parse_concept_list, ParsedList};
pub use prompt::{build_context, prompt_hash, render_list_prompt, render_prompt_frame, PROMPT_FRAME_SUFFIX};
pub use relation::{CatalogError, RelationCatalog, RelationKind, RelationTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::str::FromStr for NodeId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(NodeId)
    }
}

/// Where a node's concept came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Seed,
    Llm { model: String, prompt_hash: String },
    UserCreated,
    UserEdited,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbNode {
    pub id: NodeId,
    pub concept: Concept,
    /// `None` only for the root.
    pub relation: Option<RelationKind>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub depth: usize,
    pub provenance: Provenance,
    pub selected: bool,
}

impl KbNode {
    pub fn label(&self) -> &str {
        self.concept.label()
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }
}

/// Knobs for pre-generation and on-demand expansion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionConfig {
    /// The count substituted for `{N}` in list templates.
    pub n_per_relation: usize,
    pub relations_layer1: Vec<RelationKind>,
    pub relations_layer2: Vec<RelationKind>,
    pub initial_layers: usize,
    pub max_kb_size: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub custom_relations: Vec<RelationTemplate>,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        use RelationKind::*;
        Self {
            n_per_relation: 10,
            relations_layer1: RelationKind::BUILTIN.to_vec(),
            relations_layer2: vec![TypeOf, PartOf, MannerOf, Causes, RelatedTo],
            initial_layers: 2,
            max_kb_size: 600,
            custom_relations: Vec::new(),
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<RelationCatalog, KbError> {
        if self.n_per_relation == 0 {
            return Err(KbError::InvalidConfig("n_per_relation must be at least 1".into()));
        }
        if self.initial_layers == 0 {
            return Err(KbError::InvalidConfig("initial_layers must be at least 1".into()));
        }
        if self.max_kb_size == 0 {
            return Err(KbError::InvalidConfig("max_kb_size must be at least 1".into()));
        }
        if self.relations_layer1.is_empty() || self.relations_layer2.is_empty() {
            return Err(KbError::InvalidConfig("relation subsets must be non-empty".into()));
        }
        let catalog = RelationCatalog::with_custom(&self.custom_relations)?;
        catalog.ordered(&self.relations_layer1)?;
        catalog.ordered(&self.relations_layer2)?;
        Ok(catalog)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KbError {
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("concept {label:?} already exists as node {existing}")]
    DuplicateConcept { label: String, existing: NodeId },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error(transparent)]
    EmptyLabel(#[from] EmptyLabel),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("knowledge base is at its size budget of {0} nodes")]
    BudgetExhausted(usize),
    #[error("invalid expansion config: {0}")]
    InvalidConfig(String),
    #[error("invalid knowledge-base document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("knowledge-base audit failed: {0}")]
pub struct AuditError(pub String);

/// Rooted concept tree with a unique-norm index.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    nodes: BTreeMap<NodeId, KbNode>,
    index: HashMap<String, NodeId>,
    root: NodeId,
    next_id: u64,
    config: ExpansionConfig,
    catalog: RelationCatalog,
}

impl KnowledgeBase {
    pub fn new(seed_label: &str, config: ExpansionConfig) -> Result<Self, KbError> {
        let catalog = config.validate()?;
        let concept = Concept::new(seed_label)?;
        let root = NodeId(0);
        let mut index = HashMap::new();
        index.insert(concept.norm().to_string(), root);
        let mut nodes = BTreeMap::new();
        nodes.insert(
            root,
            KbNode {
                id: root,
                concept,
                relation: None,
                parent: None,
                children: Vec::new(),
                depth: 0,
                provenance: Provenance::Seed,
                selected: false,
            },
        );
        Ok(Self {
            nodes,
            index,
            root,
            next_id: 1,
            config,
            catalog,
        })
    }

    pub fn root_id(&self) -> NodeId {
        self.root
    }

    pub fn root(&self) -> &KbNode {
        &self.nodes[&self.root]
    }

    pub fn seed(&self) -> &Concept {
        &self.root().concept
    }

    pub fn config(&self) -> &ExpansionConfig {
        &self.config
    }

    pub fn catalog(&self) -> &RelationCatalog {
        &self.catalog
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn remaining_budget(&self) -> usize {
        self.config.max_kb_size.saturating_sub(self.nodes.len())
    }

    pub fn get(&self, id: NodeId) -> Option<&KbNode> {
        self.nodes.get(&id)
    }

    pub fn node(&self, id: NodeId) -> Result<&KbNode, KbError> {
        self.nodes.get(&id).ok_or(KbError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    /// Node holding the concept with normalized form `norm`.
    pub fn lookup(&self, norm: &str) -> Option<NodeId> {
        self.index.get(norm).copied()
    }

    pub fn children(&self, id: NodeId) -> Result<&[NodeId], KbError> {
        Ok(&self.node(id)?.children)
    }

    /// Node ids from the root down to `id`, inclusive.
    pub fn path(&self, id: NodeId) -> Result<Vec<NodeId>, KbError> {
        let mut path = vec![id];
        let mut current = self.node(id)?;
        while let Some(parent) = current.parent {
            path.push(parent);
            current = self.node(parent)?;
        }
        path.reverse();
        Ok(path)
    }

    /// All nodes in pre-order.
    pub fn preorder(&self) -> Vec<NodeId> {
        self.subtree(self.root).expect("root exists")
    }

    /// `id` and its descendants in pre-order.
    pub fn subtree(&self, id: NodeId) -> Result<Vec<NodeId>, KbError> {
        self.node(id)?;
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(next) = stack.pop() {
            out.push(next);
            let node = &self.nodes[&next];
            stack.extend(node.children.iter().rev());
        }
        Ok(out)
    }

    /// Labels of every node in pre-order.
    pub fn labels(&self) -> Vec<&str> {
        self.preorder().into_iter().map(|id| self.nodes[&id].label()).collect()
    }

    /// Selected nodes in pre-order.
    pub fn selected(&self) -> Vec<NodeId> {
        self.preorder()
            .into_iter()
            .filter(|id| self.nodes[id].selected)
            .collect()
    }

    /// Parent/child edges in pre-order of the child.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.preorder()
            .into_iter()
            .filter_map(|id| self.nodes[&id].parent.map(|p| (p, id)))
            .collect()
    }

    pub(crate) fn insert_child(
        &mut self,
        parent: NodeId,
        label: &str,
        relation: RelationKind,
        provenance: Provenance,
    ) -> Result<NodeId, KbError> {
        let concept = Concept::new(label)?;
        let depth = self.node(parent)?.depth + 1;
        self.catalog.get(&relation)?;
        if let Some(existing) = self.lookup(concept.norm()) {
            return Err(KbError::DuplicateConcept {
                label: concept.label().to_string(),
                existing,
            });
        }
        if self.remaining_budget() == 0 {
            return Err(KbError::BudgetExhausted(self.config.max_kb_size));
        }
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.index.insert(concept.norm().to_string(), id);
        self.nodes.insert(
            id,
            KbNode {
                id,
                concept,
                relation: Some(relation),
                parent: Some(parent),
                children: Vec::new(),
                depth,
                provenance,
                selected: false,
            },
        );
        self.nodes.get_mut(&parent).expect("checked").children.push(id);
        Ok(id)
    }

    /// Adds a user-created child. A missing relation is recorded as
    /// [`RelationKind::RelatedTo`].
    pub fn create_concept(
        &mut self,
        parent: NodeId,
        label: &str,
        relation: Option<RelationKind>,
    ) -> Result<NodeId, KbError> {
        self.insert_child(
            parent,
            label,
            relation.unwrap_or(RelationKind::RelatedTo),
            Provenance::UserCreated,
        )
    }

    /// Relabels a node, re-indexing its norm. The old norm becomes free.
    pub fn edit_concept(&mut self, id: NodeId, new_label: &str) -> Result<(), KbError> {
        let concept = Concept::new(new_label)?;
        let old_norm = self.node(id)?.concept.norm().to_string();
        if let Some(existing) = self.lookup(concept.norm()) {
            if existing != id {
                return Err(KbError::DuplicateConcept {
                    label: concept.label().to_string(),
                    existing,
                });
            }
        }
        self.index.remove(&old_norm);
        self.index.insert(concept.norm().to_string(), id);
        let node = self.nodes.get_mut(&id).expect("checked");
        node.concept = concept;
        node.provenance = Provenance::UserEdited;
        Ok(())
    }

    /// Deletes `id` and its whole subtree, returning the removed ids in pre-order.
    pub fn remove_concept(&mut self, id: NodeId) -> Result<Vec<NodeId>, KbError> {
        let parent = self
            .node(id)?
            .parent
            .ok_or_else(|| KbError::InvalidTarget("the root concept cannot be removed".into()))?;
        let removed = self.subtree(id)?;
        for gone in &removed {
            let node = self.nodes.remove(gone).expect("in subtree");
            self.index.remove(node.concept.norm());
        }
        self.nodes
            .get_mut(&parent)
            .expect("parent of live node")
            .children
            .retain(|c| *c != id);
        Ok(removed)
    }

    pub fn select_concept(&mut self, id: NodeId, selected: bool) -> Result<(), KbError> {
        self.nodes.get_mut(&id).ok_or(KbError::UnknownNode(id))?.selected = selected;
        Ok(())
    }

    /// Checks every structural invariant: single root, depth and parent
    /// links, relation presence, acyclicity, and that the norm index is a
    /// bijection onto the reachable nodes.
    pub fn audit(&self) -> Result<(), AuditError> {
        let fail = |msg: String| Err(AuditError(msg));
        let roots: Vec<_> = self.nodes.values().filter(|n| n.parent.is_none()).collect();
        if roots.len() != 1 || roots[0].id != self.root {
            return fail(format!("expected exactly one root, found {}", roots.len()));
        }
        if self.nodes.len() > self.config.max_kb_size {
            return fail(format!(
                "{} nodes exceed the budget of {}",
                self.nodes.len(),
                self.config.max_kb_size
            ));
        }
        let reachable = self.preorder();
        if reachable.len() != self.nodes.len() {
            return fail(format!(
                "{} nodes stored but {} reachable from the root",
                self.nodes.len(),
                reachable.len()
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &reachable {
            if !seen.insert(*id) {
                return fail(format!("node {id} reachable twice"));
            }
            let node = &self.nodes[id];
            if node.id != *id {
                return fail(format!("node stored under {id} claims id {}", node.id));
            }
            match node.parent {
                None => {
                    if node.depth != 0 || node.relation.is_some() {
                        return fail("root must have depth 0 and no relation".into());
                    }
                }
                Some(parent) => {
                    let Some(p) = self.nodes.get(&parent) else {
                        return fail(format!("node {id} has missing parent {parent}"));
                    };
                    if node.depth != p.depth + 1 {
                        return fail(format!("node {id} depth {} under parent depth {}", node.depth, p.depth));
                    }
                    if !p.children.contains(id) {
                        return fail(format!("node {id} not listed among its parent's children"));
                    }
                    match &node.relation {
                        None => return fail(format!("non-root node {id} has no relation")),
                        Some(kind) if !self.catalog.contains(kind) => {
                            return fail(format!("node {id} uses unknown relation {kind}"))
                        }
                        Some(_) => {}
                    }
                }
            }
            for child in &node.children {
                if self.nodes.get(child).and_then(|c| c.parent) != Some(*id) {
                    return fail(format!("child {child} of {id} does not point back"));
                }
            }
            if *id >= NodeId(self.next_id) {
                return fail(format!("node {id} not below the id counter {}", self.next_id));
            }
            match self.index.get(node.concept.norm()) {
                Some(indexed) if indexed == id => {}
                other => {
                    return fail(format!(
                        "norm {:?} of node {id} indexed as {other:?}",
                        node.concept.norm()
                    ))
                }
            }
        }
        if self.index.len() != reachable.len() {
            return fail(format!(
                "index holds {} norms for {} nodes",
                self.index.len(),
                reachable.len()
            ));
        }
        Ok(())
    }
}

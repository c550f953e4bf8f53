//! JSON persistence/export format for a knowledge base. Nodes are written
//! in pre-order so a document can be rebuilt in a single pass.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{ExpansionConfig, KbError, KbNode, KnowledgeBase, NodeId, Provenance, RelationKind};
use crate::concept::Concept;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbDocument {
    pub schema_version: u32,
    pub seed: String,
    pub config: ExpansionConfig,
    /// Next id to hand out; keeps ids unique across save/load cycles even
    /// after removals.
    pub next_id: u64,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub label: String,
    pub relation: Option<RelationKind>,
    pub parent_id: Option<NodeId>,
    pub depth: usize,
    pub provenance: Provenance,
    pub selected: bool,
}

impl NodeRecord {
    pub fn from_node(node: &KbNode) -> Self {
        Self {
            id: node.id,
            label: node.label().to_string(),
            relation: node.relation.clone(),
            parent_id: node.parent,
            depth: node.depth,
            provenance: node.provenance.clone(),
            selected: node.selected,
        }
    }
}

impl KnowledgeBase {
    pub fn to_document(&self) -> KbDocument {
        KbDocument {
            schema_version: SCHEMA_VERSION,
            seed: self.seed().label().to_string(),
            config: self.config.clone(),
            next_id: self.next_id,
            nodes: self
                .preorder()
                .into_iter()
                .map(|id| NodeRecord::from_node(&self.nodes[&id]))
                .collect(),
        }
    }

    /// Pretty-printed JSON; byte-identical for identical knowledge bases.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("document serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, KbError> {
        let doc: KbDocument =
            serde_json::from_str(json).map_err(|e| KbError::Document(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_document(doc: KbDocument) -> Result<Self, KbError> {
        let bad = |msg: String| KbError::Document(msg);
        if doc.schema_version != SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema_version {}", doc.schema_version)));
        }
        let catalog = doc.config.validate()?;
        let mut records = doc.nodes.into_iter();
        let root_record = records.next().ok_or_else(|| bad("no nodes".into()))?;
        if root_record.parent_id.is_some() || root_record.relation.is_some() || root_record.depth != 0 {
            return Err(bad("first node must be the root".into()));
        }
        if root_record.label != doc.seed {
            return Err(bad("root label does not match seed".into()));
        }

        let mut nodes = BTreeMap::new();
        let mut index = HashMap::new();
        let mut max_id = root_record.id.0;
        let root = root_record.id;
        // Pre-order: a node's parent is always on the current root-to-node stack.
        let mut stack = vec![root];
        let mut insert = |record: NodeRecord,
                          nodes: &mut BTreeMap<NodeId, KbNode>|
         -> Result<(), KbError> {
            let concept = Concept::new(&record.label)?;
            if let Some(existing) = index.insert(concept.norm().to_string(), record.id) {
                return Err(KbError::DuplicateConcept {
                    label: record.label,
                    existing,
                });
            }
            if nodes.contains_key(&record.id) {
                return Err(KbError::Document(format!("duplicate node id {}", record.id)));
            }
            nodes.insert(
                record.id,
                KbNode {
                    id: record.id,
                    concept,
                    relation: record.relation,
                    parent: record.parent_id,
                    children: Vec::new(),
                    depth: record.depth,
                    provenance: record.provenance,
                    selected: record.selected,
                },
            );
            Ok(())
        };
        insert(root_record, &mut nodes)?;

        for record in records {
            let parent = record
                .parent_id
                .ok_or_else(|| bad(format!("node {} is a second root", record.id)))?;
            while stack.last().is_some_and(|top| *top != parent) {
                stack.pop();
            }
            if stack.is_empty() {
                return Err(bad(format!("node {} is out of pre-order or orphaned", record.id)));
            }
            let parent_depth = nodes[&parent].depth;
            if record.depth != parent_depth + 1 {
                return Err(bad(format!("node {} has inconsistent depth", record.id)));
            }
            match &record.relation {
                Some(kind) => {
                    catalog.get(kind)?;
                }
                None => return Err(bad(format!("node {} has no relation", record.id))),
            }
            let id = record.id;
            max_id = max_id.max(id.0);
            insert(record, &mut nodes)?;
            nodes.get_mut(&parent).expect("on stack").children.push(id);
            stack.push(id);
        }
        if doc.next_id <= max_id {
            return Err(bad(format!("next_id {} does not exceed max id {max_id}", doc.next_id)));
        }
        if nodes.len() > doc.config.max_kb_size {
            return Err(bad("document exceeds its own size budget".into()));
        }
        let kb = KnowledgeBase {
            nodes,
            index,
            root,
            next_id: doc.next_id,
            config: doc.config,
            catalog,
        };
        kb.audit().map_err(|e| bad(e.0))?;
        Ok(kb)
    }
}

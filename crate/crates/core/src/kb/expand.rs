//! On-demand node expansion and initial layered generation.
//!
//! Expansion is split into three phases so callers can run the slow part
//! without holding a lock on the knowledge base: [`plan_expansion`] renders
//! prompts from a read-only view, [`fetch_expansion`] queries the model, and
//! [`apply_expansion`] merges the answers in catalog order.

use std::collections::BTreeMap;

use log::{info, warn};

use super::prompt::{prompt_hash, render_list_prompt};
use super::{parse_concept_list, ExpansionConfig, KbError, KnowledgeBase, NodeId, Provenance, RelationKind};
use crate::concept::normalize;
use crate::lm::{LanguageModel, LmError};
use crate::recommender::{RecommendError, Recommender};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExpansionError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("every relation failed while expanding node {node}: {}", first_error(.failures))]
    AllRelationsFailed {
        node: NodeId,
        failures: Vec<(RelationKind, LmError)>,
    },
    #[error("node {0} changed while its expansion was in flight")]
    Stale(NodeId),
    #[error("the first layer of the knowledge base came back empty")]
    EmptyFirstLayer,
    #[error(transparent)]
    Recommend(#[from] RecommendError),
}

fn first_error(failures: &[(RelationKind, LmError)]) -> String {
    failures
        .first()
        .map(|(kind, err)| format!("{kind}: {err}"))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedPrompt {
    pub relation: RelationKind,
    pub prompt: String,
}

/// Prompts for one expansion, in catalog order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionPlan {
    pub node: NodeId,
    /// Norm of the node's concept when planned; checked again on apply.
    pub node_norm: String,
    pub prompts: Vec<PlannedPrompt>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpansionOutcome {
    /// Newly created children, in creation order.
    pub new_nodes: Vec<NodeId>,
    /// Relations whose provider call failed; those relations were skipped.
    pub failed: Vec<(RelationKind, LmError)>,
    /// Relations whose answer contained no parseable list.
    pub unparseable: Vec<RelationKind>,
    /// Labels dropped because the concept already exists in the KB.
    pub duplicates: usize,
    /// The size budget cut the expansion short.
    pub truncated: bool,
}

pub fn plan_expansion(
    kb: &KnowledgeBase,
    node: NodeId,
    relations: &[RelationKind],
    n: usize,
) -> Result<ExpansionPlan, ExpansionError> {
    if n == 0 {
        return Err(KbError::InvalidConfig("n must be at least 1".into()).into());
    }
    if relations.is_empty() {
        return Err(KbError::InvalidConfig("no relations to expand with".into()).into());
    }
    let target = kb.node(node)?;
    let relations = kb.catalog().ordered(relations).map_err(KbError::from)?;
    let prompts = if kb.remaining_budget() == 0 {
        Vec::new()
    } else {
        relations
            .into_iter()
            .map(|relation| {
                let prompt = render_list_prompt(kb, node, &relation, Some(n))?;
                Ok(PlannedPrompt { relation, prompt })
            })
            .collect::<Result<_, KbError>>()?
    };
    Ok(ExpansionPlan {
        node,
        node_norm: target.concept.norm().to_string(),
        prompts,
    })
}

/// Queries the model for every planned prompt. Calls run concurrently; the
/// provider bounds how many are in flight. Answers are returned in plan order.
pub fn fetch_expansion(plan: &ExpansionPlan, lm: &LanguageModel) -> Vec<Result<String, LmError>> {
    match plan.prompts.as_slice() {
        [] => Vec::new(),
        [only] => vec![lm.generate(&only.prompt)],
        prompts => std::thread::scope(|scope| {
            let handles: Vec<_> = prompts
                .iter()
                .map(|p| scope.spawn(move || lm.generate(&p.prompt)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("generation thread panicked"))
                .collect()
        }),
    }
}

/// Merges fetched answers into `kb`. Labels whose norm already exists
/// anywhere in the KB are skipped, so when two relations produce the same
/// concept it lands under the relation that comes first in the catalog.
pub fn apply_expansion(
    kb: &mut KnowledgeBase,
    plan: &ExpansionPlan,
    responses: Vec<Result<String, LmError>>,
    model: &str,
) -> Result<ExpansionOutcome, ExpansionError> {
    let current = kb.node(plan.node)?;
    if current.concept.norm() != plan.node_norm {
        return Err(ExpansionError::Stale(plan.node));
    }
    let mut outcome = ExpansionOutcome {
        truncated: plan.prompts.is_empty(),
        ..Default::default()
    };
    let mut succeeded = 0;
    'relations: for (planned, response) in plan.prompts.iter().zip(responses) {
        let text = match response {
            Ok(text) => text,
            Err(err) => {
                warn!("expansion of {} via {} failed: {err}", plan.node, planned.relation);
                outcome.failed.push((planned.relation.clone(), err));
                continue;
            }
        };
        succeeded += 1;
        let parsed = parse_concept_list(&text);
        if parsed.warning {
            outcome.unparseable.push(planned.relation.clone());
        }
        let provenance = Provenance::Llm {
            model: model.to_string(),
            prompt_hash: prompt_hash(&planned.prompt),
        };
        for label in parsed.items {
            if kb.lookup(&normalize(&label)).is_some() {
                outcome.duplicates += 1;
                continue;
            }
            if kb.remaining_budget() == 0 {
                outcome.truncated = true;
                break 'relations;
            }
            match kb.insert_child(plan.node, &label, planned.relation.clone(), provenance.clone()) {
                Ok(id) => outcome.new_nodes.push(id),
                Err(KbError::EmptyLabel(_)) => {}
                Err(other) => return Err(other.into()),
            }
        }
    }
    if succeeded == 0 && !plan.prompts.is_empty() {
        return Err(ExpansionError::AllRelationsFailed {
            node: plan.node,
            failures: outcome.failed,
        });
    }
    Ok(outcome)
}

/// Plans, fetches and applies an expansion in one go.
pub fn expand_node(
    kb: &mut KnowledgeBase,
    node: NodeId,
    relations: &[RelationKind],
    n: usize,
    lm: &LanguageModel,
) -> Result<ExpansionOutcome, ExpansionError> {
    let plan = plan_expansion(kb, node, relations, n)?;
    let responses = fetch_expansion(&plan, lm);
    apply_expansion(kb, &plan, responses, lm.model())
}

/// A freshly generated knowledge base with the recommendations computed
/// while building it.
#[derive(Debug, Clone)]
pub struct Generation {
    pub kb: KnowledgeBase,
    /// Recommended children for every node expanded during generation.
    pub recommendations: BTreeMap<NodeId, Vec<NodeId>>,
    pub failed: Vec<(NodeId, RelationKind, LmError)>,
}

/// Builds the initial layers from a seed.
///
/// Layer 1 expands the seed with `relations_layer1`. Each further layer
/// expands only the nodes recommended among the previous layer's new
/// children, using `relations_layer2`.
pub fn generate_kb(
    seed_label: &str,
    config: ExpansionConfig,
    lm: &LanguageModel,
    recommender: &Recommender,
) -> Result<Generation, ExpansionError> {
    let mut kb = KnowledgeBase::new(seed_label, config.clone())?;
    let root = kb.root_id();
    let mut recommendations = BTreeMap::new();
    let mut failed = Vec::new();
    let k = recommender.config.k;

    let first = expand_node(&mut kb, root, &config.relations_layer1, config.n_per_relation, lm)?;
    failed.extend(first.failed.into_iter().map(|(r, e)| (root, r, e)));
    if kb.children(root)?.is_empty() {
        return Err(ExpansionError::EmptyFirstLayer);
    }
    let mut expanded = vec![root];
    for layer in 2..=config.initial_layers {
        let mut next = Vec::new();
        for &node in &expanded {
            let chosen = recommender.recommend(&kb, node, k)?.chosen;
            recommendations.insert(node, chosen.clone());
            for child in chosen {
                let outcome = expand_node(&mut kb, child, &config.relations_layer2, config.n_per_relation, lm)?;
                failed.extend(outcome.failed.into_iter().map(|(r, e)| (child, r, e)));
                next.push(child);
            }
        }
        info!("layer {layer} done: {} nodes", kb.len());
        expanded = next;
    }
    for &node in &expanded {
        let chosen = recommender.recommend(&kb, node, k)?.chosen;
        recommendations.insert(node, chosen);
    }
    Ok(Generation {
        kb,
        recommendations,
        failed,
    })
}

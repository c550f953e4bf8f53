//! Session engine.
//!
//! Reads take a cheap snapshot (`Arc<Session>`) and never wait for a
//! mutation in progress. Mutations on one session are serialized by a
//! per-session writer lock; each works on a copy, persists it, then swaps it
//! in, so a failed save leaves the previous state in place. Model calls for
//! an expansion run before the writer lock is taken.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::Utc;
use log::{debug, warn};
use weaver_core::kb::{
    apply_expansion, build_context, fetch_expansion, generate_kb, parse_concept_list, plan_expansion,
    render_prompt_frame, ExpansionOutcome, ExpansionPlan,
};
use weaver_core::lm::mock::{HashEmbedder, MockGenerator, MockScorer};
use weaver_core::lm::{
    EmbeddingProvider, Gateway, GatewayConfig, GenerationParams, GenerationProvider, LanguageModel, MemoryCache,
    ResponseCache, ScoringProvider,
};
use weaver_core::{ExpansionConfig, KnowledgeBase, NodeId, Recommender};

use crate::error::ServiceError;
use crate::export::{ExportBundle, ExportFormat};
use crate::session::{
    validate_overrides, CreateNode, CreateSession, ExpandRequest, ExpandResponse, FailedRelation, NearDuplicate,
    NodeRecommendation, NodeView, PrefetchReport, RecommendationView, RemoveResponse, Session, SessionConfig,
    SuggestRequest, SuggestionsView, TreeView, UpdateNode,
};
use crate::store::{valid_id, SessionStore};

/// New concepts at least this similar to an existing one are reported.
const NEAR_DUPLICATE_SIMILARITY: f64 = 0.95;

/// Model backends shared by every session.
#[derive(Clone)]
pub struct Providers {
    pub lm: LanguageModel,
    pub embed: Arc<dyn EmbeddingProvider>,
    pub score: Arc<dyn ScoringProvider>,
}

impl Providers {
    /// Wraps raw backends in caching, retrying gateways.
    pub fn with_gateways(
        generator: Arc<dyn GenerationProvider>,
        embed: Arc<dyn EmbeddingProvider>,
        score: Arc<dyn ScoringProvider>,
        params: GenerationParams,
        cache: Arc<dyn ResponseCache>,
        config: GatewayConfig,
    ) -> Self {
        Self {
            lm: LanguageModel::new(
                Arc::new(Gateway::new(generator, cache.clone(), config.clone())),
                params,
            ),
            embed: Arc::new(Gateway::new(embed, cache.clone(), config.clone())),
            score: Arc::new(Gateway::new(score, cache, config)),
        }
    }

    /// Deterministic offline backends behind in-memory caches.
    pub fn mock() -> Self {
        Self::with_gateways(
            Arc::new(MockGenerator::new()),
            Arc::new(HashEmbedder::new(64)),
            Arc::new(MockScorer::new()),
            GenerationParams::default(),
            Arc::new(MemoryCache::new()),
            GatewayConfig::default(),
        )
    }
}

struct Slot {
    writer: Mutex<()>,
    current: RwLock<Arc<Session>>,
}

pub struct Engine {
    store: Arc<dyn SessionStore>,
    providers: Providers,
    expansion_defaults: ExpansionConfig,
    session_defaults: SessionConfig,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Engine {
    pub fn new(
        store: Arc<dyn SessionStore>,
        providers: Providers,
        expansion_defaults: ExpansionConfig,
        session_defaults: SessionConfig,
    ) -> Self {
        Self {
            store,
            providers,
            expansion_defaults,
            session_defaults,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    fn recommender(&self, config: &SessionConfig) -> Result<Recommender, ServiceError> {
        Ok(Recommender::new(
            config.recommender.clone(),
            self.providers.embed.clone(),
            self.providers.score.clone(),
        )?)
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ServiceError> {
        let mut sessions = lock(&self.sessions);
        if let Some(slot) = sessions.get(id) {
            return Ok(slot.clone());
        }
        if !valid_id(id) {
            return Err(ServiceError::UnknownSession(id.to_string()));
        }
        let record = self
            .store
            .load(id)?
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))?;
        let session = Session::from_record(record)?;
        let slot = Arc::new(Slot {
            writer: Mutex::new(()),
            current: RwLock::new(Arc::new(session)),
        });
        sessions.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    fn snapshot(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        let slot = self.slot(id)?;
        let current = slot.current.read().unwrap_or_else(|e| e.into_inner()).clone();
        Ok(current)
    }

    fn mutate<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let slot = self.slot(id)?;
        let _writer = lock(&slot.writer);
        let mut next = Session::clone(&slot.current.read().unwrap_or_else(|e| e.into_inner()));
        let out = f(&mut next)?;
        next.touch();
        self.store.save(&next.to_record())?;
        *slot.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
        Ok(out)
    }

    pub fn list_sessions(&self) -> Result<Vec<String>, ServiceError> {
        Ok(self.store.list()?)
    }

    pub fn create_session(&self, req: &CreateSession) -> Result<TreeView, ServiceError> {
        if req.seed.trim().is_empty() {
            return Err(ServiceError::Validation("seed must not be empty".into()));
        }
        let mut expansion = self.expansion_defaults.clone();
        let mut config = self.session_defaults.clone();
        req.config.apply(&mut expansion, &mut config);
        validate_overrides(&expansion, &config)?;
        let generation = generate_kb(&req.seed, expansion, &self.providers.lm, &self.recommender(&config)?)?;
        for (node, relation, err) in &generation.failed {
            warn!("initial expansion of {node} via {relation} failed: {err}");
        }
        let k = config.recommender.k;
        let now = Utc::now();
        let session = Session {
            id: uuid::Uuid::new_v4().simple().to_string(),
            created_at: now,
            updated_at: now,
            config,
            kb: generation.kb,
            recommendations: generation
                .recommendations
                .into_iter()
                .map(|(node, chosen)| (node, NodeRecommendation { k, chosen }))
                .collect(),
            suggestions: Default::default(),
        };
        self.store.save(&session.to_record())?;
        let view = session.tree_view();
        lock(&self.sessions).insert(
            session.id.clone(),
            Arc::new(Slot {
                writer: Mutex::new(()),
                current: RwLock::new(Arc::new(session)),
            }),
        );
        Ok(view)
    }

    pub fn tree(&self, id: &str) -> Result<TreeView, ServiceError> {
        Ok(self.snapshot(id)?.tree_view())
    }

    pub fn node(&self, id: &str, node: NodeId) -> Result<NodeView, ServiceError> {
        Ok(self.snapshot(id)?.node_view(node, Some(1))?)
    }

    fn plan(&self, session: &Session, node: NodeId, req: &ExpandRequest) -> Result<ExpansionPlan, ServiceError> {
        let config = session.kb.config();
        let relations = req.relations.as_ref().unwrap_or(&config.relations_layer1);
        let n = req.n.unwrap_or(config.n_per_relation);
        Ok(plan_expansion(&session.kb, node, relations, n)?)
    }

    /// Applies fetched answers to `session` and refreshes the node's
    /// recommendation.
    fn apply(
        &self,
        session: &mut Session,
        plan: &ExpansionPlan,
        responses: Vec<Result<String, weaver_core::lm::LmError>>,
    ) -> Result<(ExpansionOutcome, Vec<NearDuplicate>), ServiceError> {
        let outcome = apply_expansion(&mut session.kb, plan, responses, self.providers.lm.model())?;
        let k = session
            .recommendations
            .get(&plan.node)
            .map_or(session.config.recommender.k, |r| r.k);
        let chosen = self.recommender(&session.config)?.recommend(&session.kb, plan.node, k)?.chosen;
        session.recommendations.insert(plan.node, NodeRecommendation { k, chosen });
        let near = self.near_duplicates(&session.kb, &outcome.new_nodes)?;
        Ok((outcome, near))
    }

    fn near_duplicates(&self, kb: &KnowledgeBase, new_nodes: &[NodeId]) -> Result<Vec<NearDuplicate>, ServiceError> {
        if new_nodes.is_empty() {
            return Ok(Vec::new());
        }
        let ids = kb.preorder();
        let labels: Vec<String> = ids.iter().map(|id| kb.node(*id).unwrap().label().to_string()).collect();
        let vectors: Vec<Vec<f64>> = self.providers.embed.embed(&labels)?.into_iter().map(unit).collect();
        let position: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        // Each new node is compared with pre-existing nodes and with new
        // nodes created before it, so a pair is reported once.
        let order: HashMap<NodeId, usize> = new_nodes.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut found = Vec::new();
        for (rank, node) in new_nodes.iter().enumerate() {
            let i = position[node];
            let best = ids
                .iter()
                .enumerate()
                .filter(|(_, other)| order.get(*other).is_none_or(|&r| r < rank))
                .map(|(j, other)| (*other, cosine(&vectors[i], &vectors[j])))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((other, similarity)) = best {
                if similarity > NEAR_DUPLICATE_SIMILARITY {
                    found.push(NearDuplicate {
                        node: *node,
                        similar_to: other,
                        similarity,
                    });
                }
            }
        }
        Ok(found)
    }

    pub fn expand(&self, id: &str, node: NodeId, req: &ExpandRequest) -> Result<ExpandResponse, ServiceError> {
        let plan = self.plan(&*self.snapshot(id)?, node, req)?;
        let responses = fetch_expansion(&plan, &self.providers.lm);
        self.mutate(id, |session| {
            let (outcome, near_duplicates) = self.apply(session, &plan, responses)?;
            Ok(ExpandResponse {
                node: session.node_view(node, Some(1))?,
                new_nodes: outcome.new_nodes,
                duplicates: outcome.duplicates,
                truncated: outcome.truncated,
                failed: outcome
                    .failed
                    .into_iter()
                    .map(|(relation, e)| FailedRelation {
                        relation,
                        error: e.to_string(),
                    })
                    .collect(),
                unparseable: outcome.unparseable,
                near_duplicates,
            })
        })
    }

    /// Runs the model-facing part of an expansion for each node against a
    /// throwaway copy, leaving answers in the provider caches. The session
    /// itself is never modified. Failures are logged and skipped.
    pub fn prefetch(&self, id: &str, nodes: &[NodeId]) -> Result<PrefetchReport, ServiceError> {
        let snapshot = self.snapshot(id)?;
        let mut report = PrefetchReport {
            warmed: Vec::new(),
            skipped: Vec::new(),
        };
        for &node in nodes {
            let warmed = (|| {
                let plan = self.plan(&snapshot, node, &ExpandRequest::default())?;
                let responses = fetch_expansion(&plan, &self.providers.lm);
                let mut scratch = Session::clone(&snapshot);
                self.apply(&mut scratch, &plan, responses).map(|_| ())
            })();
            match warmed {
                Ok(()) => report.warmed.push(node),
                Err(e) => {
                    debug!("prefetch of node {node} in {id} skipped: {e}");
                    report.skipped.push(node);
                }
            }
        }
        Ok(report)
    }

    pub fn recommend_more(&self, id: &str, node: NodeId) -> Result<RecommendationView, ServiceError> {
        self.mutate(id, |session| {
            let growth = session.config.recommender.k_growth;
            let k = session
                .recommendations
                .get(&node)
                .map_or(session.config.recommender.k, |r| r.k + growth);
            let chosen = self.recommender(&session.config)?.recommend(&session.kb, node, k)?.chosen;
            session.recommendations.insert(node, NodeRecommendation { k, chosen: chosen.clone() });
            Ok(RecommendationView {
                node,
                k,
                chosen: chosen
                    .into_iter()
                    .map(|c| session.node_view(c, Some(0)))
                    .collect::<Result<_, _>>()?,
            })
        })
    }

    pub fn create_node(&self, id: &str, req: &CreateNode) -> Result<NodeView, ServiceError> {
        self.mutate(id, |session| {
            let new = session.kb.create_concept(req.parent_id, &req.label, req.relation.clone())?;
            Ok(session.node_view(new, Some(0))?)
        })
    }

    pub fn update_node(&self, id: &str, node: NodeId, req: &UpdateNode) -> Result<NodeView, ServiceError> {
        if req.label.is_none() && req.selected.is_none() {
            return Err(ServiceError::Validation("nothing to update".into()));
        }
        self.mutate(id, |session| {
            if let Some(label) = &req.label {
                session.kb.edit_concept(node, label)?;
            }
            if let Some(selected) = req.selected {
                session.kb.select_concept(node, selected)?;
            }
            Ok(session.node_view(node, Some(0))?)
        })
    }

    pub fn remove_node(&self, id: &str, node: NodeId) -> Result<RemoveResponse, ServiceError> {
        self.mutate(id, |session| {
            let parent = session.kb.node(node)?.parent;
            let removed = session.kb.remove_concept(node)?;
            session.forget(&removed);
            let parent = parent.expect("the root cannot be removed");
            Ok(RemoveResponse {
                removed,
                parent: session.node_view(parent, Some(0))?,
            })
        })
    }

    pub fn suggest_tests(&self, id: &str, node: NodeId, req: &SuggestRequest) -> Result<SuggestionsView, ServiceError> {
        let snapshot = self.snapshot(id)?;
        let m = req.m.unwrap_or(snapshot.config.suggestions);
        if m == 0 {
            return Err(ServiceError::Validation("m must be at least 1".into()));
        }
        let target = snapshot.kb.node(node)?;
        let task = req
            .task
            .as_deref()
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .unwrap_or(snapshot.kb.seed().label());
        let context = build_context(&snapshot.kb, node)?;
        let instruction = format!(
            "Write {m} diverse test inputs for a model handling {task}, covering the concept {}.",
            target.label()
        );
        let prompt = render_prompt_frame(&context, &instruction);
        let answer = self.providers.lm.generate(&prompt)?;
        let mut suggestions = parse_concept_list(&answer).items;
        suggestions.truncate(m);
        let label = target.label().to_string();
        self.mutate(id, |session| {
            if session.kb.node(node)?.label() != label {
                return Err(ServiceError::Conflict(format!("node {node} was edited; retry")));
            }
            session.suggestions.insert(node, suggestions.clone());
            Ok(())
        })?;
        Ok(SuggestionsView {
            node,
            prompt,
            suggestions,
        })
    }

    pub fn export_bundle(&self, id: &str) -> Result<ExportBundle, ServiceError> {
        Ok(ExportBundle::from_session(&*self.snapshot(id)?))
    }

    pub fn export(&self, id: &str, format: ExportFormat) -> Result<String, ServiceError> {
        Ok(self.export_bundle(id)?.render(format))
    }

    /// Serialized KB of a session, as persisted.
    pub fn kb_json(&self, id: &str) -> Result<String, ServiceError> {
        Ok(self.snapshot(id)?.kb.to_json())
    }

    pub fn audit(&self, id: &str) -> Result<(), ServiceError> {
        let snapshot = self.snapshot(id)?;
        snapshot
            .kb
            .audit()
            .map_err(|e| ServiceError::Validation(e.to_string()))?;
        for (node, rec) in &snapshot.recommendations {
            let children = snapshot.kb.children(*node)?;
            if let Some(stray) = rec.chosen.iter().find(|c| !children.contains(c)) {
                return Err(ServiceError::Validation(format!(
                    "recommendation for {node} lists {stray}, which is not its child"
                )));
            }
        }
        Ok(())
    }
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

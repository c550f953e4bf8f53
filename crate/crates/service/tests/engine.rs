use std::sync::Arc;

use weaver_core::kb::RelationKind;
use weaver_core::lm::mock::{HashEmbedder, MockGenerator, MockScorer};
use weaver_core::lm::{GatewayConfig, GenerationParams, MemoryCache};
use weaver_core::{ExpansionConfig, NodeId};
use weaver_service::{
    CreateNode, CreateSession, Engine, ExpandRequest, ExportBundle, ExportFormat, JsonFileStore, MemoryStore,
    Providers, ServiceError, SessionConfig, SessionOverrides, SuggestRequest, UpdateNode,
};

struct Mocks {
    generator: Arc<MockGenerator>,
    embedder: Arc<HashEmbedder>,
    scorer: Arc<MockScorer>,
}

impl Mocks {
    fn new() -> Self {
        Self {
            generator: Arc::new(MockGenerator::new()),
            embedder: Arc::new(HashEmbedder::new(64)),
            scorer: Arc::new(MockScorer::new()),
        }
    }

    fn providers(&self) -> Providers {
        Providers::with_gateways(
            self.generator.clone(),
            self.embedder.clone(),
            self.scorer.clone(),
            GenerationParams::default(),
            Arc::new(MemoryCache::new()),
            GatewayConfig::default(),
        )
    }

    fn calls(&self) -> usize {
        self.generator.stats().calls() + self.embedder.stats().calls() + self.scorer.stats().calls()
    }
}

fn engine_with(store: Arc<dyn weaver_service::SessionStore>, providers: Providers) -> Engine {
    Engine::new(store, providers, ExpansionConfig::default(), SessionConfig::default())
}

fn memory_engine() -> Engine {
    engine_with(Arc::new(MemoryStore::new()), Providers::mock())
}

/// A small session with room to grow.
fn roomy(seed: &str) -> CreateSession {
    CreateSession {
        seed: seed.into(),
        config: SessionOverrides {
            max_kb_size: Some(5000),
            relations_layer1: Some(vec![RelationKind::TypeOf, RelationKind::PartOf, RelationKind::Causes]),
            relations_layer2: Some(vec![RelationKind::TypeOf]),
            n_per_relation: Some(5),
            k: Some(3),
            ..Default::default()
        },
    }
}

fn golden() -> String {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/online_toxicity_kb.json");
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn default_session_matches_golden_kb() {
    let engine = memory_engine();
    let view = engine.create_session(&CreateSession {
        seed: "online toxicity".into(),
        ..Default::default()
    })
    .unwrap();
    assert_eq!(engine.kb_json(&view.session_id).unwrap(), golden());
    let root = &view.tree;
    assert_eq!(root.recommended.as_ref().unwrap().chosen.len(), 10);
    assert_eq!(root.recommended.as_ref().unwrap().k, 10);
}

#[test]
fn create_validation_and_distinct_ids() {
    let engine = memory_engine();
    let err = engine
        .create_session(&CreateSession {
            seed: "  ".into(),
            ..Default::default()
        })
        .unwrap_err();
    assert_eq!(err.status(), 422);
    let a = engine.create_session(&roomy("memes")).unwrap();
    let b = engine.create_session(&roomy("memes")).unwrap();
    assert_ne!(a.session_id, b.session_id);
    assert_eq!(
        engine.kb_json(&a.session_id).unwrap(),
        engine.kb_json(&b.session_id).unwrap()
    );
    let bad = CreateSession {
        seed: "x".into(),
        config: SessionOverrides {
            k: Some(0),
            ..Default::default()
        },
    };
    assert_eq!(engine.create_session(&bad).unwrap_err().status(), 422);
}

#[test]
fn unknown_session_and_node() {
    let engine = memory_engine();
    assert!(matches!(engine.tree("nope"), Err(ServiceError::UnknownSession(_))));
    assert!(matches!(engine.tree("../../etc/passwd"), Err(ServiceError::UnknownSession(_))));
    let s = engine.create_session(&roomy("memes")).unwrap().session_id;
    let err = engine.expand(&s, NodeId(99_999), &ExpandRequest::default()).unwrap_err();
    assert_eq!(err.status(), 404);
}

#[test]
fn expand_then_tree_shows_children() {
    let engine = memory_engine();
    let view = engine.create_session(&roomy("memes")).unwrap();
    let s = view.session_id;
    let leaf = view.tree.children.iter().find(|c| c.child_count == 0).unwrap().id;
    let out = engine.expand(&s, leaf, &ExpandRequest::default()).unwrap();
    assert!(!out.new_nodes.is_empty());
    assert_eq!(out.node.id, leaf);
    assert_eq!(out.node.children.len(), out.new_nodes.len());
    assert!(out.node.children.iter().all(|c| c.children.is_empty()));
    let rec = out.node.recommended.as_ref().unwrap();
    assert_eq!(rec.k, 3);
    assert_eq!(rec.chosen.len(), 3.min(out.new_nodes.len()));

    let tree = engine.tree(&s).unwrap();
    let node = tree.tree.children.iter().find(|c| c.id == leaf).unwrap();
    let ids: Vec<NodeId> = node.children.iter().map(|c| c.id).collect();
    assert_eq!(ids, out.new_nodes);
    engine.audit(&s).unwrap();

    // Expanding again with custom relations and n only adds new concepts.
    let again = engine
        .expand(
            &s,
            leaf,
            &ExpandRequest {
                relations: Some(vec![RelationKind::UsedFor]),
                n: Some(3),
            },
        )
        .unwrap();
    assert!(again.node.children.len() >= out.new_nodes.len());
    assert!(!again.node.children.iter().any(|c| again.new_nodes.contains(&c.id) && out.new_nodes.contains(&c.id)));
}

#[test]
fn expansion_reports_near_duplicates() {
    let mut mocks = Mocks::new();
    let mut v = vec![0.0; 64];
    v[0] = 1.0;
    let mut w = v.clone();
    w[1] = 0.1;
    mocks.embedder = Arc::new(HashEmbedder::new(64).with_vector("alpha", v).with_vector("alpha prime", w));
    mocks.generator = Arc::new(
        MockGenerator::new()
            .with_rule("List 5 types of memes", r#"["alpha", "beta"]"#)
            .with_rule("of alpha", r#"["alpha prime"]"#),
    );
    let engine = engine_with(Arc::new(MemoryStore::new()), mocks.providers());
    let mut req = roomy("memes");
    req.config.relations_layer1 = Some(vec![RelationKind::TypeOf]);
    req.config.initial_layers = Some(1);
    let view = engine.create_session(&req).unwrap();
    let alpha = view.tree.children.iter().find(|c| c.label == "alpha").unwrap().id;
    let out = engine
        .expand(
            &view.session_id,
            alpha,
            &ExpandRequest {
                relations: Some(vec![RelationKind::TypeOf]),
                n: None,
            },
        )
        .unwrap();
    assert_eq!(out.new_nodes.len(), 1);
    assert_eq!(out.near_duplicates.len(), 1);
    assert_eq!(out.near_duplicates[0].similar_to, alpha);
    assert!(out.near_duplicates[0].similarity > 0.95);
}

#[test]
fn remove_root_rejected_and_subtree_state_dropped() {
    let engine = memory_engine();
    let view = engine.create_session(&roomy("memes")).unwrap();
    let s = view.session_id;
    assert_eq!(engine.remove_node(&s, NodeId(0)).unwrap_err().status(), 422);
    let first = view.tree.recommended.as_ref().unwrap().chosen[0];
    engine.update_node(&s, first, &UpdateNode { label: None, selected: Some(true) }).unwrap();
    let removed = engine.remove_node(&s, first).unwrap();
    assert_eq!(removed.removed[0], first);
    assert_eq!(removed.parent.id, NodeId(0));
    let tree = engine.tree(&s).unwrap();
    assert!(!tree.tree.recommended.unwrap().chosen.contains(&first));
    assert!(engine.export_bundle(&s).unwrap().concepts.is_empty());
    engine.audit(&s).unwrap();
}

#[test]
fn create_and_edit_nodes() {
    let engine = memory_engine();
    let s = engine.create_session(&roomy("memes")).unwrap().session_id;
    let node = engine
        .create_node(
            &s,
            &CreateNode {
                parent_id: NodeId(0),
                label: "Dank Memes".into(),
                relation: Some(RelationKind::TypeOf),
            },
        )
        .unwrap();
    assert_eq!(node.relation_display.as_deref(), Some("a type of"));
    let dup = engine
        .create_node(
            &s,
            &CreateNode {
                parent_id: NodeId(0),
                label: "dank  memes".into(),
                relation: None,
            },
        )
        .unwrap_err();
    assert_eq!(dup.status(), 409);
    let edited = engine
        .update_node(
            &s,
            node.id,
            &UpdateNode {
                label: Some("wholesome memes".into()),
                selected: Some(true),
            },
        )
        .unwrap();
    assert_eq!(edited.label, "wholesome memes");
    assert!(edited.selected);
    assert_eq!(engine.update_node(&s, node.id, &UpdateNode::default()).unwrap_err().status(), 422);
    let plain = engine
        .create_node(
            &s,
            &CreateNode {
                parent_id: node.id,
                label: "cat pictures".into(),
                relation: None,
            },
        )
        .unwrap();
    assert_eq!(plain.relation, Some(RelationKind::RelatedTo));
}

#[test]
fn recommend_more_grows_by_k_growth() {
    let engine = memory_engine();
    let s = engine.create_session(&roomy("memes")).unwrap().session_id;
    let before = engine.tree(&s).unwrap().tree.recommended.unwrap();
    let more = engine.recommend_more(&s, NodeId(0)).unwrap();
    assert_eq!(more.k, before.k + 5);
    let children = engine.tree(&s).unwrap().tree.child_count;
    assert_eq!(more.chosen.len(), (before.k + 5).min(children));
    let stored = engine.tree(&s).unwrap().tree.recommended.unwrap();
    assert_eq!(stored.chosen, more.chosen.iter().map(|c| c.id).collect::<Vec<_>>());
}

#[test]
fn export_formats_agree() {
    let engine = memory_engine();
    let view = engine.create_session(&roomy("memes")).unwrap();
    let s = view.session_id;
    assert!(engine.export_bundle(&s).unwrap().concepts.is_empty());

    let layer1 = &view.tree.children;
    let deep = layer1.iter().find(|c| c.child_count > 0).unwrap();
    let grandchild = engine.tree(&s).unwrap().tree.children.iter().find(|c| c.id == deep.id).unwrap().children[0].id;
    let picks = [layer1[0].id, deep.id, grandchild];
    for id in picks {
        engine.update_node(&s, id, &UpdateNode { label: None, selected: Some(true) }).unwrap();
    }
    engine.suggest_tests(&s, grandchild, &SuggestRequest::default()).unwrap();

    let bundle = engine.export_bundle(&s).unwrap();
    assert_eq!(bundle.concepts.len(), 3);
    let deepest = bundle.concepts.iter().find(|c| c.id == grandchild).unwrap();
    assert_eq!(deepest.path.len(), 3);
    assert_eq!(deepest.path[0].label, "memes");
    assert_eq!(deepest.path[0].relation, None);
    assert_eq!(deepest.suggestions.len(), 5);

    let json: ExportBundle = serde_json::from_str(&engine.export(&s, ExportFormat::Json).unwrap()).unwrap();
    let csv = ExportBundle::concepts_from_csv(&engine.export(&s, ExportFormat::Csv).unwrap()).unwrap();
    assert_eq!(json, bundle);
    assert_eq!(csv, bundle.concepts);
    assert_eq!("xml".parse::<ExportFormat>().unwrap_err().status(), 422);

    // Pre-order: parent before child.
    let order: Vec<NodeId> = bundle.concepts.iter().map(|c| c.id).collect();
    let pos = |id| order.iter().position(|x| *x == id).unwrap();
    assert!(pos(deep.id) < pos(grandchild));
}

#[test]
fn suggest_tests_prompt_and_validation() {
    let engine = memory_engine();
    let view = engine.create_session(&roomy("memes")).unwrap();
    let s = view.session_id;
    let child = view.tree.children.iter().find(|c| c.child_count > 0).unwrap();
    let grandchild = engine.node(&s, child.id).unwrap().children[0].clone();
    let out = engine
        .suggest_tests(&s, grandchild.id, &SuggestRequest { m: None, task: Some("meme moderation".into()) })
        .unwrap();
    assert_eq!(out.suggestions.len(), 5);
    // The prompt opens with the full root-to-node path, one sentence per edge.
    let kb = weaver_core::KnowledgeBase::from_json(&engine.kb_json(&s).unwrap()).unwrap();
    let catalog = kb.catalog();
    let sentence = |id: NodeId| {
        let n = kb.node(id).unwrap();
        let parent = kb.node(n.parent.unwrap()).unwrap();
        catalog.get(n.relation.as_ref().unwrap()).unwrap().render_context(n.label(), parent.label())
    };
    let context = format!("{} {}", sentence(child.id), sentence(grandchild.id));
    assert!(out.prompt.starts_with(&format!("{context}\n")), "{}", out.prompt);
    assert!(out.prompt.contains(&format!(
        "Write 5 diverse test inputs for a model handling meme moderation, covering the concept {}.",
        grandchild.label
    )));
    let err = engine
        .suggest_tests(&s, grandchild.id, &SuggestRequest { m: Some(0), task: None })
        .unwrap_err();
    assert_eq!(err.status(), 422);
    let three = engine.suggest_tests(&s, grandchild.id, &SuggestRequest { m: Some(3), task: None }).unwrap();
    assert_eq!(three.suggestions.len(), 3);
}

#[test]
fn prefetch_then_expand_makes_no_provider_calls() {
    let mocks = Mocks::new();
    let engine = engine_with(Arc::new(MemoryStore::new()), mocks.providers());
    let view = engine.create_session(&roomy("memes")).unwrap();
    let s = view.session_id;
    let leaves: Vec<NodeId> = view.tree.children.iter().filter(|c| c.child_count == 0).map(|c| c.id).collect();
    assert!(leaves.len() >= 2);
    let before_tree = engine.tree(&s).unwrap();
    let report = engine.prefetch(&s, &leaves[..2]).unwrap();
    assert_eq!(report.warmed, leaves[..2].to_vec());
    // Prefetch leaves the session untouched.
    assert_eq!(engine.tree(&s).unwrap(), before_tree);

    let calls = mocks.calls();
    let out = engine.expand(&s, leaves[0], &ExpandRequest::default()).unwrap();
    assert!(!out.new_nodes.is_empty());
    assert_eq!(mocks.calls(), calls, "expand after prefetch hit a provider");
}

#[test]
fn prefetch_of_removed_node_leaves_no_orphans() {
    let engine = memory_engine();
    let view = engine.create_session(&roomy("memes")).unwrap();
    let s = view.session_id;
    let leaf = view.tree.children.iter().find(|c| c.child_count == 0).unwrap().id;
    engine.remove_node(&s, leaf).unwrap();
    let report = engine.prefetch(&s, &[leaf]).unwrap();
    assert_eq!(report.skipped, vec![leaf]);
    engine.audit(&s).unwrap();

    // Removal racing a prefetch: whichever order they run in, the KB stays
    // consistent and the removed node never comes back.
    let other = view.tree.children.iter().filter(|c| c.child_count == 0).nth(1).unwrap().id;
    std::thread::scope(|scope| {
        scope.spawn(|| engine.prefetch(&s, &[other]).unwrap());
        scope.spawn(|| engine.remove_node(&s, other).unwrap());
    });
    engine.audit(&s).unwrap();
    assert_eq!(engine.node(&s, other).unwrap_err().status(), 404);
}

#[test]
fn concurrent_expand_and_select() {
    let engine = memory_engine();
    let view = engine.create_session(&roomy("memes")).unwrap();
    let s = view.session_id;
    let ids: Vec<NodeId> = view.tree.children.iter().map(|c| c.id).collect();
    std::thread::scope(|scope| {
        for (t, chunk) in ids.chunks(2).enumerate() {
            let engine = &engine;
            let s = &s;
            scope.spawn(move || {
                for &id in chunk {
                    if t % 2 == 0 {
                        engine.expand(s, id, &ExpandRequest::default()).unwrap();
                    } else {
                        engine.update_node(s, id, &UpdateNode { label: None, selected: Some(true) }).unwrap();
                    }
                }
            });
        }
    });
    engine.audit(&s).unwrap();
    let tree = engine.tree(&s).unwrap();
    for (t, chunk) in ids.chunks(2).enumerate() {
        for id in chunk {
            let node = tree.tree.children.iter().find(|c| c.id == *id).unwrap();
            if t % 2 == 0 {
                assert!(node.recommended.is_some());
            } else {
                assert!(node.selected);
            }
        }
    }
}

#[test]
fn edit_during_expansion_is_a_retryable_conflict() {
    let mocks = Mocks::new();
    let gen = Arc::new(MockGenerator::new().with_latency(std::time::Duration::from_millis(150)));
    let providers = Providers::with_gateways(
        gen,
        mocks.embedder.clone(),
        mocks.scorer.clone(),
        GenerationParams::default(),
        Arc::new(MemoryCache::new()),
        GatewayConfig::default(),
    );
    let engine = engine_with(Arc::new(MemoryStore::new()), providers);
    let mut req = roomy("memes");
    req.config.initial_layers = Some(1);
    let view = engine.create_session(&req).unwrap();
    let s = view.session_id;
    let target = view.tree.children[0].id;
    let result = std::thread::scope(|scope| {
        let expand = scope.spawn(|| engine.expand(&s, target, &ExpandRequest::default()));
        std::thread::sleep(std::time::Duration::from_millis(50));
        engine
            .update_node(&s, target, &UpdateNode { label: Some("renamed concept".into()), selected: None })
            .unwrap();
        expand.join().unwrap()
    });
    let err = result.unwrap_err();
    assert_eq!(err.status(), 409);
    assert!(err.retryable());
    engine.audit(&s).unwrap();
    engine.expand(&s, target, &ExpandRequest::default()).unwrap();
}

#[test]
fn tree_reads_have_no_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(JsonFileStore::open(dir.path()).unwrap());
    let engine = engine_with(store.clone(), Providers::mock());
    let s = engine.create_session(&roomy("memes")).unwrap().session_id;
    let file = store.path_of(&s);
    let before = std::fs::read(&file).unwrap();
    let modified = std::fs::metadata(&file).unwrap().modified().unwrap();
    let first = serde_json::to_string(&engine.tree(&s).unwrap()).unwrap();
    for _ in 0..5 {
        assert_eq!(serde_json::to_string(&engine.tree(&s).unwrap()).unwrap(), first);
        engine.export(&s, ExportFormat::Csv).unwrap();
    }
    assert_eq!(std::fs::read(&file).unwrap(), before);
    assert_eq!(std::fs::metadata(&file).unwrap().modified().unwrap(), modified);
}

#[test]
fn reopened_store_reproduces_state() {
    let dir = tempfile::tempdir().unwrap();
    let (s, tree, csv) = {
        let engine = engine_with(Arc::new(JsonFileStore::open(dir.path()).unwrap()), Providers::mock());
        let view = engine.create_session(&roomy("memes")).unwrap();
        let s = view.session_id;
        let a = view.tree.children[0].id;
        engine.expand(&s, a, &ExpandRequest::default()).unwrap();
        engine.update_node(&s, a, &UpdateNode { label: Some("edited".into()), selected: Some(true) }).unwrap();
        engine.recommend_more(&s, a).unwrap();
        let tree = serde_json::to_string(&engine.tree(&s).unwrap()).unwrap();
        (s.clone(), tree, engine.export(&s, ExportFormat::Csv).unwrap())
    };
    let engine = engine_with(Arc::new(JsonFileStore::open(dir.path()).unwrap()), Providers::mock());
    assert_eq!(serde_json::to_string(&engine.tree(&s).unwrap()).unwrap(), tree);
    assert_eq!(engine.export(&s, ExportFormat::Csv).unwrap(), csv);
    assert_eq!(engine.list_sessions().unwrap(), vec![s.clone()]);
    engine.audit(&s).unwrap();
}

#[test]
fn corrupt_session_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(JsonFileStore::open(dir.path()).unwrap());
    std::fs::write(store.path_of("broken"), "{not json").unwrap();
    let engine = engine_with(store, Providers::mock());
    assert_eq!(engine.tree("broken").unwrap_err().status(), 500);
}

#[test]
fn provider_failure_on_create_is_502() {
    let mocks = Mocks::new();
    let generator = Arc::new(MockGenerator::new());
    generator.fail_next(1000, Some(400));
    let providers = Providers::with_gateways(
        generator,
        mocks.embedder.clone(),
        mocks.scorer.clone(),
        GenerationParams::default(),
        Arc::new(MemoryCache::new()),
        GatewayConfig::default(),
    );
    let engine = engine_with(Arc::new(MemoryStore::new()), providers);
    let err = engine.create_session(&roomy("memes")).unwrap_err();
    assert_eq!(err.status(), 502);
    assert_eq!(err.body()["code"], "provider_error");
    assert!(err.body()["detail"]["failures"].as_array().is_some());
}

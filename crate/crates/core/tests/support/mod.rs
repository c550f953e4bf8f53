//! Oracles and criterion checks shared by the integration tests and the
//! acceptance runner in the cli crate.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use weaver_core::concept::Concept;
use weaver_core::eval::{
    compute_precision, cut, recall_against_labels, sample_edges_for_precision, ward_clusters, EdgeLabel,
    GroundTruth, MatchRule,
};
use weaver_core::kb::{generate_kb, Generation, RelationCatalog, RelationKind};
use weaver_core::lm::mock::{HashEmbedder, MockGenerator, MockScorer, OrthogonalEmbedder};
use weaver_core::lm::{GenerationParams, LanguageModel};
use weaver_core::recommender::{brute_force_best, greedy_peel, objective_of, CandidateGraph, Peeler};
use weaver_core::{ExpansionConfig, KnowledgeBase, Recommender, RecommenderConfig};

/// A criterion result: `Ok(detail)` or `Err(reason)`.
pub type Outcome = Result<String, String>;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn fixture(name: &str) -> String {
    let path = fixture_dir().join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

// ---------------------------------------------------------------- graphs

pub fn labels(n: usize) -> Vec<Concept> {
    (0..n).map(|i| Concept::new(&format!("c{i:03}")).unwrap()).collect()
}

/// Complete graph with independent uniform [0, 1) weights.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> CandidateGraph {
    let mut edges = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w: f64 = rng.gen();
            edges[i][j] = w;
            edges[j][i] = w;
        }
    }
    let nodes = (0..n).map(|_| rng.gen()).collect();
    CandidateGraph::from_weights(labels(n), Concept::new("seed").unwrap(), &edges, nodes).unwrap()
}

/// Peeling recomputed from scratch at every step: each remaining node's
/// weight is `alpha * node + sum of edges to the other remaining nodes`,
/// and the smallest (ties by label) is removed. Returns the removal order.
pub fn simulate_peel(g: &CandidateGraph, k: usize, alpha: f64) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..g.len()).collect();
    let mut order = Vec::new();
    while remaining.len() > k {
        let weight = |i: usize| alpha * g.node(i) + remaining.iter().map(|&j| g.edge(i, j)).sum::<f64>();
        let victim = *remaining
            .iter()
            .min_by(|&&a, &&b| {
                weight(a)
                    .partial_cmp(&weight(b))
                    .unwrap()
                    .then_with(|| g.candidates()[a].norm().cmp(g.candidates()[b].norm()))
            })
            .unwrap();
        remaining.retain(|&i| i != victim);
        order.push(victim);
    }
    order
}

/// Objective of a subset summed directly over all pairs.
pub fn scratch_objective(g: &CandidateGraph, subset: &[usize], alpha: f64) -> f64 {
    let mut total = 0.0;
    for &i in subset {
        total += alpha * g.node(i);
        for &j in subset {
            if i < j {
                total += g.edge(i, j);
            }
        }
    }
    total
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

pub fn peeling_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x51ee1);
    let mut worst_ratio = f64::INFINITY;
    for case in 0..200 {
        let n = rng.gen_range(2..=8);
        // k = 1 is excluded: its objective is a single node weight, which
        // peeling does not track, and the half-optimum bound does not hold.
        let k = rng.gen_range(2..=n);
        let alpha = [0.0, 0.5, 1.0, 2.0][rng.gen_range(0..4)];
        let g = random_graph(&mut rng, n);
        let cfg = RecommenderConfig { k, alpha, k_growth: 5 };
        let sel = greedy_peel(&g, &cfg);
        let trace: Vec<usize> = sel.peel_trace.iter().map(|s| s.removed).collect();
        let expected = simulate_peel(&g, k, alpha);
        if trace != expected {
            return Err(format!("case {case}: trace {trace:?} != simulator {expected:?}"));
        }
        if sel.chosen.len() != k {
            return Err(format!("case {case}: chose {} nodes, wanted {k}", sel.chosen.len()));
        }
        let best = brute_force_best(&g, k, alpha).map_err(|e| e.to_string())?;
        let optimum = scratch_objective(&g, &best.chosen, alpha);
        let got = scratch_objective(&g, &sel.chosen, alpha);
        if got < 0.5 * optimum - 1e-12 {
            return Err(format!("case {case}: objective {got} < half of optimum {optimum}"));
        }
        if optimum > 0.0 {
            worst_ratio = worst_ratio.min(got / optimum);
        }
    }
    Ok(format!("200 graphs, worst greedy/optimum ratio {worst_ratio:.3}"))
}

pub fn peeling_quality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a11);
    let (n, k) = (40, 10);
    let mut wins = 0;
    for _ in 0..50 {
        let g = random_graph(&mut rng, n);
        let greedy = greedy_peel(&g, &RecommenderConfig { k, alpha: 1.0, k_growth: 5 }).objective;
        let mut random: Vec<f64> = (0..1000)
            .map(|_| {
                let subset = rand::seq::index::sample(&mut rng, n, k).into_vec();
                scratch_objective(&g, &subset, 1.0)
            })
            .collect();
        random.sort_by(f64::total_cmp);
        // Nearest-rank 95th percentile.
        let p95 = random[(0.95 * random.len() as f64).ceil() as usize - 1];
        if greedy >= p95 {
            wins += 1;
        }
    }
    let detail = format!("{wins}/50 instances at or above the random 95th percentile");
    if wins >= 48 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn scaling_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1e);
    for case in 0..20 {
        let n = rng.gen_range(12..=40);
        let k = rng.gen_range(1..n);
        let g = random_graph(&mut rng, n);
        let cfg = RecommenderConfig { k, alpha: 1.0, k_growth: 5 };
        let base = greedy_peel(&g, &cfg);
        let base_trace: Vec<usize> = base.peel_trace.iter().map(|s| s.removed).collect();
        for c in [0.1, 7.0, 1000.0] {
            let s = greedy_peel(&g.scaled(c), &cfg);
            let trace: Vec<usize> = s.peel_trace.iter().map(|s| s.removed).collect();
            if trace != base_trace || s.chosen != base.chosen {
                return Err(format!("case {case}: scaling by {c} changed the result"));
            }
        }
    }
    Ok("20 instances x 3 factors unchanged".into())
}

/// Incremental objective against a from-scratch sum at every peel step.
pub fn check_bookkeeping(g: &CandidateGraph, alpha: f64) -> Result<usize, String> {
    let mut peeler = Peeler::new(g, alpha);
    let mut steps = 0;
    loop {
        let rest = peeler.remaining_indices();
        let scratch = scratch_objective(g, &rest, alpha);
        let library = objective_of(g, &rest, alpha).map_err(|e| e.to_string())?;
        if (peeler.objective() - scratch).abs() > 1e-9 || (library - scratch).abs() > 1e-9 {
            return Err(format!(
                "after {steps} steps: incremental {} vs scratch {scratch}",
                peeler.objective()
            ));
        }
        if peeler.step().is_none() {
            return Ok(steps);
        }
        steps += 1;
    }
}

pub fn objective_bookkeeping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb00c);
    let mut steps = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=60);
        let alpha = rng.gen_range(0.0..3.0);
        let g = random_graph(&mut rng, n).scaled(rng.gen_range(0.1..10.0));
        steps += check_bookkeeping(&g, alpha)?;
    }
    Ok(format!("100 instances, {steps} peel steps checked"))
}

// ------------------------------------------------------------ generation

pub const DEMO_SEED: &str = "online toxicity";

pub fn mock_language_model() -> LanguageModel {
    LanguageModel::new(Arc::new(MockGenerator::new()), GenerationParams::default())
}

pub fn mock_recommender() -> Recommender {
    Recommender::new(
        RecommenderConfig::default(),
        Arc::new(HashEmbedder::new(64)),
        Arc::new(MockScorer::new()),
    )
    .unwrap()
}

pub fn demo_generation() -> Generation {
    generate_kb(DEMO_SEED, ExpansionConfig::default(), &mock_language_model(), &mock_recommender()).unwrap()
}

pub fn deterministic_generation() -> Outcome {
    let first = demo_generation().kb.to_json();
    let second = demo_generation().kb.to_json();
    if first != second {
        return Err("two runs produced different KB JSON".into());
    }
    let golden = fixture("online_toxicity_kb.json");
    if first != golden {
        return Err("KB JSON differs from the committed golden file".into());
    }
    let kb = KnowledgeBase::from_json(&first).map_err(|e| e.to_string())?;
    kb.audit().map_err(|e| e.to_string())?;
    let depth_count = |d: usize| kb.preorder().iter().filter(|&&id| kb.node(id).unwrap().depth == d).count();
    let (l1, l2, l3) = (depth_count(1), depth_count(2), depth_count(3));
    if l1 == 0 || l2 == 0 || l3 != 0 {
        return Err(format!("layer sizes {l1}/{l2}/{l3}, wanted two populated layers"));
    }
    if kb.len() > 600 {
        return Err(format!("{} nodes exceeds 600", kb.len()));
    }
    Ok(format!("{} nodes ({l1} + {l2} below the seed), matches golden file", kb.len()))
}

// ------------------------------------------------------------ prompts

#[derive(Debug, Deserialize)]
pub struct PromptFixture {
    pub tag: String,
    pub list_template: String,
    pub context_template: String,
    pub list_rendered: String,
    pub context_rendered: String,
}

pub fn prompt_fixtures() -> Vec<PromptFixture> {
    serde_json::from_str(&fixture("relation_prompts.json")).unwrap()
}

pub fn prompt_fidelity() -> Outcome {
    let catalog = RelationCatalog::default();
    let fixtures = prompt_fixtures();
    if catalog.len() != 26 || fixtures.len() != 26 {
        return Err(format!("catalog has {} relations, fixture {}", catalog.len(), fixtures.len()));
    }
    for (template, fx) in catalog.templates().iter().zip(&fixtures) {
        let kind: RelationKind = fx.tag.parse().unwrap();
        if template.kind != kind || template.kind.tag() != fx.tag {
            return Err(format!("catalog order differs at {}", fx.tag));
        }
        let list = template.render_list(10, "online toxicity");
        if list != fx.list_rendered {
            return Err(format!("{}: list prompt {list:?} != {:?}", fx.tag, fx.list_rendered));
        }
        let ctx = template.render_context("misinformation", "online toxicity");
        if ctx != fx.context_rendered {
            return Err(format!("{}: context prompt {ctx:?} != {:?}", fx.tag, fx.context_rendered));
        }
    }
    Ok("26 list and 26 context templates byte-identical".into())
}

// ------------------------------------------------------------ recall

pub fn recall_self_test() -> Outcome {
    let kb = demo_generation().kb;
    let labels: Vec<String> = kb.labels().into_iter().map(str::to_string).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let drawn: Vec<String> = rand::seq::index::sample(&mut rng, labels.len(), 40)
        .into_iter()
        .map(|i| labels[i].clone())
        .collect();
    let truth = GroundTruth::new("self", &drawn);
    let rule = MatchRule::default();
    let r = recall_against_labels(&labels, &truth, &rule, &OrthogonalEmbedder::new(1024)).map_err(|e| e.to_string())?;
    if r.recall != 1.0 {
        return Err(format!("verbatim ground truth recall {}", r.recall));
    }
    let disjoint = GroundTruth::new("disjoint", (0..30).map(|i| format!("zz unrelated {i}")));
    let r = recall_against_labels(&labels, &disjoint, &rule, &OrthogonalEmbedder::new(1024))
        .map_err(|e| e.to_string())?;
    if r.recall != 0.0 {
        return Err(format!("disjoint ground truth recall {}", r.recall));
    }
    // Growth monotonicity over prefixes of the KB in pre-order, with a
    // ground truth mixing exact, near and absent concepts.
    let embed = HashEmbedder::new(64);
    let mut mixed: Vec<String> = drawn.iter().take(20).cloned().collect();
    mixed.extend(drawn.iter().skip(20).map(|l| format!("{l} online")));
    mixed.extend((0..10).map(|i| format!("absent {i}")));
    let truth = GroundTruth::new("mixed", &mixed);
    let mut last = 0.0;
    for len in (1..=labels.len()).step_by(25).chain([labels.len()]) {
        let r = recall_against_labels(&labels[..len], &truth, &rule, &embed).map_err(|e| e.to_string())?;
        if r.recall + 1e-12 < last {
            return Err(format!("recall fell from {last} to {} at {len} concepts", r.recall));
        }
        last = r.recall;
    }
    Ok(format!("verbatim 1.0, disjoint 0.0, monotone over growth (final {last:.3})"))
}

// ------------------------------------------------------------ clustering

#[derive(Debug, Deserialize)]
pub struct ClusterFixture {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
    pub scipy_cluster_counts: std::collections::BTreeMap<String, usize>,
}

pub fn cluster_fixture() -> ClusterFixture {
    serde_json::from_str(&fixture("cluster120.json")).unwrap()
}

fn canonical(ids: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    ids.iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Textbook agglomeration: repeatedly scan every pair of current clusters,
/// compute the Ward distance from member centroids, and merge the closest
/// pair while its distance is within `threshold`.
pub fn naive_ward(vectors: &[Vec<f64>], threshold: f64) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = (0..vectors.len()).map(|i| vec![i]).collect();
    let centroid = |members: &[usize]| -> Vec<f64> {
        let dim = vectors[0].len();
        let mut c = vec![0.0; dim];
        for &m in members {
            for (x, v) in c.iter_mut().zip(&vectors[m]) {
                *x += v;
            }
        }
        c.iter().map(|x| x / members.len() as f64).collect()
    };
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let (ca, cb) = (centroid(&clusters[a]), centroid(&clusters[b]));
                let (na, nb) = (clusters[a].len() as f64, clusters[b].len() as f64);
                let dist = ca.iter().zip(&cb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                let d = (2.0 * na * nb / (na + nb)).sqrt() * dist;
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        match best {
            Some((d, a, b)) if d <= threshold => {
                let merged = clusters.remove(b);
                clusters[a].extend(merged);
            }
            _ => break,
        }
    }
    let mut ids = vec![0; vectors.len()];
    for (c, members) in clusters.iter().enumerate() {
        for &m in members {
            ids[m] = c;
        }
    }
    canonical(&ids)
}

pub fn clustering_oracle() -> Outcome {
    let fx = cluster_fixture();
    if fx.vectors.len() != 120 || fx.vectors.iter().any(|v| v.len() != fx.dim) {
        return Err("fixture shape".into());
    }
    let merges = ward_clusters(&fx.vectors).map_err(|e| e.to_string())?;
    let mut counts = Vec::new();
    for t in [1.0, 0.7, 0.4, 0.1] {
        let ours = cut(fx.vectors.len(), &merges, t);
        let count = ours.iter().max().map_or(0, |m| m + 1);
        if t == 0.7 {
            let reference = naive_ward(&fx.vectors, t);
            if ours != reference {
                return Err("assignment at 0.7 differs from the reference agglomeration".into());
            }
        }
        let pinned = fx.scipy_cluster_counts[&format!("{t:?}")];
        if count != pinned {
            return Err(format!("threshold {t}: {count} clusters, pinned reference {pinned}"));
        }
        if counts.last().is_some_and(|&prev| count < prev) {
            return Err(format!("cluster count fell to {count} at threshold {t}"));
        }
        counts.push(count);
    }
    Ok(format!("matches reference at 0.7; counts over 1.0/0.7/0.4/0.1 = {counts:?}"))
}

// ------------------------------------------------------------ precision

/// A KB of 500 edges under the seed whose first 400 children are valid.
pub fn planted_kb() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new("planted", ExpansionConfig::default()).unwrap();
    let root = kb.root_id();
    for i in 0..500 {
        let label = if i % 5 == 4 { format!("bad {i}") } else { format!("good {i}") };
        kb.create_concept(root, &label, Some(RelationKind::TypeOf)).unwrap();
    }
    kb
}

pub fn precision_estimator() -> Outcome {
    let kb = planted_kb();
    let mut total = 0.0;
    let runs = 10_000;
    for seed in 0..runs {
        let mut sample = sample_edges_for_precision(&kb, 50, seed).map_err(|e| e.to_string())?;
        for e in &mut sample.edges {
            e.label = Some(if e.child.starts_with("good") {
                EdgeLabel::Valid
            } else {
                EdgeLabel::Invalid
            });
        }
        total += compute_precision(&sample).map_err(|e| e.to_string())?;
    }
    let mean = total / runs as f64;
    let detail = format!("mean over {runs} samples of 50 = {mean:.4}");
    if (mean - 0.8).abs() <= 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::json;
use weaver_core::eval::{
    cluster_concepts, cluster_hits, compute_precision, compute_recall, sample_edges_for_precision, ClusteringConfig,
    EdgeLabel, GroundTruth, MatchMode, MatchRule, PrecisionSample, SampledEdge,
};
use weaver_core::kb::generate_kb;
use weaver_core::{KnowledgeBase, NodeId, RelationKind};
use weaver_service::{Engine, ExportFormat, JsonFileStore, Providers};

use crate::args::*;
use crate::providers;

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Recommend(a) => recommend(a),
        Command::EvalRecall(a) => eval_recall(a),
        Command::SamplePrecision(a) => sample_precision(a),
        Command::Cluster(a) => cluster(a),
        Command::Export(a) => export(a),
        Command::Serve(a) => serve(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::from_json(&read(path)?).with_context(|| format!("loading knowledge base {}", path.display()))
}

/// Writes `body` to `--output` when given, otherwise to stdout.
fn emit(output: Option<&Path>, body: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes())?;
            if !body.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            out.flush()?;
            Ok(())
        }
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    emit(None, &serde_json::to_string_pretty(value)?)
}

fn generate(a: GenerateArgs) -> Result<()> {
    let (expansion, session) = a.engine.configs()?;
    let providers = providers::build(&a.providers)?;
    let recommender = providers::recommender(&providers, session.recommender)?;
    let generation = generate_kb(&a.seed, expansion, &providers.lm, &recommender)?;
    for (node, relation, err) in &generation.failed {
        warn!("node {node}: relation {relation} failed: {err}");
    }
    let kb = generation.kb;
    emit(a.out.output.as_deref(), &kb.to_json())?;
    if a.out.output.is_some() {
        let depth_counts = depth_counts(&kb);
        if a.out.json {
            print_json(&json!({
                "nodes": kb.len(),
                "by_depth": depth_counts,
                "failed_relations": generation.failed.len(),
            }))?;
        } else {
            eprintln!(
                "{} nodes ({} per depth), {} failed relation prompts",
                kb.len(),
                depth_counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("/"),
                generation.failed.len()
            );
        }
    }
    Ok(())
}

fn depth_counts(kb: &KnowledgeBase) -> Vec<usize> {
    let mut counts = Vec::new();
    for id in kb.preorder() {
        let depth = kb.path(id).map(|p| p.len() - 1).unwrap_or(0);
        if counts.len() <= depth {
            counts.resize(depth + 1, 0);
        }
        counts[depth] += 1;
    }
    counts
}

#[derive(Serialize)]
struct Recommended<'a> {
    id: NodeId,
    label: &'a str,
    relation: Option<&'a RelationKind>,
}

fn recommend(a: RecommendArgs) -> Result<()> {
    let kb = load_kb(&a.kb)?;
    let config = a.engine.recommender_config()?;
    let providers = providers::build(&a.providers)?;
    let k = config.k;
    let recommender = providers::recommender(&providers, config)?;
    let rec = recommender.recommend(&kb, NodeId(a.node), k)?;
    let chosen = rec
        .chosen
        .iter()
        .map(|&id| {
            let node = kb.node(id)?;
            Ok(Recommended {
                id,
                label: node.label(),
                relation: node.relation.as_ref(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let body = if a.out.json {
        serde_json::to_string_pretty(&json!({
            "node": rec.node,
            "k": rec.k,
            "objective": rec.selection.objective,
            "chosen": chosen,
        }))?
    } else {
        let mut s = format!("{} (node {}), top {}:\n", kb.node(rec.node)?.label(), rec.node, rec.k);
        for (rank, r) in chosen.iter().enumerate() {
            let relation = r.relation.map(|r| r.name()).unwrap_or("-");
            s.push_str(&format!("{:>3}. {} [{}] #{}\n", rank + 1, r.label, relation, r.id));
        }
        s
    };
    emit(a.out.output.as_deref(), &body)
}

fn eval_recall(a: EvalRecallArgs) -> Result<()> {
    let kb = load_kb(&a.kb)?;
    let task = a.task.clone().unwrap_or_else(|| {
        a.truth
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "task".into())
    });
    let truth = GroundTruth::from_text(&task, &read(&a.truth)?);
    let rule = MatchRule {
        top_n: a.top_n as usize,
        sim_threshold: a.sim_threshold,
        mode: match a.mode {
            RecallMode::Automatic => MatchMode::Automatic,
            RecallMode::ExportForManual => MatchMode::ExportForManual,
        },
    };
    let providers = providers::build(&a.providers)?;
    let report = compute_recall(&kb, &truth, &rule, providers.embed.as_ref())?;
    let body = if a.out.json || rule.mode == MatchMode::ExportForManual {
        serde_json::to_string_pretty(&report)?
    } else {
        report.to_table()
    };
    emit(a.out.output.as_deref(), &body)
}

/// One row of a precision labelling sheet.
#[derive(Debug, Serialize, Deserialize)]
struct SheetRow {
    rng_seed: u64,
    parent_id: NodeId,
    parent: String,
    relation: String,
    child_id: NodeId,
    child: String,
    /// Blank until labelled; valid/invalid, yes/no, 1/0 are accepted.
    label: String,
}

fn write_sheet(sample: &PrecisionSample) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in &sample.edges {
        w.serialize(SheetRow {
            rng_seed: sample.rng_seed,
            parent_id: e.parent_id,
            parent: e.parent.clone(),
            relation: e.relation.name().to_string(),
            child_id: e.child_id,
            child: e.child.clone(),
            label: match e.label {
                Some(EdgeLabel::Valid) => "valid".into(),
                Some(EdgeLabel::Invalid) => "invalid".into(),
                None => String::new(),
            },
        })?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn read_sheet(text: &str) -> Result<PrecisionSample> {
    let mut rng_seed = None;
    let mut edges = Vec::new();
    for (i, row) in csv::Reader::from_reader(text.as_bytes()).deserialize::<SheetRow>().enumerate() {
        let row = row.with_context(|| format!("sheet row {}", i + 1))?;
        if *rng_seed.get_or_insert(row.rng_seed) != row.rng_seed {
            bail!("sheet row {} comes from a different sample (rng_seed {})", i + 1, row.rng_seed);
        }
        let label = match row.label.trim() {
            "" => None,
            l => Some(l.parse::<EdgeLabel>().map_err(anyhow::Error::msg).with_context(|| format!("sheet row {}", i + 1))?),
        };
        edges.push(SampledEdge {
            parent_id: row.parent_id,
            parent: row.parent,
            relation: row.relation.parse().unwrap_or_else(|e| match e {}),
            child_id: row.child_id,
            child: row.child,
            label,
        });
    }
    Ok(PrecisionSample {
        rng_seed: rng_seed.unwrap_or(0),
        edges,
    })
}

fn sample_precision(a: SamplePrecisionArgs) -> Result<()> {
    if let Some(sheet) = &a.labeled {
        let sample = read_sheet(&read(sheet)?)?;
        let precision = compute_precision(&sample)?;
        if a.out.json {
            return print_json(&json!({ "edges": sample.edges.len(), "precision": precision }));
        }
        return emit(None, &format!("precision {precision:.4} over {} edges", sample.edges.len()));
    }
    let Some(kb) = &a.kb else {
        bail!("either --kb or --labeled is required");
    };
    let sample = sample_edges_for_precision(&load_kb(kb)?, a.size, a.rng_seed)?;
    let body = if a.out.json {
        serde_json::to_string_pretty(&sample)?
    } else {
        write_sheet(&sample)?
    };
    emit(a.out.output.as_deref(), &body)
}

fn lines(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let labels = match (&a.labels, &a.kb) {
        (Some(path), _) => lines(&read(path)?),
        (None, Some(path)) => load_kb(path)?.labels().into_iter().map(String::from).collect(),
        (None, None) => bail!("either --labels or --kb is required"),
    };
    let config = ClusteringConfig {
        distance_threshold: a.threshold,
        ..ClusteringConfig::default()
    };
    let providers = providers::build(&a.providers)?;
    let assignment = cluster_concepts(&labels, &config, providers.embed.as_ref())?;
    let hits = match &a.explored {
        Some(path) => Some(cluster_hits(&assignment, &lines(&read(path)?))?),
        None => None,
    };
    let body = if a.out.json {
        serde_json::to_string_pretty(&json!({
            "n_concepts": labels.len(),
            "n_clusters": assignment.n_clusters,
            "distance_threshold": assignment.distance_threshold,
            "hits": hits,
            "assignment": assignment.labels.iter().zip(&assignment.cluster_of)
                .map(|(l, c)| json!({"label": l, "cluster": c}))
                .collect::<Vec<_>>(),
        }))?
    } else {
        let mut s = format!(
            "{} concepts in {} clusters at threshold {}\n",
            labels.len(),
            assignment.n_clusters,
            assignment.distance_threshold
        );
        if let Some(h) = hits {
            s.push_str(&format!("explored concepts hit {h} clusters\n"));
        }
        for c in 0..assignment.n_clusters {
            s.push_str(&format!("[{c}] {}\n", assignment.members(c).join("; ")));
        }
        s
    };
    emit(a.out.output.as_deref(), &body)
}

fn open_engine(data_dir: &Path, providers: Providers, engine: &EngineArgs, suggestions: Option<usize>) -> Result<Engine> {
    let store = JsonFileStore::open(data_dir).with_context(|| format!("opening data directory {}", data_dir.display()))?;
    let (expansion, mut session) = engine.configs()?;
    if let Some(m) = suggestions {
        session.suggestions = m;
    }
    Ok(Engine::new(Arc::new(store), providers, expansion, session))
}

fn export(a: ExportArgs) -> Result<()> {
    let format = match a.format {
        Format::Json => ExportFormat::Json,
        Format::Csv => ExportFormat::Csv,
    };
    let defaults = EngineArgs {
        n: None,
        max_kb_size: None,
        layers: None,
        relations_layer1: None,
        relations_layer2: None,
        k: None,
        alpha: None,
        k_growth: None,
    };
    // Exporting reads stored state only, so no live backend is needed.
    let engine = open_engine(&a.data_dir, Providers::mock(), &defaults, None)?;
    emit(a.output.as_deref(), &engine.export(&a.session, format)?)
}

fn serve(a: ServeArgs) -> Result<()> {
    let providers = providers::build(&a.providers)?;
    let engine = Arc::new(open_engine(&a.data_dir, providers, &a.engine, a.suggestions)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(weaver_service::http::serve(engine, a.addr, |addr| {
        println!("listening on http://{addr}");
        let _ = io::stdout().flush();
    }))?;
    Ok(())
}

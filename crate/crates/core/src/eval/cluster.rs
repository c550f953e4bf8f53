//! Ward agglomerative clustering with a distance-threshold cut.
//!
//! Linkage distances follow the usual convention where merging singletons at
//! Euclidean distance `d` is reported at height `d`, and in general
//! `sqrt(2 |A| |B| / (|A| + |B|)) * ||mean(A) - mean(B)||`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::concept::normalize;
use crate::lm::EmbeddingProvider;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Ward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    #[serde(default)]
    pub linkage: Linkage,
    pub distance_threshold: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            linkage: Linkage::Ward,
            distance_threshold: 0.7,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.distance_threshold > 0.0 && self.distance_threshold.is_finite()) {
            return Err(EvalError::InvalidArgument(format!(
                "distance threshold must be positive, got {}",
                self.distance_threshold
            )));
        }
        Ok(())
    }
}

/// One step of the dendrogram. Leaves are numbered `0..n`; the cluster made
/// by the `i`-th merge (in ascending distance order) gets id `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<String>,
    /// Cluster id per label, numbered by first appearance.
    pub cluster_of: Vec<usize>,
    pub n_clusters: usize,
    pub distance_threshold: f64,
}

impl ClusterAssignment {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &c in &self.cluster_of {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<&str> {
        self.labels
            .iter()
            .zip(&self.cluster_of)
            .filter(|(_, &c)| c == cluster)
            .map(|(l, _)| l.as_str())
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Full Ward dendrogram using the nearest-neighbour chain. Runs in O(n^2)
/// time and memory. Merges are returned sorted by distance, ties keeping
/// discovery order.
pub fn ward_clusters(vectors: &[Vec<f64>]) -> Result<Vec<Merge>, EvalError> {
    let n = vectors.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(EvalError::InvalidArgument("vectors differ in dimension".into()));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(EvalError::InvalidArgument("vectors contain non-finite values".into()));
    }

    // Squared linkage distances between active clusters, stored as a full
    // matrix indexed by slot. A merged cluster reuses the slot of `a`.
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(&vectors[i], &vectors[j]);
            d2[i * n + j] = v;
            d2[j * n + i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);
    let mut chain: Vec<usize> = Vec::with_capacity(n);

    while raw.len() < n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster"));
        }
        loop {
            let x = *chain.last().unwrap();
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            // Prefer the previous chain element on ties so the chain terminates.
            let mut best = prev;
            let mut best_d = prev.map_or(f64::INFINITY, |p| d2[x * n + p]);
            for y in 0..n {
                if y == x || !active[y] {
                    continue;
                }
                let d = d2[x * n + y];
                if d < best_d {
                    best_d = d;
                    best = Some(y);
                }
            }
            let y = best.expect("at least two active clusters");
            if Some(y) == prev {
                chain.pop();
                chain.pop();
                let (a, b) = (x.min(y), x.max(y));
                let (sa, sb) = (size[a] as f64, size[b] as f64);
                for k in 0..n {
                    if !active[k] || k == a || k == b {
                        continue;
                    }
                    let sk = size[k] as f64;
                    let t = sa + sb + sk;
                    let v = ((sa + sk) * d2[a * n + k] + (sb + sk) * d2[b * n + k] - sk * best_d) / t;
                    d2[a * n + k] = v.max(0.0);
                    d2[k * n + a] = v.max(0.0);
                }
                active[b] = false;
                size[a] += size[b];
                raw.push((a, b, best_d.max(0.0).sqrt()));
                break;
            }
            chain.push(y);
        }
    }

    // Relabel into dendrogram order: sort by distance, then map slots to
    // cluster ids as merges are replayed.
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| raw[i].2.total_cmp(&raw[j].2).then(i.cmp(&j)));
    let mut uf = UnionFind::new(n);
    let mut id_of_root: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for (step, &i) in order.iter().enumerate() {
        let (a, b, distance) = raw[i];
        let (ra, rb) = (uf.find(a), uf.find(b));
        let (ia, ib) = (id_of_root[ra], id_of_root[rb]);
        let root = uf.union(ra, rb);
        id_of_root[root] = n + step;
        merges.push(Merge {
            a: ia.min(ib),
            b: ia.max(ib),
            distance,
            size: uf.size[root],
        });
    }
    Ok(merges)
}

/// Flat cluster id per leaf after applying every merge at or below
/// `threshold`. Ids are numbered by first appearance.
pub fn cut(n: usize, merges: &[Merge], threshold: f64) -> Vec<usize> {
    let mut uf = UnionFind::new(n + merges.len());
    for (step, m) in merges.iter().enumerate() {
        if m.distance <= threshold {
            let new = n + step;
            uf.union_into(m.a, new);
            uf.union_into(m.b, new);
        }
    }
    let mut ids = HashMap::new();
    (0..n)
        .map(|i| {
            let r = uf.find(i);
            let next = ids.len();
            *ids.entry(r).or_insert(next)
        })
        .collect()
}

pub fn cluster_concepts(
    labels: &[String],
    config: &ClusteringConfig,
    embed: &dyn EmbeddingProvider,
) -> Result<ClusterAssignment, EvalError> {
    config.validate()?;
    let cluster_of = if labels.len() < 2 {
        vec![0; labels.len()]
    } else {
        let vectors = embed.embed(labels)?;
        let merges = ward_clusters(&vectors)?;
        cut(labels.len(), &merges, config.distance_threshold)
    };
    let n_clusters = cluster_of.iter().max().map_or(0, |m| m + 1);
    Ok(ClusterAssignment {
        labels: labels.to_vec(),
        cluster_of,
        n_clusters,
        distance_threshold: config.distance_threshold,
    })
}

/// Number of distinct clusters containing at least one explored label.
pub fn cluster_hits(assignment: &ClusterAssignment, explored: &[String]) -> Result<usize, EvalError> {
    let by_norm: HashMap<String, usize> = assignment
        .labels
        .iter()
        .zip(&assignment.cluster_of)
        .map(|(l, &c)| (normalize(l), c))
        .collect();
    let mut hit = vec![false; assignment.n_clusters];
    for label in explored {
        let c = by_norm
            .get(&normalize(label))
            .ok_or_else(|| EvalError::InvalidArgument(format!("{label:?} was not clustered")))?;
        hit[*c] = true;
    }
    Ok(hit.into_iter().filter(|&h| h).count())
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return a;
        }
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        big
    }

    fn union_into(&mut self, x: usize, target: usize) {
        let r = self.find(x);
        self.parent[r] = target;
    }
}

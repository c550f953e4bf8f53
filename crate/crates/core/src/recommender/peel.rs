//! Greedy peeling for the weighted k-subgraph objective
//! `sum of edge weights + alpha * sum of node weights`.
//!
//! Each node carries `alpha * node_w[i] + sum of edge_w[i][j]` over the other
//! remaining nodes. The node with the smallest such weight is removed, its
//! edges are subtracted from its neighbours, and this repeats until `k`
//! nodes are left. One step is O(n), so a full peel is O(n^2).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{CandidateGraph, RecommendError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommenderConfig {
    /// Recommendations in a first request.
    pub k: usize,
    /// Relevance weight against diversity; must be positive.
    pub alpha: f64,
    /// Added to `k` on every "more recommendations" request.
    pub k_growth: usize,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self {
            k: 10,
            alpha: 1.0,
            k_growth: 5,
        }
    }
}

impl RecommenderConfig {
    pub fn validate(&self) -> Result<(), RecommendError> {
        if self.k == 0 {
            return Err(RecommendError::InvalidArgument("k must be at least 1".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(RecommendError::InvalidArgument("alpha must be a positive real".into()));
        }
        if self.k_growth == 0 {
            return Err(RecommendError::InvalidArgument("k_growth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeelStep {
    pub removed: usize,
    /// Weight of the removed node at the moment it was removed.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Candidate indices, best first.
    pub chosen: Vec<usize>,
    pub objective: f64,
    pub peel_trace: Vec<PeelStep>,
}

/// `sum_{i<j in subset} edge_w[i][j] + alpha * sum_{i in subset} node_w[i]`.
pub fn objective_of(g: &CandidateGraph, subset: &[usize], alpha: f64) -> Result<f64, RecommendError> {
    let mut seen = vec![false; g.len()];
    for &i in subset {
        if i >= g.len() {
            return Err(RecommendError::InvalidArgument(format!("index {i} out of range")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(RecommendError::InvalidArgument(format!("index {i} repeated")));
        }
    }
    let mut total = 0.0;
    for (a, &i) in subset.iter().enumerate() {
        total += alpha * g.node(i);
        for &j in &subset[a + 1..] {
            total += g.edge(i, j);
        }
    }
    Ok(total)
}

/// Relative tolerance under which two weights count as tied. Relative so
/// that uniform rescaling of the weights cannot change the outcome.
const TIE_TOLERANCE: f64 = 1e-10;

/// Orders `(weight, index)` pairs ascending by weight, treating near-equal
/// weights as tied and breaking ties by the candidate's normalized label,
/// then by index.
pub(crate) fn compare_weights(g: &CandidateGraph, (wa, a): (f64, usize), (wb, b): (f64, usize)) -> Ordering {
    let scale = wa.abs().max(wb.abs());
    if (wa - wb).abs() > TIE_TOLERANCE * scale {
        return wa.partial_cmp(&wb).expect("finite weights");
    }
    g.candidates()[a]
        .norm()
        .cmp(g.candidates()[b].norm())
        .then(a.cmp(&b))
}

/// Step-by-step peeling state with incrementally maintained weights.
#[derive(Debug, Clone)]
pub struct Peeler<'g> {
    graph: &'g CandidateGraph,
    alpha: f64,
    alive: Vec<bool>,
    weights: Vec<f64>,
    remaining: usize,
    objective: f64,
}

impl<'g> Peeler<'g> {
    pub fn new(graph: &'g CandidateGraph, alpha: f64) -> Self {
        let n = graph.len();
        let weights: Vec<f64> = (0..n)
            .map(|i| alpha * graph.node(i) + graph.row(i).iter().sum::<f64>())
            .collect();
        let everything: Vec<usize> = (0..n).collect();
        let objective = objective_of(graph, &everything, alpha).expect("all indices valid");
        Self {
            graph,
            alpha,
            alive: vec![true; n],
            weights,
            remaining: n,
            objective,
        }
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn is_alive(&self, i: usize) -> bool {
        self.alive[i]
    }

    /// Current weight of node `i` among the remaining nodes.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Objective of the remaining set, maintained incrementally.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn remaining_indices(&self) -> Vec<usize> {
        (0..self.alive.len()).filter(|&i| self.alive[i]).collect()
    }

    /// The node the next step would remove.
    pub fn next_removal(&self) -> Option<usize> {
        (0..self.alive.len())
            .filter(|&i| self.alive[i])
            .min_by(|&a, &b| compare_weights(self.graph, (self.weights[a], a), (self.weights[b], b)))
    }

    pub fn step(&mut self) -> Option<PeelStep> {
        let removed = self.next_removal()?;
        let weight = self.weights[removed];
        self.alive[removed] = false;
        self.remaining -= 1;
        // Removing a node takes away exactly its own weight from the objective.
        self.objective -= weight;
        let row = self.graph.row(removed);
        for j in 0..self.alive.len() {
            if self.alive[j] {
                self.weights[j] -= row[j];
            }
        }
        Some(PeelStep { removed, weight })
    }

    /// Remaining nodes, highest weight first; tied weights in ascending
    /// label order.
    pub fn ranked(&self) -> Vec<usize> {
        let mut rest = self.remaining_indices();
        rest.sort_by(|&a, &b| {
            let (wa, wb) = (self.weights[a], self.weights[b]);
            if tied(wa, wb) {
                compare_weights(self.graph, (wa, a), (wb, b))
            } else {
                wb.partial_cmp(&wa).expect("finite weights")
            }
        });
        rest
    }
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

/// Peels `g` down to `min(k, n)` nodes.
pub fn greedy_peel(g: &CandidateGraph, cfg: &RecommenderConfig) -> Selection {
    let mut peeler = Peeler::new(g, cfg.alpha);
    let mut trace = Vec::with_capacity(g.len().saturating_sub(cfg.k));
    while peeler.remaining() > cfg.k {
        trace.push(peeler.step().expect("nodes remain"));
    }
    let chosen = peeler.ranked();
    let objective = objective_of(g, &chosen, cfg.alpha).expect("valid subset");
    Selection {
        chosen,
        objective,
        peel_trace: trace,
    }
}

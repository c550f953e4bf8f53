//! Input generators shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weaver_core::recommender::CandidateGraph;
use weaver_core::Concept;

/// Complete candidate graph with uniform [0, 1) weights.
pub fn random_graph(n: usize, seed: u64) -> CandidateGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w: f64 = rng.gen();
            edges[i][j] = w;
            edges[j][i] = w;
        }
    }
    let nodes = (0..n).map(|_| rng.gen()).collect();
    let labels = (0..n).map(|i| Concept::new(&format!("concept {i}")).unwrap()).collect();
    CandidateGraph::from_weights(labels, Concept::new("seed").unwrap(), &edges, nodes).unwrap()
}

/// Unit vectors scattered around `clusters` random centres.
pub fn clustered_vectors(n: usize, dim: usize, clusters: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            let v: Vec<f64> = centres[i % clusters].iter().map(|c| c + rng.gen_range(-0.2..0.2)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

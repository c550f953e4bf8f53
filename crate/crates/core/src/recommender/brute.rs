//! Exhaustive k-subset search, used as a test oracle for peeling.

use super::{objective_of, CandidateGraph, RecommendError, Selection};

pub const MAX_SUBSETS: u128 = 1_000_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Maximizes the objective over every subset of size `min(k, n)`. Among
/// equal objectives the lexicographically smallest index set wins.
pub fn brute_force_best(g: &CandidateGraph, k: usize, alpha: f64) -> Result<Selection, RecommendError> {
    let n = g.len();
    let k = k.min(n);
    let count = binomial(n, k);
    if count > MAX_SUBSETS {
        return Err(RecommendError::TooLarge { n, k, subsets: count });
    }
    let mut current: Vec<usize> = (0..k).collect();
    let mut best = current.clone();
    let mut best_value = objective_of(g, &current, alpha)?;
    while next_combination(&mut current, n) {
        let value = objective_of(g, &current, alpha)?;
        if value > best_value + 1e-12 * best_value.abs().max(1.0) {
            best_value = value;
            best.clone_from(&current);
        }
    }
    Ok(Selection {
        chosen: best,
        objective: best_value,
        peel_trace: Vec::new(),
    })
}

/// Advances to the next k-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

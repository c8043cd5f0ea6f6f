//! Error propagation under breadth-first peeling of a random hypergraph.
//!
//! Vertices are table cells and hyperedges are keys. One unit of error sits
//! in a random cell. Peeling a cell subtracts its edge from the edge's other
//! cells, and whatever error the peeled cell holds travels along with it.
//! The quantity of interest is the total error met at peel time.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hashing::mix::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeSampler {
    /// One vertex from each of `q` near-equal partitions, as the tables hash.
    #[default]
    Partitioned,
    /// `q` distinct vertices uniformly from all `m`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeelTrial {
    /// Sum over peeled cells of the error resident at peel time.
    pub total_error: u64,
    pub peeled: usize,
    /// Whether every edge was removed.
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeelStats {
    pub trials: usize,
    pub mean: f64,
    pub p95: f64,
    pub max: u64,
    pub complete_fraction: f64,
}

fn sample_edges(rng: &mut ChaCha8Rng, m: usize, edges: usize, q: usize, sampler: EdgeSampler) -> Vec<Vec<usize>> {
    (0..edges)
        .map(|_| match sampler {
            EdgeSampler::Partitioned => (0..q).map(|j| rng.random_range(j * m / q..(j + 1) * m / q)).collect(),
            EdgeSampler::Uniform => rand::seq::index::sample(rng, m, q).into_vec(),
        })
        .collect()
}

/// Peels `edges` over `m` vertices with one error unit at `error_at`.
pub fn peel_with_error(m: usize, edges: &[Vec<usize>], error_at: usize) -> PeelTrial {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (e, verts) in edges.iter().enumerate() {
        for &v in verts {
            incident[v].push(e);
        }
    }
    let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
    let mut alive = vec![true; edges.len()];
    let mut error = vec![0u64; m];
    if error_at < m {
        error[error_at] = 1;
    }
    let mut queue: VecDeque<usize> = (0..m).filter(|&v| degree[v] == 1).collect();
    let mut total = 0u64;
    let mut peeled = 0usize;
    let mut removed = 0usize;
    while let Some(v) = queue.pop_front() {
        if degree[v] != 1 {
            continue;
        }
        let e = *incident[v].iter().find(|&&e| alive[e]).expect("degree one means one live edge");
        alive[e] = false;
        removed += 1;
        peeled += 1;
        let carried = error[v];
        total += carried;
        for &u in &edges[e] {
            degree[u] -= 1;
            if u != v {
                error[u] += carried;
                if degree[u] == 1 {
                    queue.push_back(u);
                }
            }
        }
    }
    PeelTrial { total_error: total, peeled, complete: removed == edges.len() }
}

/// One trial: `floor(c m)` edges of size `q`, error in a uniform vertex.
pub fn peel_trial(m: usize, c: f64, q: usize, sampler: EdgeSampler, seed: u64) -> PeelTrial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = sample_edges(&mut rng, m, (c * m as f64).floor() as usize, q, sampler);
    let error_at = rng.random_range(0..m);
    peel_with_error(m, &edges, error_at)
}

fn check(m: usize, c: f64, q: usize) -> Result<()> {
    if q < 2 || m < q {
        return Err(invalid(format!("need 2 <= q <= m, got q = {q}, m = {m}")));
    }
    if !(c.is_finite() && c >= 0.0) {
        return Err(invalid(format!("edge density must be non-negative, got {c}")));
    }
    Ok(())
}

/// All trials, in order; trial `i` uses `derive_seed(seed, i)`.
pub fn peel_trials(m: usize, c: f64, q: usize, sampler: EdgeSampler, trials: usize, seed: u64) -> Result<Vec<PeelTrial>> {
    check(m, c, q)?;
    Ok((0..trials)
        .into_par_iter()
        .map(|i| peel_trial(m, c, q, sampler, derive_seed(seed, i as u64)))
        .collect())
}

pub fn summarize(results: &[PeelTrial]) -> PeelStats {
    let n = results.len();
    if n == 0 {
        return PeelStats { trials: 0, mean: 0.0, p95: 0.0, max: 0, complete_fraction: 0.0 };
    }
    let mut totals: Vec<u64> = results.iter().map(|r| r.total_error).collect();
    totals.sort_unstable();
    let idx = ((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1;
    PeelStats {
        trials: n,
        mean: totals.iter().sum::<u64>() as f64 / n as f64,
        p95: totals[idx] as f64,
        max: totals[n - 1],
        complete_fraction: results.iter().filter(|r| r.complete).count() as f64 / n as f64,
    }
}

pub fn peel_error_sim(m: usize, c: f64, q: usize, sampler: EdgeSampler, trials: usize, seed: u64) -> Result<PeelStats> {
    Ok(summarize(&peel_trials(m, c, q, sampler, trials, seed)?))
}

//! Seeded fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recon_core::geometry::{GridSpec, Point, PointSet};

pub fn random_points(space: &GridSpec, n: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| Point::new((0..space.dim()).map(|_| rng.random_range(0..=space.delta())).collect()))
        .collect();
    PointSet::new(*space, pts).expect("points lie in the space")
}

/// Two key sets sharing `shared` keys, each with `extra` keys of its own.
pub fn key_sets(shared: usize, extra: usize, seed: u64) -> (Vec<u64>, Vec<u64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let common: Vec<u64> = (0..shared).map(|_| rng.random()).collect();
    let mut a = common.clone();
    let mut b = common;
    a.extend((0..extra).map(|_| rng.random::<u64>()));
    b.extend((0..extra).map(|_| rng.random::<u64>()));
    (a, b)
}

pub fn cost_matrix(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..n).map(|_| rng.random_range(0..10_000) as f64).collect()).collect()
}

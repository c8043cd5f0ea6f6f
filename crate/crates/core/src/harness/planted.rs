//! Synthetic instances with a known structure.
//!
//! Bob's points are uniform. Alice keeps `n - k` of them, each nudged by a
//! bounded perturbation, and adds `k` fresh points that sit far from all of
//! Bob's. Both constructions re-check their promises exhaustively.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, ReconError, Result};
use crate::geometry::{raw_distance, GridSpec, Norm, Point, PointSet};

/// Attempts per perturbation before giving up on a point.
const PERTURB_ATTEMPTS: usize = 1_000;
/// Attempts per far point before declaring the space too crowded.
const FAR_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedEmdInstance {
    pub s_a: PointSet,
    pub s_b: PointSet,
    pub k: usize,
    /// Total perturbation over the `n - k` planted pairs; an upper bound on `EMD_k`.
    pub planted_emd_k_bound: f64,
    pub far_distance_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedGapInstance {
    pub s_a: PointSet,
    pub s_b: PointSet,
    /// Sorted positions in `s_a` of the far points.
    pub far_indices: Vec<usize>,
    pub r1: f64,
    pub r2: f64,
}

pub(crate) fn uniform_point(rng: &mut ChaCha8Rng, space: &GridSpec) -> Point {
    Point::new((0..space.dim()).map(|_| rng.random_range(0..=space.delta())).collect())
}

/// A point within `radius` of `p`, or `None` if every attempt left the grid.
pub(crate) fn perturb(rng: &mut ChaCha8Rng, space: &GridSpec, p: &Point, radius: f64) -> Option<Point> {
    let d = space.dim();
    let delta = space.delta() as i64;
    let budget = radius.floor().max(0.0) as usize;
    for _ in 0..PERTURB_ATTEMPTS {
        let mut c = p.coords().to_vec();
        let ok = match space.norm() {
            Norm::Hamming => {
                let flips = rng.random_range(0..=budget.min(d));
                for i in sample(rng, d, flips) {
                    c[i] ^= 1;
                }
                true
            }
            Norm::L1 => {
                let steps = rng.random_range(0..=budget);
                let mut inside = true;
                for _ in 0..steps {
                    let i = rng.random_range(0..d);
                    let next = c[i] as i64 + if rng.random::<bool>() { 1 } else { -1 };
                    if !(0..=delta).contains(&next) {
                        inside = false;
                        break;
                    }
                    c[i] = next as u32;
                }
                inside
            }
            Norm::L2 => {
                let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                let scale = if len > 0.0 { rng.random::<f64>() * radius / len } else { 0.0 };
                let mut inside = true;
                for (ci, di) in c.iter_mut().zip(&dir) {
                    let next = (*ci as f64 + di * scale).round() as i64;
                    if !(0..=delta).contains(&next) {
                        inside = false;
                        break;
                    }
                    *ci = next as u32;
                }
                inside && raw_distance(Norm::L2, &c, p.coords()) <= radius
            }
        };
        if ok {
            return Some(Point::new(c));
        }
    }
    None
}

fn far_point(rng: &mut ChaCha8Rng, space: &GridSpec, bob: &[Point], floor: f64) -> Result<Point> {
    for _ in 0..FAR_ATTEMPTS {
        let p = uniform_point(rng, space);
        if bob.iter().all(|b| raw_distance(space.norm(), p.coords(), b.coords()) >= floor) {
            return Ok(p);
        }
    }
    Err(ReconError::Generation(format!(
        "no point at distance >= {floor} from all of Bob's after {FAR_ATTEMPTS} draws"
    )))
}

type Planted = (Vec<Point>, Vec<(Point, f64)>, Vec<Point>);

/// Bob's points, Alice's planted pairs (with their distances) and far points.
fn plant(
    space: &GridSpec,
    n: usize,
    k: usize,
    radius: f64,
    noisy_fraction: f64,
    floor: f64,
    seed: u64,
) -> Result<Planted> {
    if k > n {
        return Err(invalid(format!("k = {k} exceeds n = {n}")));
    }
    if !(radius >= 0.0 && radius.is_finite() && floor.is_finite()) {
        return Err(invalid("radii must be finite and non-negative"));
    }
    if !(0.0..=1.0).contains(&noisy_fraction) {
        return Err(invalid(format!("noisy fraction must lie in [0, 1], got {noisy_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bob: Vec<Point> = (0..n).map(|_| uniform_point(&mut rng, space)).collect();
    let partners = sample(&mut rng, n, n - k).into_vec();
    let mut close = Vec::with_capacity(n - k);
    for j in partners {
        let p = if noisy_fraction >= 1.0 || rng.random::<f64>() < noisy_fraction {
            perturb(&mut rng, space, &bob[j], radius)
                .ok_or_else(|| ReconError::Generation("perturbation kept leaving the grid".into()))?
        } else {
            bob[j].clone()
        };
        let dist = raw_distance(space.norm(), p.coords(), bob[j].coords());
        close.push((p, dist));
    }
    let far = (0..k).map(|_| far_point(&mut rng, space, &bob, floor)).collect::<Result<Vec<_>>>()?;
    Ok((bob, close, far))
}

/// Requires `k < n`. With `noise_radius = 0` and `k = 0` the two sets coincide.
pub fn generate_emd_instance(
    space: &GridSpec,
    n: usize,
    k: usize,
    noise_radius: f64,
    far_scale: f64,
    seed: u64,
) -> Result<PlantedEmdInstance> {
    generate_emd_instance_with(space, n, k, noise_radius, 1.0, far_scale, seed)
}

/// As [`generate_emd_instance`], but only a `noisy_fraction` share of the
/// planted pairs is perturbed; the others are exact copies.
pub fn generate_emd_instance_with(
    space: &GridSpec,
    n: usize,
    k: usize,
    noise_radius: f64,
    noisy_fraction: f64,
    far_scale: f64,
    seed: u64,
) -> Result<PlantedEmdInstance> {
    if k >= n {
        return Err(invalid(format!("need k < n, got k = {k}, n = {n}")));
    }
    let (bob, close, far) = plant(space, n, k, noise_radius, noisy_fraction, far_scale, seed)?;
    let bound = close.iter().map(|(_, d)| d).sum();
    let s_b = PointSet::new(*space, bob)?;
    for p in &far {
        if s_b.nearest_distance(p).is_some_and(|d| d < far_scale) {
            return Err(ReconError::Generation("far point verification failed".into()));
        }
    }
    let mut alice: Vec<Point> = close.into_iter().map(|(p, _)| p).collect();
    alice.extend(far);
    Ok(PlantedEmdInstance {
        s_a: PointSet::new(*space, alice)?,
        s_b,
        k,
        planted_emd_k_bound: bound,
        far_distance_floor: far_scale,
    })
}

/// Requires `k <= n` and `r1 < r2`.
pub fn generate_gap_instance(
    space: &GridSpec,
    n: usize,
    k: usize,
    r1: f64,
    r2: f64,
    seed: u64,
) -> Result<PlantedGapInstance> {
    if !(r1 >= 0.0 && r1 < r2) {
        return Err(invalid(format!("need 0 <= r1 < r2, got {r1} and {r2}")));
    }
    let (bob, close, far) = plant(space, n, k, r1, 1.0, r2, seed)?;
    let far_set: BTreeSet<Point> = far.iter().cloned().collect();
    let mut alice: Vec<Point> = close.into_iter().map(|(p, _)| p).collect();
    alice.extend(far);
    let s_a = PointSet::new(*space, alice)?;
    let s_b = PointSet::new(*space, bob)?;

    let mut far_indices = Vec::with_capacity(k);
    for (i, a) in s_a.iter().enumerate() {
        let nearest = s_b.nearest_distance(a).unwrap_or(f64::INFINITY);
        if far_set.contains(a) {
            if nearest < r2 {
                return Err(ReconError::Generation(format!("far point {i} is within {nearest} of Bob")));
            }
            far_indices.push(i);
        } else if nearest > r1 {
            return Err(ReconError::Generation(format!("close point {i} has no partner within r1")));
        }
    }
    Ok(PlantedGapInstance { s_a, s_b, far_indices, r1, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{emd, emd_k};

    #[test]
    fn noiseless_instance_is_identical() {
        let space = GridSpec::new(15, 3, Norm::L1).unwrap();
        let inst = generate_emd_instance(&space, 20, 0, 0.0, 1.0, 5).unwrap();
        assert_eq!(inst.s_a, inst.s_b);
        assert_eq!(inst.planted_emd_k_bound, 0.0);
    }

    #[test]
    fn deterministic() {
        let space = GridSpec::hamming(32).unwrap();
        let a = generate_emd_instance(&space, 30, 3, 2.0, 8.0, 9).unwrap();
        let b = generate_emd_instance(&space, 30, 3, 2.0, 8.0, 9).unwrap();
        assert_eq!(a, b);
        let g1 = generate_gap_instance(&space, 30, 3, 1.0, 8.0, 9).unwrap();
        let g2 = generate_gap_instance(&space, 30, 3, 1.0, 8.0, 9).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn small_instances_respect_the_planted_bound() {
        for (seed, norm) in (0..60).zip([Norm::L1, Norm::L2, Norm::Hamming].into_iter().cycle()) {
            let space = match norm {
                Norm::Hamming => GridSpec::hamming(8).unwrap(),
                _ => GridSpec::new(20, 2, norm).unwrap(),
            };
            let n = 4 + (seed as usize % 7);
            let k = seed as usize % 3;
            let inst = generate_emd_instance(&space, n, k, 3.0, 4.0, seed).unwrap();
            let exact = emd_k(&space, &inst.s_a, &inst.s_b, k).unwrap();
            assert!(exact <= inst.planted_emd_k_bound + 1e-9, "seed {seed}");
            if k == 0 {
                assert!(emd(&space, &inst.s_a, &inst.s_b).unwrap() <= inst.planted_emd_k_bound + 1e-9);
            }
        }
    }

    #[test]
    fn gap_instance_without_far_points() {
        let space = GridSpec::new(100, 2, Norm::L2).unwrap();
        let g = generate_gap_instance(&space, 15, 0, 2.0, 30.0, 1).unwrap();
        assert!(g.far_indices.is_empty());
        let g = generate_gap_instance(&space, 15, 4, 2.0, 30.0, 1).unwrap();
        assert_eq!(g.far_indices.len(), 4);
    }

    #[test]
    fn crowded_space_is_reported() {
        let space = GridSpec::hamming(4).unwrap();
        let err = generate_emd_instance(&space, 16, 2, 0.0, 5.0, 0).unwrap_err();
        assert!(matches!(err, ReconError::Generation(_)));
        assert!(generate_emd_instance(&space, 4, 4, 0.0, 1.0, 0).is_err());
    }
}

//! Points on the integer grid `{0..=delta}^dim`, metrics, and exact EMD oracles.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, ReconError, Result};
use crate::matching;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Hamming,
}

impl Norm {
    pub fn as_str(self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Hamming => "hamming",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Norm::L1 => 1,
            Norm::L2 => 2,
            Norm::Hamming => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Norm> {
        match code {
            0 => Some(Norm::Hamming),
            1 => Some(Norm::L1),
            2 => Some(Norm::L2),
            _ => None,
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = ReconError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            "hamming" => Ok(Norm::Hamming),
            other => Err(invalid(format!("unknown norm `{other}`"))),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The metric space `({0..=delta}^dim, norm)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    delta: u32,
    dim: usize,
    norm: Norm,
}

#[derive(Deserialize)]
struct RawGrid {
    delta: u32,
    dim: usize,
    norm: Norm,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = ReconError;

    fn try_from(r: RawGrid) -> Result<Self> {
        GridSpec::new(r.delta, r.dim, r.norm)
    }
}

impl GridSpec {
    pub fn new(delta: u32, dim: usize, norm: Norm) -> Result<Self> {
        if delta == 0 {
            return Err(invalid("delta must be at least 1"));
        }
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if norm == Norm::Hamming && delta != 1 {
            return Err(invalid("hamming space requires delta = 1"));
        }
        Ok(GridSpec { delta, dim, norm })
    }

    pub fn hamming(dim: usize) -> Result<Self> {
        GridSpec::new(1, dim, Norm::Hamming)
    }

    pub fn delta(&self) -> u32 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    /// Bits needed for one coordinate, `ceil(log2(delta + 1))`.
    pub fn coord_bits(&self) -> u32 {
        u32::BITS - self.delta.leading_zeros()
    }

    /// Largest possible distance between two points of the space.
    pub fn diameter(&self) -> f64 {
        let d = self.dim as f64;
        let delta = self.delta as f64;
        match self.norm {
            Norm::L1 | Norm::Hamming => d * delta,
            Norm::L2 => d.sqrt() * delta,
        }
    }

    pub fn check(&self, p: &Point) -> Result<()> {
        if p.dim() != self.dim {
            return Err(invalid(format!(
                "point has dimension {}, space has {}",
                p.dim(),
                self.dim
            )));
        }
        if let Some(c) = p.coords().iter().find(|&&c| c > self.delta) {
            return Err(invalid(format!("coordinate {c} exceeds delta {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point(Vec<u32>);

impl Point {
    pub fn new(coords: Vec<u32>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_coords(self) -> Vec<u32> {
        self.0
    }
}

impl From<Vec<u32>> for Point {
    fn from(v: Vec<u32>) -> Self {
        Point(v)
    }
}

/// Distance without conformance checks. Callers guarantee equal dimensions.
pub(crate) fn raw_distance(norm: Norm, a: &[u32], b: &[u32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    match norm {
        Norm::L1 => a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as u64).sum::<u64>() as f64,
        Norm::Hamming => a.iter().zip(b).filter(|(x, y)| x != y).count() as f64,
        Norm::L2 => {
            let sq: u64 = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x.abs_diff(y) as u64;
                    d * d
                })
                .sum();
            (sq as f64).sqrt()
        }
    }
}

pub fn distance(space: &GridSpec, a: &Point, b: &Point) -> Result<f64> {
    space.check(a)?;
    space.check(b)?;
    Ok(raw_distance(space.norm, a.coords(), b.coords()))
}

/// A multiset of points, kept sorted so equal multisets compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointSet {
    space: GridSpec,
    points: Vec<Point>,
}

impl PointSet {
    pub fn new(space: GridSpec, mut points: Vec<Point>) -> Result<Self> {
        for p in &points {
            space.check(p)?;
        }
        points.sort_unstable();
        Ok(PointSet { space, points })
    }

    pub fn empty(space: GridSpec) -> Self {
        PointSet { space, points: Vec::new() }
    }

    pub fn space(&self) -> &GridSpec {
        &self.space
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Smallest distance from `p` to any member, `None` when empty.
    pub fn nearest_distance(&self, p: &Point) -> Option<f64> {
        self.points
            .iter()
            .map(|q| raw_distance(self.space.norm, p.coords(), q.coords()))
            .min_by(f64::total_cmp)
    }
}

impl<'a> IntoIterator for &'a PointSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

pub(crate) fn cost_matrix(norm: Norm, xs: &[Point], ys: &[Point]) -> Vec<Vec<f64>> {
    xs.iter()
        .map(|x| ys.iter().map(|y| raw_distance(norm, x.coords(), y.coords())).collect())
        .collect()
}

fn check_same_space(space: &GridSpec, x: &PointSet, y: &PointSet) -> Result<()> {
    if x.space() != space || y.space() != space {
        return Err(invalid("point sets do not live in the given space"));
    }
    Ok(())
}

/// Earth mover's distance between equal-size multisets.
pub fn emd(space: &GridSpec, x: &PointSet, y: &PointSet) -> Result<f64> {
    check_same_space(space, x, y)?;
    if x.len() != y.len() {
        return Err(invalid(format!("emd needs equal sizes, got {} and {}", x.len(), y.len())));
    }
    emd_points(space.norm, x.points(), y.points())
}

pub(crate) fn emd_points(norm: Norm, xs: &[Point], ys: &[Point]) -> Result<f64> {
    let (_, total) = matching::min_cost_matching(&cost_matrix(norm, xs, ys))?;
    Ok(total)
}

/// Largest `n` the exhaustive `emd_k` oracle accepts.
pub const EMD_K_MAX_N: usize = 12;
/// Largest `k` the exhaustive `emd_k` oracle accepts.
pub const EMD_K_MAX_K: usize = 3;

/// Minimum EMD after discarding `k` points from each side, by exhaustive
/// enumeration of the discarded subsets. Refuses instances above the cap.
pub fn emd_k(space: &GridSpec, x: &PointSet, y: &PointSet, k: usize) -> Result<f64> {
    check_same_space(space, x, y)?;
    let n = x.len();
    if y.len() != n {
        return Err(invalid(format!("emd_k needs equal sizes, got {n} and {}", y.len())));
    }
    if k > n {
        return Err(invalid(format!("k = {k} exceeds set size {n}")));
    }
    if n > EMD_K_MAX_N || k > EMD_K_MAX_K {
        return Err(ReconError::SizeLimit(format!(
            "emd_k oracle handles n <= {EMD_K_MAX_N}, k <= {EMD_K_MAX_K}; got n = {n}, k = {k}"
        )));
    }
    let full = cost_matrix(space.norm, x.points(), y.points());
    let subsets = subsets_of_size(n, n - k);
    let mut best = f64::INFINITY;
    for xs in &subsets {
        for ys in &subsets {
            let sub: Vec<Vec<f64>> =
                xs.iter().map(|&i| ys.iter().map(|&j| full[i][j]).collect()).collect();
            let (_, c) = matching::min_cost_matching(&sub)?;
            best = best.min(c);
        }
    }
    Ok(best)
}

fn subsets_of_size(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(size);
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < size - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    rec(0, n, size, &mut cur, &mut out);
    out
}

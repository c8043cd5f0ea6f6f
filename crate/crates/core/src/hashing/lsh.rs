//! Locality sensitive hash families on the integer grid.
//!
//! * `HammingBit`: sample one of `ceil(w)` bit positions, positions past the
//!   dimension read as a constant zero (zero padding to width `w`).
//! * `GridL1`: randomly shifted axis-aligned grid of side `w`.
//! * `PstableL2`: Gaussian projection rounded to a shifted 1-d lattice of width `w`.
//! * `OnesidedGrid`: shifted grid of side `r2 / d^(1/p)`; points sharing a cell
//!   are always within `r2`, so far pairs never collide.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};
use crate::geometry::{raw_distance, GridSpec, Norm, Point};
use crate::hashing::mix::{derive_seed, hash_words, stream};

/// Fixed seed for canonicalizing grid cell coordinates into one integer.
const CELL_ID_SEED: u64 = 0x6C62_272E_07BB_0142;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LshKind {
    HammingBit,
    GridL1,
    PstableL2,
    OnesidedGrid,
}

/// Multi-scale guarantee `(r, p, alpha)`: for `f(x,y) <= r` the collision
/// probability is at least `p^f`, and for every pair at most `p^(alpha f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlshGuarantee {
    pub r: f64,
    pub p: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlshFamilySpec {
    kind: LshKind,
    width: f64,
    space: GridSpec,
}

impl MlshFamilySpec {
    pub fn new(kind: LshKind, width: f64, space: GridSpec) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(invalid(format!("lsh width must be positive and finite, got {width}")));
        }
        match kind {
            LshKind::HammingBit => {
                if space.norm() != Norm::Hamming {
                    return Err(invalid("bit sampling needs a hamming space"));
                }
                if width < space.dim() as f64 {
                    return Err(invalid(format!(
                        "bit sampling width {width} is below the dimension {}",
                        space.dim()
                    )));
                }
                if width > (1u64 << 52) as f64 {
                    return Err(invalid("bit sampling width too large"));
                }
            }
            LshKind::GridL1 => {
                if space.norm() == Norm::L2 {
                    return Err(invalid("grid family is calibrated for l1 or hamming spaces"));
                }
            }
            LshKind::PstableL2 => {
                if space.norm() != Norm::L2 {
                    return Err(invalid("gaussian projection family needs an l2 space"));
                }
            }
            LshKind::OnesidedGrid => {}
        }
        Ok(MlshFamilySpec { kind, width, space })
    }

    /// One-sided grid whose cells have diameter `r2` under the space's norm.
    pub fn onesided(space: GridSpec, r2: f64) -> Result<Self> {
        if !(r2.is_finite() && r2 > 0.0) {
            return Err(invalid(format!("r2 must be positive, got {r2}")));
        }
        let d = space.dim() as f64;
        let width = match space.norm() {
            Norm::L2 => r2 / d.sqrt(),
            Norm::L1 | Norm::Hamming => r2 / d,
        };
        Self::new(LshKind::OnesidedGrid, width, space)
    }

    pub fn kind(&self) -> LshKind {
        self.kind
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn space(&self) -> &GridSpec {
        &self.space
    }

    /// The multi-scale guarantee, `None` for the one-sided grid (it is a
    /// plain two-threshold family).
    pub fn guarantee(&self) -> Option<MlshGuarantee> {
        let w = self.width;
        match self.kind {
            LshKind::HammingBit | LshKind::GridL1 => {
                Some(MlshGuarantee { r: 0.79 * w, p: (-2.0 / w).exp(), alpha: 0.5 })
            }
            LshKind::PstableL2 => Some(MlshGuarantee {
                r: 0.99 * w,
                p: (-2.0 * (2.0 / PI).sqrt() / w).exp(),
                alpha: 1.0 / (4.0 * SQRT_2),
            }),
            LshKind::OnesidedGrid => None,
        }
    }

    pub fn r(&self) -> Option<f64> {
        self.guarantee().map(|g| g.r)
    }

    pub fn p(&self) -> Option<f64> {
        self.guarantee().map(|g| g.p)
    }

    pub fn alpha(&self) -> Option<f64> {
        self.guarantee().map(|g| g.alpha)
    }

    /// Largest distance at which two points can share a one-sided grid cell.
    pub fn onesided_diameter(&self) -> Option<f64> {
        (self.kind == LshKind::OnesidedGrid).then(|| {
            let d = self.space.dim() as f64;
            match self.space.norm() {
                Norm::L2 => self.width * d.sqrt(),
                Norm::L1 | Norm::Hamming => self.width * d,
            }
        })
    }

    /// Exact collision probability of a pair, computed from its coordinates.
    pub fn exact_collision_probability(&self, x: &Point, y: &Point) -> Result<f64> {
        self.space.check(x)?;
        self.space.check(y)?;
        let w = self.width;
        Ok(match self.kind {
            LshKind::HammingBit => {
                1.0 - raw_distance(Norm::Hamming, x.coords(), y.coords()) / w.ceil()
            }
            LshKind::GridL1 | LshKind::OnesidedGrid => x
                .coords()
                .iter()
                .zip(y.coords())
                .map(|(&a, &b)| (1.0 - a.abs_diff(b) as f64 / w).max(0.0))
                .product(),
            LshKind::PstableL2 => {
                pstable_collision_probability(raw_distance(Norm::L2, x.coords(), y.coords()), w)
            }
        })
    }
}

/// Collision probability of `floor((<g, x> + a) / w)` for Gaussian `g` and
/// `a ~ U[0, w)`, at Euclidean distance `c`:
/// `1 - 2 F(-w/c) - (sqrt(2) c / (sqrt(pi) w)) (1 - exp(-w^2 / 2c^2))`
/// where `F` is the standard normal CDF.
pub fn pstable_collision_probability(c: f64, w: f64) -> f64 {
    if c <= 0.0 {
        return 1.0;
    }
    let std = Normal::standard();
    let u = w / c;
    let p = 1.0 - 2.0 * std.cdf(-u) - (SQRT_2 / (PI.sqrt() * u)) * (1.0 - (-u * u / 2.0).exp());
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
enum Draw {
    /// Sampled position; values `>= dim` are padding and hash to zero.
    Bit(usize),
    Offsets(Vec<f64>),
    Projection { dir: Vec<f64>, offset: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LshFunction {
    family: MlshFamilySpec,
    draw: Draw,
}

/// Deterministic draw number `draw_index` from the family under `seed`.
pub fn draw_lsh(family: &MlshFamilySpec, seed: u64, draw_index: u64) -> LshFunction {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(seed, stream::LSH_DRAW), draw_index));
    let w = family.width;
    let d = family.space.dim();
    let draw = match family.kind {
        LshKind::HammingBit => Draw::Bit(rng.random_range(0..w.ceil() as u64) as usize),
        LshKind::GridL1 | LshKind::OnesidedGrid => {
            Draw::Offsets((0..d).map(|_| rng.random_range(0.0..w)).collect())
        }
        LshKind::PstableL2 => {
            let dir = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            Draw::Projection { dir, offset: rng.random_range(0.0..w) }
        }
    };
    LshFunction { family: *family, draw }
}

impl LshFunction {
    pub fn family(&self) -> &MlshFamilySpec {
        &self.family
    }

    /// True for a padded bit-sampling draw, which is constant.
    pub fn is_constant(&self) -> bool {
        matches!(self.draw, Draw::Bit(i) if i >= self.family.space.dim())
    }

    pub fn eval(&self, x: &Point) -> Result<u64> {
        self.family.space.check(x)?;
        Ok(self.eval_coords(x.coords()))
    }

    /// Evaluation without conformance checks.
    #[inline]
    pub fn eval_coords(&self, x: &[u32]) -> u64 {
        let w = self.family.width;
        match &self.draw {
            Draw::Bit(i) => x.get(*i).map_or(0, |&b| b as u64),
            Draw::Offsets(off) => {
                let cells = x.iter().zip(off).map(|(&c, &o)| ((c as f64 + o) / w).floor() as i64 as u64);
                hash_words(CELL_ID_SEED, cells)
            }
            Draw::Projection { dir, offset } => {
                let dot: f64 = x.iter().zip(dir).map(|(&c, &g)| c as f64 * g).sum();
                ((dot + offset) / w).floor() as i64 as u64
            }
        }
    }
}

/// Fraction of `trials` independent draws under which `x` and `y` collide.
pub fn collision_estimate(
    family: &MlshFamilySpec,
    x: &Point,
    y: &Point,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(invalid("collision estimate needs at least one trial"));
    }
    family.space.check(x)?;
    family.space.check(y)?;
    let hits = (0..trials)
        .filter(|&i| {
            let h = draw_lsh(family, seed, i);
            h.eval_coords(x.coords()) == h.eval_coords(y.coords())
        })
        .count();
    Ok(hits as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[u32]) -> Point {
        Point::new(v.to_vec())
    }

    #[test]
    fn validation() {
        let ham = GridSpec::hamming(8).unwrap();
        let l1 = GridSpec::new(100, 2, Norm::L1).unwrap();
        let l2 = GridSpec::new(100, 2, Norm::L2).unwrap();
        assert!(MlshFamilySpec::new(LshKind::HammingBit, 7.0, ham).is_err());
        assert!(MlshFamilySpec::new(LshKind::HammingBit, 8.0, ham).is_ok());
        assert!(MlshFamilySpec::new(LshKind::HammingBit, 8.0, l1).is_err());
        assert!(MlshFamilySpec::new(LshKind::GridL1, 0.0, l1).is_err());
        assert!(MlshFamilySpec::new(LshKind::GridL1, 3.0, l2).is_err());
        assert!(MlshFamilySpec::new(LshKind::PstableL2, 3.0, l1).is_err());
        assert!(MlshFamilySpec::new(LshKind::PstableL2, 3.0, l2).is_ok());
    }

    #[test]
    fn guarantees() {
        let ham = GridSpec::hamming(8).unwrap();
        let f = MlshFamilySpec::new(LshKind::HammingBit, 16.0, ham).unwrap();
        let g = f.guarantee().unwrap();
        assert!((g.r - 12.64).abs() < 1e-12);
        assert!((g.p - (-0.125f64).exp()).abs() < 1e-15);
        assert_eq!(g.alpha, 0.5);
        let os = MlshFamilySpec::onesided(GridSpec::new(100, 4, Norm::L1).unwrap(), 64.0).unwrap();
        assert_eq!(os.width(), 16.0);
        assert!(os.guarantee().is_none());
        assert_eq!(os.onesided_diameter(), Some(64.0));
    }

    #[test]
    fn draws_are_deterministic() {
        let l2 = GridSpec::new(100, 3, Norm::L2).unwrap();
        let f = MlshFamilySpec::new(LshKind::PstableL2, 10.0, l2).unwrap();
        assert_eq!(draw_lsh(&f, 7, 3), draw_lsh(&f, 7, 3));
        assert_ne!(draw_lsh(&f, 7, 3), draw_lsh(&f, 7, 4));
    }

    #[test]
    fn unpadded_bit_sampling_never_constant() {
        let ham = GridSpec::hamming(16).unwrap();
        let f = MlshFamilySpec::new(LshKind::HammingBit, 16.0, ham).unwrap();
        assert!((0..10_000).all(|i| !draw_lsh(&f, 1, i).is_constant()));
    }

    #[test]
    fn same_point_collides() {
        let l1 = GridSpec::new(1000, 1, Norm::L1).unwrap();
        let f = MlshFamilySpec::new(LshKind::GridL1, 10.0, l1).unwrap();
        let x = pt(&[417]);
        assert_eq!(collision_estimate(&f, &x, &x, 1000, 3).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let l1 = GridSpec::new(10, 2, Norm::L1).unwrap();
        let f = MlshFamilySpec::new(LshKind::GridL1, 3.0, l1).unwrap();
        assert!(draw_lsh(&f, 0, 0).eval(&pt(&[1])).is_err());
        assert!(collision_estimate(&f, &pt(&[1]), &pt(&[1, 2]), 10, 0).is_err());
    }

    #[test]
    fn pstable_formula_limits() {
        assert_eq!(pstable_collision_probability(0.0, 1.0), 1.0);
        assert!(pstable_collision_probability(1e-6, 1.0) > 0.999);
        assert!(pstable_collision_probability(1e6, 1.0) < 1e-5);
        let mut prev = 1.0;
        for i in 1..100 {
            let p = pstable_collision_probability(i as f64 * 0.1, 1.0);
            assert!(p <= prev);
            prev = p;
        }
    }
}

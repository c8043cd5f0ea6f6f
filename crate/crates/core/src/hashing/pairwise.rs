//! Pairwise-independent hashing of integer tuples over the field of
//! integers modulo the Mersenne prime `2^61 - 1`.
//!
//! A tuple `(v_1, .., v_L)` is split into 32-bit limbs `u_1, .., u_2L` and hashed
//! as `b + L*c + sum a_j u_j (mod P)` with all coefficients uniform. Any two
//! distinct tuples differ in a nonzero linear form of the coefficients, so the
//! pair of outputs is uniform. Including `L` keeps a tuple and its extensions
//! apart, and the form lets prefixes be hashed incrementally.

use crate::error::{invalid, Result};
use crate::hashing::mix::{derive_seed, mix64, stream};

pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[inline]
fn reduce(x: u64) -> u64 {
    let r = (x & MERSENNE_61) + (x >> 61);
    if r >= MERSENNE_61 {
        r - MERSENNE_61
    } else {
        r
    }
}

#[inline]
fn mul_mod(a: u64, b: u64) -> u64 {
    let p = a as u128 * b as u128;
    let lo = (p as u64) & MERSENNE_61;
    let hi = (p >> 61) as u64;
    reduce(lo + hi)
}

#[inline]
fn add_mod(a: u64, b: u64) -> u64 {
    reduce(a + b)
}

/// Field element drawn from `seed` at position `index`.
#[inline]
fn coefficient(seed: u64, index: u64) -> u64 {
    let x = mix64(derive_seed(seed, index)) >> 3;
    if x == MERSENNE_61 {
        0
    } else {
        x
    }
}

const B_INDEX: u64 = 0;
const LEN_INDEX: u64 = 1;
const LIMB_BASE: u64 = 2;

/// One degree-1 polynomial hash with its first coefficients cached.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Poly {
    seed: u64,
    b: u64,
    c: u64,
    cached: Vec<u64>,
}

impl Poly {
    fn new(seed: u64, cache_limbs: usize) -> Self {
        Poly {
            seed,
            b: coefficient(seed, B_INDEX),
            c: coefficient(seed, LEN_INDEX),
            cached: (0..cache_limbs as u64).map(|j| coefficient(seed, LIMB_BASE + j)).collect(),
        }
    }

    #[inline]
    fn limb_coeff(&self, j: usize) -> u64 {
        match self.cached.get(j) {
            Some(&a) => a,
            None => coefficient(self.seed, LIMB_BASE + j as u64),
        }
    }

    #[inline]
    fn absorb(&self, acc: u64, pos: usize, v: u64) -> u64 {
        let lo = v & 0xFFFF_FFFF;
        let hi = v >> 32;
        let acc = add_mod(acc, mul_mod(self.limb_coeff(2 * pos), lo));
        add_mod(acc, mul_mod(self.limb_coeff(2 * pos + 1), hi))
    }

    #[inline]
    fn finish(&self, acc: u64, len: usize) -> u64 {
        add_mod(add_mod(self.b, acc), mul_mod(self.c, reduce(len as u64)))
    }
}

/// Pairwise-independent hash of integer tuples to `output_bits` bits.
///
/// Up to 61 bits come from one field evaluation; wider outputs splice in the
/// low bits of a second, independent evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseHash {
    seed: u64,
    output_bits: u32,
    main: Poly,
    extra: Option<Poly>,
}

impl PairwiseHash {
    pub fn new(seed: u64, output_bits: u32) -> Result<Self> {
        Self::with_cache(seed, output_bits, 0)
    }

    /// Precomputes coefficients for tuples of up to `max_len` values.
    pub fn with_cache(seed: u64, output_bits: u32, max_len: usize) -> Result<Self> {
        if !(1..=64).contains(&output_bits) {
            return Err(invalid(format!("output bits must be in [1, 64], got {output_bits}")));
        }
        let limbs = max_len.saturating_mul(2);
        Ok(PairwiseHash {
            seed,
            output_bits,
            main: Poly::new(seed, limbs),
            extra: (output_bits > 61).then(|| Poly::new(derive_seed(seed, u64::MAX), limbs)),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn output_bits(&self) -> u32 {
        self.output_bits
    }

    pub fn hash(&self, values: &[u64]) -> u64 {
        let mut acc = self.accumulator();
        for &v in values {
            acc.push(v);
        }
        acc.finish()
    }

    /// Incremental evaluator: `finish` after each `push` yields the hash of
    /// the prefix seen so far.
    pub fn accumulator(&self) -> PrefixAccumulator<'_> {
        PrefixAccumulator { hash: self, main: 0, extra: 0, len: 0 }
    }

    fn output(&self, main: u64, extra: u64, len: usize) -> u64 {
        let lo = self.main.finish(main, len);
        match &self.extra {
            None => lo & mask(self.output_bits),
            Some(poly) => {
                let hi = poly.finish(extra, len);
                (lo | (hi << 61)) & mask(self.output_bits)
            }
        }
    }
}

#[inline]
fn mask(bits: u32) -> u64 {
    if bits == 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[derive(Debug, Clone)]
pub struct PrefixAccumulator<'a> {
    hash: &'a PairwiseHash,
    main: u64,
    extra: u64,
    len: usize,
}

impl PrefixAccumulator<'_> {
    #[inline]
    pub fn push(&mut self, v: u64) {
        self.main = self.hash.main.absorb(self.main, self.len, v);
        if let Some(poly) = &self.hash.extra {
            self.extra = poly.absorb(self.extra, self.len, v);
        }
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn finish(&self) -> u64 {
        self.hash.output(self.main, self.extra, self.len)
    }
}

/// Compresses a value tuple with a pairwise-independent hash.
pub fn key_combine(ph: &PairwiseHash, values: &[u64]) -> u64 {
    ph.hash(values)
}

/// 64-bit key fingerprint: a pairwise-independent hash followed by a fixed
/// bijective mix. The mix keeps pairwise independence but destroys the
/// field-linearity, so sums and averages of checksums in counting cells
/// cannot masquerade as the checksum of an averaged key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checksum {
    inner: PairwiseHash,
}

impl Checksum {
    pub fn new(seed: u64) -> Self {
        let inner = PairwiseHash::with_cache(derive_seed(seed, stream::CHECKSUM), 64, 1)
            .expect("64 output bits is valid");
        Checksum { inner }
    }

    #[inline]
    pub fn of(&self, key: u64) -> u64 {
        mix64(self.inner.hash(&[key]))
    }
}

/// One-shot checksum of `key` under `seed`.
pub fn checksum(key: u64, seed: u64) -> u64 {
    Checksum::new(seed).of(key)
}

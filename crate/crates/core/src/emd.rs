//! Earth mover's distance reconciliation.
//!
//! Alice inserts every point into `t` robust tables, keyed at level `i` by a
//! hash of the first `count(i)` multi-scale LSH values, where `count` doubles
//! per level. Bob deletes his own points, takes the finest level that decodes
//! to a small balanced difference, and swaps the decoded points of his side
//! for Alice's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, ReconError, Result};
use crate::geometry::{cost_matrix, GridSpec, Norm, Point, PointSet};
use crate::hashing::lsh::{draw_lsh, LshFunction, LshKind, MlshFamilySpec};
use crate::hashing::mix::{derive_path, derive_seed, stream};
use crate::hashing::pairwise::PairwiseHash;
use crate::matching;
use crate::riblt::RibltTable;
use crate::transport::{Direction, Transport};
use crate::wire::{ByteReader, ByteWriter};

/// Slack for floating point comparisons against derived constraints.
const REL_TOL: f64 = 1e-9;
/// Refuse parameterizations that would need more LSH draws than this.
pub const MAX_DRAWS: usize = 1 << 24;
pub const MESSAGE_VERSION: u16 = 1;
pub const DEFAULT_NUM_HASHES: usize = 3;

pub mod tags {
    pub const TABLES: u8 = 0x20;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmdParams {
    k: usize,
    d1: f64,
    d2: f64,
    max_dist: f64,
    num_hashes: usize,
    mlsh: MlshFamilySpec,
    shared_seed: u64,
    levels: usize,
    draws: usize,
}

impl EmdParams {
    /// `d1 <= EMD_k <= d2` is the promised range, `max_dist` bounds every
    /// cross distance. The family must satisfy `r >= min(max_dist, d2)` and
    /// `p >= exp(-k / (24 d2))`.
    pub fn new(
        k: usize,
        d1: f64,
        d2: f64,
        max_dist: f64,
        num_hashes: usize,
        mlsh: MlshFamilySpec,
        shared_seed: u64,
    ) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !(d1.is_finite() && d2.is_finite() && d1 >= 1.0 && d1 <= d2) {
            return Err(invalid(format!("need 1 <= D1 <= D2, got D1 = {d1}, D2 = {d2}")));
        }
        if !(max_dist.is_finite() && max_dist > 0.0) {
            return Err(invalid(format!("distance bound must be positive, got {max_dist}")));
        }
        if num_hashes < 3 {
            return Err(invalid("need at least 3 table hash functions"));
        }
        let g = mlsh
            .guarantee()
            .ok_or_else(|| invalid("the EMD protocol needs a multi-scale family"))?;
        let need_r = max_dist.min(d2);
        if g.r < need_r * (1.0 - REL_TOL) {
            return Err(invalid(format!("family radius {} is below min(M, D2) = {need_r}", g.r)));
        }
        let need_p = (-(k as f64) / (24.0 * d2)).exp();
        if g.p < need_p * (1.0 - REL_TOL) {
            return Err(invalid(format!("family p = {} is below exp(-k/(24 D2)) = {need_p}", g.p)));
        }
        let levels = level_count(d1, d2);
        let raw = k as f64 / (8.0 * d1 * (1.0 / g.p).ln());
        if !(raw.is_finite() && raw <= MAX_DRAWS as f64) {
            return Err(ReconError::SizeLimit(format!(
                "parameters need {raw:.3e} hash draws, limit is {MAX_DRAWS}"
            )));
        }
        let draws = ceil_tol(raw).max(1);
        Ok(EmdParams { k, d1, d2, max_dist, num_hashes, mlsh, shared_seed, levels, draws })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }

    pub fn d2(&self) -> f64 {
        self.d2
    }

    pub fn max_dist(&self) -> f64 {
        self.max_dist
    }

    pub fn num_hashes(&self) -> usize {
        self.num_hashes
    }

    pub fn mlsh(&self) -> &MlshFamilySpec {
        &self.mlsh
    }

    pub fn space(&self) -> &GridSpec {
        self.mlsh.space()
    }

    pub fn shared_seed(&self) -> u64 {
        self.shared_seed
    }

    /// Number of tables `t = floor(log2(D2 / D1)) + 1`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Total LSH draws `s = ceil(k / (8 D1 ln(1/p)))`.
    pub fn total_draws(&self) -> usize {
        self.draws
    }

    /// Prefix length keyed at level `i` (1-based): `ceil(2^(i-1) s D1 / D2)`,
    /// at least 1 and at most `s`.
    pub fn level_hash_count(&self, i: usize) -> usize {
        assert!((1..=self.levels).contains(&i), "level {i} outside 1..={}", self.levels);
        let raw = 2f64.powi(i as i32 - 1) * self.draws as f64 * self.d1 / self.d2;
        ceil_tol(raw).clamp(1, self.draws)
    }

    pub fn table_cells(&self) -> usize {
        4 * self.num_hashes * self.num_hashes * self.k
    }
}

fn ceil_tol(x: f64) -> usize {
    (x * (1.0 - REL_TOL)).ceil().max(0.0) as usize
}

fn level_count(d1: f64, d2: f64) -> usize {
    let ratio = d2 / d1 * (1.0 + REL_TOL);
    let mut t = 1;
    while 2f64.powi(t as i32) <= ratio {
        t += 1;
    }
    t
}

/// Parameters with no prior knowledge: `D1 = 1`, `D2 = n d delta`,
/// `M = d delta`, and a family width making `p = exp(-k/(24 D2))` exactly
/// (`w = 48 n d / k` in Hamming space). Only L1 and Hamming spaces.
pub fn default_params(space: &GridSpec, n: usize, k: usize, seed: u64) -> Result<EmdParams> {
    if n == 0 || k == 0 {
        return Err(invalid("default parameters need n >= 1 and k >= 1"));
    }
    let d = space.dim() as f64;
    let delta = space.delta() as f64;
    let d2 = n as f64 * d * delta;
    let m = d * delta;
    let base = 48.0 * d2 / k as f64;
    let (kind, width) = match space.norm() {
        Norm::Hamming => (LshKind::HammingBit, base.max(m.min(d2) / 0.79).max(d)),
        Norm::L1 => (LshKind::GridL1, base.max(m.min(d2) / 0.79)),
        Norm::L2 => {
            return Err(invalid("default parameters cover l1 and hamming; use interval scaling for l2"))
        }
    };
    let mlsh = MlshFamilySpec::new(kind, width, *space)?;
    EmdParams::new(k, 1.0, d2.max(1.0), m, DEFAULT_NUM_HASHES, mlsh, seed)
}

/// Shared-randomness state both parties derive from the parameters.
pub struct EmdKeyer {
    draws: Vec<LshFunction>,
    key_hash: PairwiseHash,
    counts: Vec<usize>,
}

impl EmdKeyer {
    pub fn new(params: &EmdParams) -> Self {
        let lsh_seed = derive_seed(params.shared_seed, stream::LSH_DRAW);
        let draws = (0..params.draws as u64).map(|j| draw_lsh(&params.mlsh, lsh_seed, j)).collect();
        let key_hash = PairwiseHash::with_cache(
            derive_seed(params.shared_seed, stream::KEY_HASH),
            64,
            params.draws,
        )
        .expect("64-bit output is valid");
        let counts = (1..=params.levels).map(|i| params.level_hash_count(i)).collect();
        EmdKeyer { draws, key_hash, counts }
    }

    /// Keys of `p` at every level, evaluating each LSH draw once.
    pub fn keys(&self, p: &Point) -> Vec<u64> {
        let mut keys = Vec::with_capacity(self.counts.len());
        let mut acc = self.key_hash.accumulator();
        let mut next = 0;
        for (j, g) in self.draws.iter().enumerate() {
            acc.push(g.eval_coords(p.coords()));
            while next < self.counts.len() && self.counts[next] == j + 1 {
                keys.push(acc.finish());
                next += 1;
            }
        }
        keys
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

fn level_seed(params: &EmdParams, level: usize) -> u64 {
    derive_path(params.shared_seed, &[stream::TABLE, level as u64])
}

fn fill_tables(params: &EmdParams, set: &PointSet, sign: i64, tables: &mut [RibltTable]) -> Result<()> {
    if set.space() != params.space() {
        return Err(invalid("point set does not live in the protocol's space"));
    }
    let keyer = EmdKeyer::new(params);
    let keys: Vec<Vec<u64>> = set.points().par_iter().map(|p| keyer.keys(p)).collect();
    for (p, ks) in set.points().iter().zip(&keys) {
        for (t, &key) in tables.iter_mut().zip(ks) {
            if sign > 0 {
                t.insert(key, p)?;
            } else {
                t.delete(key, p)?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmdMessage {
    pub k: usize,
    pub num_hashes: usize,
    pub space: GridSpec,
    pub shared_seed: u64,
    pub tables: Vec<RibltTable>,
}

impl EmdMessage {
    pub fn levels(&self) -> usize {
        self.tables.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.u16(MESSAGE_VERSION)
            .u64(self.k as u64)
            .u64(self.num_hashes as u64)
            .u64(self.tables.len() as u64)
            .u64(self.space.dim() as u64)
            .u64(self.space.delta() as u64)
            .u8(self.space.norm().code())
            .u64(self.shared_seed);
        for t in &self.tables {
            w.blob(&t.to_bytes());
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        let version = r.u16()?;
        if version != MESSAGE_VERSION {
            return Err(ReconError::Wire(format!("unsupported message version {version}")));
        }
        let k = r.len_u64(buf.len(), "k")?;
        let num_hashes = r.len_u64(64, "hash count")?;
        let levels = r.len_u64(buf.len(), "level count")?;
        let dim = r.len_u64(buf.len(), "dimension")?;
        let delta = u32::try_from(r.u64()?).map_err(|_| ReconError::Wire("delta too large".into()))?;
        let norm = Norm::from_code(r.u8()?).ok_or_else(|| ReconError::Wire("unknown norm".into()))?;
        let shared_seed = r.u64()?;
        let space = GridSpec::new(delta, dim, norm).map_err(|e| ReconError::Wire(e.to_string()))?;
        let mut tables = Vec::with_capacity(levels);
        for _ in 0..levels {
            let t = RibltTable::from_bytes(r.blob()?, norm)?;
            if t.k() != k || t.q() != num_hashes || t.space() != &space {
                return Err(ReconError::Wire("table shape disagrees with message header".into()));
            }
            tables.push(t);
        }
        r.finish()?;
        Ok(EmdMessage { k, num_hashes, space, shared_seed, tables })
    }

    /// Exact encoded size in bytes.
    pub fn encoded_len(&self) -> usize {
        2 + 5 * 8 + 1 + 8 + self.tables.iter().map(|t| 8 + t.encoded_len()).sum::<usize>()
    }
}

/// Alice's side: one robust table per level holding every point of `s_a`.
pub fn alice_encode(s_a: &PointSet, params: &EmdParams) -> Result<EmdMessage> {
    let mut tables = (1..=params.levels)
        .map(|i| RibltTable::new(params.k, params.num_hashes, *params.space(), level_seed(params, i)))
        .collect::<Result<Vec<_>>>()?;
    fill_tables(params, s_a, 1, &mut tables)?;
    Ok(EmdMessage {
        k: params.k,
        num_hashes: params.num_hashes,
        space: *params.space(),
        shared_seed: params.shared_seed,
        tables,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmdOutcome {
    /// Bob's new point set, same size as his original.
    pub output: PointSet,
    /// 1-based level whose table was used.
    pub level: usize,
    /// Points decoded from Alice's side.
    pub from_alice: Vec<Point>,
    /// Points decoded from Bob's side.
    pub from_bob: Vec<Point>,
}

/// Bob's side. `bob_seed` drives the randomized rounding of averaged values.
pub fn bob_decode(s_b: &PointSet, msg: &EmdMessage, params: &EmdParams, bob_seed: u64) -> Result<EmdOutcome> {
    if msg.k != params.k
        || msg.num_hashes != params.num_hashes
        || msg.tables.len() != params.levels
        || &msg.space != params.space()
        || msg.shared_seed != params.shared_seed
    {
        return Err(ReconError::Protocol("message parameters disagree with Bob's".into()));
    }
    for (i, t) in msg.tables.iter().enumerate() {
        if t.seed() != level_seed(params, i + 1) {
            return Err(ReconError::Protocol(format!("table {} has an unexpected seed", i + 1)));
        }
    }
    let mut tables = msg.tables.clone();
    fill_tables(params, s_b, -1, &mut tables)?;

    let mut rng = ChaCha8Rng::seed_from_u64(bob_seed);
    let k = params.k;
    for level in (1..=params.levels).rev() {
        let Ok(out) = tables[level - 1].decode(4 * k, &mut rng) else {
            continue;
        };
        let (na, nb) = (out.positive.len(), out.negative.len());
        if na != nb || na > 2 * k || nb > s_b.len() {
            continue;
        }
        let from_alice: Vec<Point> = out.positive.into_iter().map(|(_, p)| p).collect();
        let from_bob: Vec<Point> = out.negative.into_iter().map(|(_, p)| p).collect();
        let output = replace_matched(s_b, &from_bob, &from_alice)?;
        return Ok(EmdOutcome { output, level, from_alice, from_bob });
    }
    Err(ReconError::Protocol("no level decoded".into()))
}

/// `(S \ Y) + add`, where `Y` is the min-cost injective image of `remove` in `S`.
fn replace_matched(s: &PointSet, remove: &[Point], add: &[Point]) -> Result<PointSet> {
    let cost = cost_matrix(s.space().norm(), remove, s.points());
    let (assignment, _) = matching::assign(&cost)?;
    let mut taken = vec![false; s.len()];
    for j in assignment {
        taken[j] = true;
    }
    let mut points: Vec<Point> =
        s.points().iter().zip(&taken).filter(|(_, &t)| !t).map(|(p, _)| p.clone()).collect();
    points.extend(add.iter().cloned());
    PointSet::new(*s.space(), points)
}

/// Runs both parties over `transport`: one message from Alice to Bob.
pub fn run_emd_protocol(
    s_a: &PointSet,
    s_b: &PointSet,
    params: &EmdParams,
    bob_seed: u64,
    transport: &mut Transport,
) -> Result<EmdOutcome> {
    if s_a.len() != s_b.len() {
        return Err(invalid("both parties need the same number of points"));
    }
    let msg = alice_encode(s_a, params)?;
    transport.send(Direction::AliceToBob, tags::TABLES, "emd-tables", &msg.to_bytes());
    let received = EmdMessage::from_bytes(&transport.recv(Direction::AliceToBob, tags::TABLES)?)?;
    bob_decode(s_b, &received, params, bob_seed)
}

/// Settings for running the protocol over ratio-2 slices of `[D1, D2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalScaling {
    pub k: usize,
    pub d1: f64,
    pub d2: f64,
    pub max_dist: f64,
    pub num_hashes: usize,
    /// Multiplier on the minimal family width each slice admits.
    pub width_factor: f64,
}

impl IntervalScaling {
    /// `[D1, D2]` split into `max(1, ceil(log2(D2/D1)))` slices of ratio 2,
    /// the last clipped at `D2`.
    pub fn intervals(&self) -> Result<Vec<(f64, f64)>> {
        if !(self.d1 >= 1.0 && self.d1 <= self.d2 && self.d2.is_finite()) {
            return Err(invalid(format!("need 1 <= D1 <= D2, got {} and {}", self.d1, self.d2)));
        }
        let count = ((self.d2 / self.d1).log2() * (1.0 - REL_TOL)).ceil().max(1.0) as usize;
        Ok((0..count)
            .map(|j| {
                let lo = self.d1 * 2f64.powi(j as i32);
                (lo, (2.0 * lo).min(self.d2))
            })
            .collect())
    }

    /// Protocol parameters for one slice. The width is the smallest one
    /// meeting both the radius and the `p` constraint, times `width_factor`.
    pub fn slice_params(&self, space: &GridSpec, lo: f64, hi: f64, seed: u64) -> Result<EmdParams> {
        if !(self.width_factor.is_finite() && self.width_factor >= 1.0) {
            return Err(invalid("width factor must be at least 1"));
        }
        let near = self.max_dist.min(hi);
        let k = self.k as f64;
        let (kind, width) = match space.norm() {
            Norm::L2 => (LshKind::PstableL2, (near / 0.99).max(48.0 * (2.0 / std::f64::consts::PI).sqrt() * hi / k)),
            Norm::L1 => (LshKind::GridL1, (near / 0.79).max(48.0 * hi / k)),
            Norm::Hamming => {
                (LshKind::HammingBit, (near / 0.79).max(48.0 * hi / k).max(space.dim() as f64))
            }
        };
        let mlsh = MlshFamilySpec::new(kind, width * self.width_factor, *space)?;
        EmdParams::new(self.k, lo, hi, self.max_dist, self.num_hashes, mlsh, seed)
    }

    pub fn all_params(&self, space: &GridSpec, seed: u64) -> Result<Vec<EmdParams>> {
        self.intervals()?
            .into_iter()
            .enumerate()
            .map(|(j, (lo, hi))| {
                self.slice_params(space, lo, hi, derive_path(seed, &[stream::INTERVAL, j as u64]))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalOutcome {
    pub outcome: EmdOutcome,
    /// 0-based slice whose output Bob adopted.
    pub interval: usize,
    pub intervals: usize,
}

/// Runs the protocol once per slice (all messages sent together) and keeps
/// the output of the lowest slice that did not fail.
pub fn run_interval_scaling(
    s_a: &PointSet,
    s_b: &PointSet,
    cfg: &IntervalScaling,
    seed: u64,
    bob_seed: u64,
    transport: &mut Transport,
) -> Result<IntervalOutcome> {
    let space = *s_a.space();
    let all = cfg.all_params(&space, seed)?;
    for params in &all {
        let msg = alice_encode(s_a, params)?;
        transport.send(Direction::AliceToBob, tags::TABLES, "emd-interval", &msg.to_bytes());
    }
    let mut chosen = None;
    for (j, params) in all.iter().enumerate() {
        let msg = EmdMessage::from_bytes(&transport.recv(Direction::AliceToBob, tags::TABLES)?)?;
        if chosen.is_some() {
            continue;
        }
        if let Ok(outcome) = bob_decode(s_b, &msg, params, derive_seed(bob_seed, j as u64)) {
            chosen = Some((j, outcome));
        }
    }
    chosen
        .map(|(interval, outcome)| IntervalOutcome { outcome, interval, intervals: all.len() })
        .ok_or_else(|| ReconError::Protocol("every interval failed".into()))
}

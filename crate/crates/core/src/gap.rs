//! Gap-guarantee reconciliation.
//!
//! Every point gets a key of `h` entries, each a pairwise hash of a batch of
//! `m_b` LSH values. Alice learns Bob's keys (three rounds: signature table,
//! request, verbatim keys), flags her points whose keys are far from every
//! key of Bob's, and sends those points (fourth round).

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::error::{invalid, ReconError, Result};
use crate::geometry::{GridSpec, Norm, Point, PointSet};
use crate::hashing::lsh::{draw_lsh, pstable_collision_probability, LshFunction, LshKind, MlshFamilySpec};
use crate::hashing::mix::{derive_path, derive_seed, hash_words, mix64, stream};
use crate::hashing::pairwise::PairwiseHash;
use crate::iblt::{iblt_cells_for, Iblt, MAX_DOUBLINGS};
use crate::transport::{Direction, Transport};
use crate::wire::{BitReader, BitWriter, ByteReader, ByteWriter};

pub const DEFAULT_KEY_CONSTANT: f64 = 12.0;
pub const DEFAULT_NUM_HASHES: usize = 3;

pub mod tags {
    pub const SIGNATURES: u8 = 0x31;
    pub const REQUEST: u8 = 0x32;
    pub const KEYS: u8 = 0x33;
    pub const ELEMENTS: u8 = 0x34;
}

const STATUS_OK: u8 = 0;
const STATUS_RETRY: u8 = 1;

/// Collision probabilities of a family at the two radii: at least `p1` for
/// pairs within `r1`, at most `p2` for pairs at `r2` or beyond.
pub fn analytic_collision_bounds(family: &MlshFamilySpec, r1: f64, r2: f64) -> (f64, f64) {
    let w = family.width();
    match family.kind() {
        LshKind::HammingBit => {
            let w = w.ceil();
            ((1.0 - r1 / w).max(0.0), (1.0 - r2 / w).max(0.0))
        }
        LshKind::GridL1 => ((1.0 - r1 / w).max(0.0), (-r2 / w).exp()),
        LshKind::PstableL2 => (pstable_collision_probability(r1, w), pstable_collision_probability(r2, w)),
        LshKind::OnesidedGrid => {
            let d = family.space().dim() as f64;
            let reach = family.onesided_diameter().unwrap_or(r2);
            ((1.0 - r1 * d / reach).max(0.0), 0.0)
        }
    }
}

/// How Alice decides a key of hers is far from all of Bob's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FarRule {
    /// Close iff some Bob key agrees in at least this many positions.
    Threshold(f64),
    /// Close iff some Bob key agrees in at least one position.
    AnyMatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapParams {
    r1: f64,
    r2: f64,
    epsilon: Option<f64>,
    family: MlshFamilySpec,
    p1: f64,
    p2: f64,
    batch: usize,
    key_len: usize,
    entry_bits: u32,
    rule: FarRule,
    num_hashes: usize,
    shared_seed: u64,
}

fn log2_ceil(n: usize) -> u32 {
    n.max(1).next_power_of_two().trailing_zeros()
}

impl GapParams {
    /// Generic protocol. Needs `p2 >= 1/2` and `rho = ln p1 / ln p2 <= 1 - epsilon`.
    /// Keys have `h = ceil(key_constant ln n)` entries of `2 ceil(log2 n) + 16` bits.
    pub fn new(
        r1: f64,
        r2: f64,
        epsilon: f64,
        family: MlshFamilySpec,
        n: usize,
        key_constant: f64,
        shared_seed: u64,
    ) -> Result<Self> {
        check_radii(r1, r2)?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(format!("epsilon must be in (0, 1), got {epsilon}")));
        }
        if family.kind() == LshKind::OnesidedGrid {
            return Err(invalid("use the low-dimension constructor for the one-sided grid"));
        }
        let (p1, p2) = analytic_collision_bounds(&family, r1, r2);
        if p2 < 0.5 {
            return Err(invalid(format!("far collision probability {p2:.4} is below 1/2")));
        }
        if !(p1 > p2 && p2 < 1.0) {
            return Err(invalid(format!("family does not separate the radii (p1 = {p1}, p2 = {p2})")));
        }
        let rho = p1.ln() / p2.ln();
        if rho > 1.0 - epsilon {
            return Err(invalid(format!("rho = {rho:.4} exceeds 1 - epsilon = {}", 1.0 - epsilon)));
        }
        let batch = ((0.5f64).ln() / p2.ln()).ceil().max(1.0) as usize;
        let key_len = key_length(key_constant, n, 1.0)?;
        Ok(GapParams {
            r1,
            r2,
            epsilon: Some(epsilon),
            family,
            p1,
            p2,
            batch,
            key_len,
            entry_bits: (2 * log2_ceil(n) + 16).min(64),
            rule: FarRule::Threshold(key_len as f64 * (0.5 + epsilon / 6.0)),
            num_hashes: DEFAULT_NUM_HASHES,
            shared_seed,
        })
    }

    /// Low-dimension protocol on a one-sided grid with cells of diameter `r2`:
    /// batches of one value, `h = ceil(key_constant ln n / ln(1/rho_hat))`
    /// with `rho_hat = r1 d / r2` (falling back to `ceil(key_constant ln n)`
    /// when `rho_hat >= 1`), and a point is far iff none of its entries
    /// matches any Bob key. Entries are full 64-bit cell hashes.
    pub fn lowd(space: GridSpec, r1: f64, r2: f64, n: usize, key_constant: f64, shared_seed: u64) -> Result<Self> {
        check_radii(r1, r2)?;
        let family = MlshFamilySpec::onesided(space, r2)?;
        let (p1, p2) = analytic_collision_bounds(&family, r1, r2);
        let rho_hat = r1 * space.dim() as f64 / r2;
        let divisor = if rho_hat < 1.0 { (1.0 / rho_hat).ln() } else { 1.0 };
        let key_len = key_length(key_constant, n, divisor)?;
        Ok(GapParams {
            r1,
            r2,
            epsilon: None,
            family,
            p1,
            p2,
            batch: 1,
            key_len,
            entry_bits: 64,
            rule: FarRule::AnyMatch,
            num_hashes: DEFAULT_NUM_HASHES,
            shared_seed,
        })
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn family(&self) -> &MlshFamilySpec {
        &self.family
    }

    pub fn space(&self) -> &GridSpec {
        self.family.space()
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    pub fn rho(&self) -> f64 {
        if self.p2 == 0.0 {
            0.0
        } else {
            self.p1.ln() / self.p2.ln()
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn key_len(&self) -> usize {
        self.key_len
    }

    pub fn entry_bits(&self) -> u32 {
        self.entry_bits
    }

    pub fn rule(&self) -> FarRule {
        self.rule
    }

    pub fn shared_seed(&self) -> u64 {
        self.shared_seed
    }

    pub fn num_hashes(&self) -> usize {
        self.num_hashes
    }

    /// Smallest positional match count that makes two keys close.
    pub fn match_threshold(&self) -> f64 {
        match self.rule {
            FarRule::Threshold(t) => t,
            FarRule::AnyMatch => 1.0,
        }
    }

    pub fn with_num_hashes(mut self, q: usize) -> Result<Self> {
        if q < 3 {
            return Err(invalid("need at least 3 table hash functions"));
        }
        self.num_hashes = q;
        Ok(self)
    }

    pub fn with_entry_bits(mut self, bits: u32) -> Result<Self> {
        if !(1..=64).contains(&bits) {
            return Err(invalid("entry width must be in [1, 64]"));
        }
        self.entry_bits = bits;
        Ok(self)
    }

    /// Expected count of close keys that differ, plus the far budget.
    pub fn signature_diff_hint(&self, n: usize, k_hint: usize) -> usize {
        let differ = 1.0 - self.p1.powi((self.batch * self.key_len) as i32);
        (k_hint + (n as f64 * differ).ceil() as usize).max(1)
    }

    pub fn element_bits(&self) -> u64 {
        let s = self.space();
        s.dim() as u64 * s.coord_bits() as u64
    }
}

fn check_radii(r1: f64, r2: f64) -> Result<()> {
    if !(r1 > 0.0 && r1 < r2 && r2.is_finite()) {
        return Err(invalid(format!("need 0 < r1 < r2, got r1 = {r1}, r2 = {r2}")));
    }
    Ok(())
}

fn key_length(constant: f64, n: usize, divisor: f64) -> Result<usize> {
    if !(constant.is_finite() && constant > 0.0) {
        return Err(invalid(format!("key constant must be positive, got {constant}")));
    }
    let ln_n = (n.max(2) as f64).ln();
    Ok((constant * ln_n / divisor).ceil().max(1.0) as usize)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GapKey {
    pub entries: Vec<u64>,
    pub signature: u64,
}

impl GapKey {
    pub fn matches(&self, other: &GapKey) -> usize {
        self.entries.iter().zip(&other.entries).filter(|(a, b)| a == b).count()
    }
}

struct GapKeyer {
    draws: Vec<LshFunction>,
    entry_hashes: Vec<PairwiseHash>,
    batch: usize,
    sig_seed: u64,
}

impl GapKeyer {
    fn new(params: &GapParams) -> Self {
        let lsh_seed = derive_seed(params.shared_seed, stream::LSH_DRAW);
        let total = (params.key_len * params.batch) as u64;
        let draws = (0..total).map(|j| draw_lsh(&params.family, lsh_seed, j)).collect();
        let entry_seed = derive_seed(params.shared_seed, stream::GAP_ENTRY);
        let entry_hashes = (0..params.key_len as u64)
            .map(|j| {
                PairwiseHash::with_cache(derive_seed(entry_seed, j), params.entry_bits, params.batch)
                    .expect("entry width validated")
            })
            .collect();
        GapKeyer { draws, entry_hashes, batch: params.batch, sig_seed: derive_seed(params.shared_seed, stream::SIGNATURE) }
    }

    fn key(&self, p: &Point) -> GapKey {
        let mut vals = vec![0u64; self.batch];
        let entries: Vec<u64> = self
            .entry_hashes
            .iter()
            .enumerate()
            .map(|(j, ph)| {
                for (b, v) in vals.iter_mut().enumerate() {
                    *v = self.draws[j * self.batch + b].eval_coords(p.coords());
                }
                ph.hash(&vals)
            })
            .collect();
        let signature = hash_words(self.sig_seed, entries.iter().copied());
        GapKey { entries, signature }
    }
}

/// One key per point, aligned with `set`'s order.
pub fn build_keys(set: &PointSet, params: &GapParams) -> Result<Vec<GapKey>> {
    if set.space() != params.space() {
        return Err(invalid("point set does not live in the protocol's space"));
    }
    let keyer = GapKeyer::new(params);
    Ok(set.points().par_iter().map(|p| keyer.key(p)).collect())
}

/// Gives each copy of a repeated signature its own id, so multisets of
/// signatures become sets and an XOR table recovers multiplicity differences.
fn occurrence_ids(keys: &[GapKey]) -> Vec<u64> {
    let mut seen: HashMap<u64, u64> = HashMap::new();
    keys.iter()
        .map(|k| {
            let n = seen.entry(k.signature).or_insert(0);
            let id = mix64(k.signature ^ mix64(*n));
            *n += 1;
            id
        })
        .collect()
}

fn pack_keys(keys: &[&GapKey], entry_bits: u32) -> Vec<u8> {
    let mut bits = BitWriter::new();
    for k in keys {
        for &e in &k.entries {
            bits.put(e, entry_bits);
        }
    }
    let mut w = ByteWriter::new();
    w.u64(keys.len() as u64).bytes(&bits.finish());
    w.finish()
}

fn unpack_keys(buf: &[u8], params: &GapParams) -> Result<Vec<GapKey>> {
    let mut r = ByteReader::new(buf);
    let count = r.len_u64(buf.len() * 8, "key count")?;
    let body = r.bytes(r.remaining())?;
    let mut bits = BitReader::new(body);
    let sig_seed = derive_seed(params.shared_seed, stream::SIGNATURE);
    (0..count)
        .map(|_| {
            let entries = (0..params.key_len)
                .map(|_| bits.get(params.entry_bits))
                .collect::<Result<Vec<u64>>>()?;
            let signature = hash_words(sig_seed, entries.iter().copied());
            Ok(GapKey { entries, signature })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyMultisetRecon {
    /// Alice's reconstruction of Bob's keys (as a multiset, unordered).
    pub bob_keys: Vec<GapKey>,
    pub retries: u32,
    /// Number of keys Bob sent verbatim.
    pub requested: usize,
}

/// Rounds 1-3: Bob sends a table of signature ids, Alice replies with the ids
/// she lacks (or a retry request), Bob sends those keys verbatim.
pub fn reconcile_key_multisets(
    alice_keys: &[GapKey],
    bob_keys: &[GapKey],
    diff_hint: usize,
    params: &GapParams,
    transport: &mut Transport,
) -> Result<KeyMultisetRecon> {
    let q = params.num_hashes;
    let alice_ids = occurrence_ids(alice_keys);
    let bob_ids = occurrence_ids(bob_keys);
    let table_seed = derive_path(params.shared_seed, &[stream::TABLE]);
    let mut m = iblt_cells_for(diff_hint.max(1), q);
    let mut attempt = 0u32;

    let requested = loop {
        // Round 1, Bob.
        let mut t = Iblt::new(m, q, derive_seed(table_seed, attempt as u64))?;
        for &id in &bob_ids {
            t.insert(id);
        }
        transport.send(Direction::BobToAlice, tags::SIGNATURES, "signatures", &t.to_bytes());

        // Round 2, Alice.
        let mut t = Iblt::from_bytes(&transport.recv(Direction::BobToAlice, tags::SIGNATURES)?)?;
        for &id in &alice_ids {
            t.delete(id);
        }
        let mut w = ByteWriter::new();
        match t.decode() {
            Ok(diff) => {
                w.u8(STATUS_OK).u64(diff.inserted_only.len() as u64);
                for &id in &diff.inserted_only {
                    w.u64(id);
                }
                transport.send(Direction::AliceToBob, tags::REQUEST, "request", &w.finish());
            }
            Err(e) => {
                if attempt == MAX_DOUBLINGS {
                    return Err(ReconError::Protocol(format!(
                        "signature reconciliation failed after {MAX_DOUBLINGS} doublings: {e}"
                    )));
                }
                w.u8(STATUS_RETRY).u64(2 * m as u64);
                transport.send(Direction::AliceToBob, tags::REQUEST, "request-retry", &w.finish());
            }
        }

        // Bob reads the reply.
        let reply = transport.recv(Direction::AliceToBob, tags::REQUEST)?;
        let mut r = ByteReader::new(&reply);
        match r.u8()? {
            STATUS_OK => {
                let count = r.len_u64(reply.len() / 8, "request count")?;
                let ids = (0..count).map(|_| r.u64()).collect::<Result<Vec<u64>>>()?;
                r.finish()?;
                break ids;
            }
            STATUS_RETRY => {
                let next = r.len_u64(usize::MAX, "table size")?;
                r.finish()?;
                m = next;
                attempt += 1;
            }
            s => return Err(ReconError::Wire(format!("unknown status {s}"))),
        }
    };

    // Round 3, Bob.
    let by_id: HashMap<u64, &GapKey> = bob_ids.iter().copied().zip(bob_keys).collect();
    let wanted = requested
        .iter()
        .map(|id| by_id.get(id).copied().ok_or_else(|| ReconError::Protocol("request names an unknown key".into())))
        .collect::<Result<Vec<&GapKey>>>()?;
    transport.send(Direction::BobToAlice, tags::KEYS, "keys", &pack_keys(&wanted, params.entry_bits));

    // Alice rebuilds Bob's multiset.
    let received = unpack_keys(&transport.recv(Direction::BobToAlice, tags::KEYS)?, params)?;
    // Table ids only Alice holds; the rest of her ids Bob shares.
    let t = {
        let mut t = Iblt::new(m, q, derive_seed(table_seed, attempt as u64))?;
        for &id in &alice_ids {
            t.delete(id);
        }
        for &id in &bob_ids {
            t.insert(id);
        }
        t
    };
    let alice_only: HashSet<u64> = t
        .decode()
        .map_err(|e| ReconError::Protocol(format!("re-decode failed: {e}")))?
        .deleted_only
        .into_iter()
        .collect();
    let mut bob_recon: Vec<GapKey> = alice_ids
        .iter()
        .zip(alice_keys)
        .filter(|(id, _)| !alice_only.contains(id))
        .map(|(_, k)| k.clone())
        .collect();
    let requested = received.len();
    bob_recon.extend(received);
    Ok(KeyMultisetRecon { bob_keys: bob_recon, retries: attempt, requested })
}

/// Indices of Alice keys that are far from every Bob key under `params`'s rule.
pub fn identify_far(alice_keys: &[GapKey], bob_keys: &[GapKey], params: &GapParams) -> Vec<usize> {
    let sigs: HashSet<u64> = bob_keys.iter().map(|k| k.signature).collect();
    let need = match params.rule {
        FarRule::Threshold(t) => t.ceil().max(0.0) as usize,
        FarRule::AnyMatch => 1,
    };
    alice_keys
        .par_iter()
        .enumerate()
        .filter(|(_, a)| {
            if need == 0 || sigs.contains(&a.signature) {
                return false;
            }
            !bob_keys.iter().any(|b| a.matches(b) >= need)
        })
        .map(|(i, _)| i)
        .collect()
}

fn pack_points(points: &[Point], space: &GridSpec) -> Vec<u8> {
    let width = space.coord_bits();
    let mut bits = BitWriter::new();
    for p in points {
        for &c in p.coords() {
            bits.put(c as u64, width);
        }
    }
    let mut w = ByteWriter::new();
    w.u64(points.len() as u64).bytes(&bits.finish());
    w.finish()
}

fn unpack_points(buf: &[u8], space: &GridSpec) -> Result<Vec<Point>> {
    let mut r = ByteReader::new(buf);
    let count = r.len_u64(buf.len() * 8, "element count")?;
    let mut bits = BitReader::new(r.bytes(r.remaining())?);
    (0..count)
        .map(|_| {
            let coords = (0..space.dim())
                .map(|_| bits.get(space.coord_bits()).map(|v| v as u32))
                .collect::<Result<Vec<u32>>>()?;
            let p = Point::new(coords);
            space.check(&p).map_err(|e| ReconError::Wire(e.to_string()))?;
            Ok(p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapOutcome {
    /// Bob's final set, his original points plus Alice's transmitted ones.
    pub output: PointSet,
    /// Alice's transmitted points.
    pub sent: Vec<Point>,
    /// Indices into `s_a` that Alice flagged far.
    pub far_indices: Vec<usize>,
    pub retries: u32,
    pub keys_requested: usize,
}

/// Runs all four rounds. `k_hint` only sizes the first signature table.
pub fn run_gap_protocol(
    s_a: &PointSet,
    s_b: &PointSet,
    params: &GapParams,
    k_hint: usize,
    transport: &mut Transport,
) -> Result<GapOutcome> {
    let alice_keys = build_keys(s_a, params)?;
    let bob_keys = build_keys(s_b, params)?;
    let n = s_a.len().max(s_b.len());
    let recon = reconcile_key_multisets(
        &alice_keys,
        &bob_keys,
        params.signature_diff_hint(n, k_hint),
        params,
        transport,
    )?;

    // Round 4, Alice.
    let far = identify_far(&alice_keys, &recon.bob_keys, params);
    let sent: Vec<Point> = far.iter().map(|&i| s_a.points()[i].clone()).collect();
    transport.send(Direction::AliceToBob, tags::ELEMENTS, "elements", &pack_points(&sent, params.space()));

    let received = unpack_points(&transport.recv(Direction::AliceToBob, tags::ELEMENTS)?, params.space())?;
    let mut points = s_b.points().to_vec();
    points.extend(received);
    Ok(GapOutcome {
        output: PointSet::new(*s_b.space(), points)?,
        sent,
        far_indices: far,
        retries: recon.retries,
        keys_requested: recon.requested,
    })
}

/// Low-dimension variant for L1 or L2 spaces.
#[allow(clippy::too_many_arguments)]
pub fn run_gap_lowd(
    s_a: &PointSet,
    s_b: &PointSet,
    r1: f64,
    r2: f64,
    key_constant: f64,
    k_hint: usize,
    seed: u64,
    transport: &mut Transport,
) -> Result<GapOutcome> {
    if s_a.space().norm() == Norm::Hamming {
        return Err(invalid("the low-dimension variant targets l1 or l2 spaces"));
    }
    let n = s_a.len().max(s_b.len());
    let params = GapParams::lowd(*s_a.space(), r1, r2, n, key_constant, seed)?;
    run_gap_protocol(s_a, s_b, &params, k_hint, transport)
}

/// Bits of a round-4 frame carrying `count` elements.
pub fn element_frame_bits(count: usize, params: &GapParams) -> u64 {
    let body = crate::wire::bytes_for_bits(count as u64 * params.element_bits());
    (crate::transport::FRAME_HEADER_BYTES as u64 + 8 + body) * 8
}

/// Bits of a round-3 frame carrying `count` keys.
pub fn key_frame_bits(count: usize, params: &GapParams) -> u64 {
    let body = crate::wire::bytes_for_bits(count as u64 * params.key_len as u64 * params.entry_bits as u64);
    (crate::transport::FRAME_HEADER_BYTES as u64 + 8 + body) * 8
}

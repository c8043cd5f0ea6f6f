//! XOR-cell invertible Bloom lookup table over 64-bit keys.

use std::collections::VecDeque;

use crate::error::{invalid, DecodeFailure, ReconError, Result};
use crate::hashing::mix::{derive_seed, mix64, stream};
use crate::hashing::pairwise::Checksum;
use crate::transport::{Direction, Transport};
use crate::wire::{ByteReader, ByteWriter};

/// Partitioned cell layout: hash `j` picks one cell in `[j*m/q, (j+1)*m/q)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    part: usize,
    salts: Vec<u64>,
}

impl Layout {
    pub(crate) fn new(m: usize, q: usize, seed: u64) -> Result<Self> {
        if q < 3 {
            return Err(invalid(format!("need at least 3 hash functions, got {q}")));
        }
        if m == 0 || !m.is_multiple_of(q) {
            return Err(invalid(format!("cell count {m} must be a positive multiple of {q}")));
        }
        let base = derive_seed(seed, stream::TABLE);
        Ok(Layout { part: m / q, salts: (0..q as u64).map(|j| derive_seed(base, j)).collect() })
    }

    #[inline]
    pub(crate) fn cells(&self, key: u64) -> impl Iterator<Item = usize> + '_ {
        let part = self.part;
        self.salts.iter().enumerate().map(move |(j, &salt)| {
            let h = mix64(mix64(key ^ salt).wrapping_add(salt));
            j * part + ((h as u128 * part as u128) >> 64) as usize
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IbltCell {
    pub count: i64,
    pub key_xor: u64,
    pub checksum_xor: u64,
}

impl IbltCell {
    pub fn is_zero(&self) -> bool {
        *self == IbltCell::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Iblt {
    seed: u64,
    q: usize,
    cells: Vec<IbltCell>,
    layout: Layout,
    checksum: Checksum,
}

/// Keys present only on the inserting side and only on the deleting side.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IbltDiff {
    pub inserted_only: Vec<u64>,
    pub deleted_only: Vec<u64>,
}

impl IbltDiff {
    pub fn len(&self) -> usize {
        self.inserted_only.len() + self.deleted_only.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub const IBLT_CELL_BYTES: usize = 24;
pub const IBLT_HEADER_BYTES: usize = 24;

impl Iblt {
    pub fn new(m: usize, q: usize, seed: u64) -> Result<Self> {
        Ok(Iblt {
            seed,
            q,
            cells: vec![IbltCell::default(); m],
            layout: Layout::new(m, q, seed)?,
            checksum: Checksum::new(seed),
        })
    }

    pub fn m(&self) -> usize {
        self.cells.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cells(&self) -> &[IbltCell] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(IbltCell::is_zero)
    }

    pub fn insert(&mut self, key: u64) {
        self.update(key, 1);
    }

    pub fn delete(&mut self, key: u64) {
        self.update(key, -1);
    }

    fn update(&mut self, key: u64, sign: i64) {
        let ck = self.checksum.of(key);
        for i in self.layout.cells(key) {
            let c = &mut self.cells[i];
            c.count += sign;
            c.key_xor ^= key;
            c.checksum_xor ^= ck;
        }
    }

    fn is_pure(&self, c: &IbltCell) -> bool {
        (c.count == 1 || c.count == -1) && c.checksum_xor == self.checksum.of(c.key_xor)
    }

    /// Peels the table. Sides are returned sorted.
    pub fn decode(&self) -> std::result::Result<IbltDiff, DecodeFailure> {
        let mut work = self.clone();
        let mut queue: VecDeque<usize> =
            (0..work.m()).filter(|&i| work.is_pure(&work.cells[i])).collect();
        let mut diff = IbltDiff::default();
        // Each genuine peel removes one key; a bound guards against cycling on corrupt input.
        let mut budget = 2 * work.m() + 16;
        while let Some(i) = queue.pop_front() {
            let cell = work.cells[i];
            if !work.is_pure(&cell) {
                continue;
            }
            if budget == 0 {
                break;
            }
            budget -= 1;
            let key = cell.key_xor;
            if cell.count == 1 {
                diff.inserted_only.push(key);
            } else {
                diff.deleted_only.push(key);
            }
            work.update(key, -cell.count);
            for j in work.layout.cells(key).collect::<Vec<_>>() {
                if work.is_pure(&work.cells[j]) {
                    queue.push_back(j);
                }
            }
        }
        let remaining = work.cells.iter().filter(|c| !c.is_zero()).count();
        if remaining > 0 {
            return Err(DecodeFailure::Stall { remaining });
        }
        diff.inserted_only.sort_unstable();
        diff.deleted_only.sort_unstable();
        Ok(diff)
    }

    pub fn encoded_len(&self) -> usize {
        IBLT_HEADER_BYTES + self.m() * IBLT_CELL_BYTES
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_capacity(self.encoded_len());
        w.u64(self.m() as u64).u64(self.q as u64).u64(self.seed);
        for c in &self.cells {
            w.i64(c.count).u64(c.key_xor).u64(c.checksum_xor);
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        let m = r.len_u64(buf.len() / IBLT_CELL_BYTES, "cell count")?;
        let q = r.len_u64(64, "hash count")?;
        let seed = r.u64()?;
        let mut t = Iblt::new(m, q, seed).map_err(|e| ReconError::Wire(e.to_string()))?;
        for c in &mut t.cells {
            *c = IbltCell { count: r.i64()?, key_xor: r.u64()?, checksum_xor: r.u64()? };
        }
        r.finish()?;
        Ok(t)
    }
}

/// Cell count for an expected difference size: six cells per difference,
/// at least `8q`, rounded up to a multiple of `q`.
pub fn iblt_cells_for(diff_hint: usize, q: usize) -> usize {
    let raw = diff_hint.saturating_mul(6).max(8 * q);
    raw.div_ceil(q) * q
}

pub const MAX_DOUBLINGS: u32 = 6;

pub mod tags {
    pub const TABLE: u8 = 0x10;
    pub const RETRY: u8 = 0x11;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyReconciliation {
    /// `inserted_only` = keys only Bob holds, `deleted_only` = keys only Alice holds.
    pub diff: IbltDiff,
    pub retries: u32,
    pub final_cells: usize,
}

/// One-way reconciliation of key multisets (mod 2 multiplicities). Bob sends an
/// IBLT of his keys; Alice deletes hers and peels. On a stall Alice asks for a
/// table twice the size, up to `MAX_DOUBLINGS` times.
pub fn reconcile_key_sets(
    alice: &[u64],
    bob: &[u64],
    diff_hint: usize,
    q: usize,
    seed: u64,
    transport: &mut Transport,
) -> Result<KeyReconciliation> {
    if diff_hint == 0 {
        return Err(invalid("difference hint must be at least 1"));
    }
    let mut m = iblt_cells_for(diff_hint, q);
    for attempt in 0..=MAX_DOUBLINGS {
        let table_seed = derive_seed(seed, attempt as u64);
        let mut t = Iblt::new(m, q, table_seed)?;
        for &k in bob {
            t.insert(k);
        }
        transport.send(Direction::BobToAlice, tags::TABLE, "iblt", &t.to_bytes());

        let mut received = Iblt::from_bytes(&transport.recv(Direction::BobToAlice, tags::TABLE)?)?;
        for &k in alice {
            received.delete(k);
        }
        match received.decode() {
            Ok(diff) => {
                return Ok(KeyReconciliation { diff, retries: attempt, final_cells: m });
            }
            Err(_) if attempt < MAX_DOUBLINGS => {
                m *= 2;
                let mut w = ByteWriter::new();
                w.u64(m as u64);
                transport.send(Direction::AliceToBob, tags::RETRY, "iblt-retry", &w.finish());
                transport.recv(Direction::AliceToBob, tags::RETRY)?;
            }
            Err(e) => {
                return Err(ReconError::Protocol(format!(
                    "key reconciliation failed after {MAX_DOUBLINGS} doublings: {e}"
                )));
            }
        }
    }
    unreachable!("loop returns on the last attempt")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn insert_delete_inverse() {
        let mut t = Iblt::new(30, 3, 1).unwrap();
        t.insert(77);
        assert_eq!(t.cells().iter().filter(|c| c.count == 1).count(), 3);
        t.delete(77);
        assert!(t.is_empty());
        t.delete(5);
        assert_eq!(t.cells().iter().filter(|c| c.count == -1).count(), 3);
    }

    #[test]
    fn layout_distinct_partitions() {
        let l = Layout::new(12, 3, 9).unwrap();
        for key in 0..1000u64 {
            let cells: Vec<usize> = l.cells(key).collect();
            for (j, &c) in cells.iter().enumerate() {
                assert!(c >= 4 * j && c < 4 * (j + 1));
            }
        }
    }

    #[test]
    fn rejects_bad_shape() {
        assert!(Iblt::new(10, 3, 0).is_err());
        assert!(Iblt::new(10, 2, 0).is_err());
        assert!(Iblt::new(0, 3, 0).is_err());
    }

    #[test]
    fn small_symmetric_difference() {
        let mut t = Iblt::new(30, 3, 4).unwrap();
        for k in [1, 2, 3] {
            t.insert(k);
        }
        for k in [2, 3, 4] {
            t.delete(k);
        }
        let d = t.decode().unwrap();
        assert_eq!(d.inserted_only, vec![1]);
        assert_eq!(d.deleted_only, vec![4]);
        assert_eq!(Iblt::new(30, 3, 4).unwrap().decode().unwrap(), IbltDiff::default());
    }

    #[test]
    fn overloaded_table_stalls() {
        let mut t = Iblt::new(9, 3, 4).unwrap();
        for k in 0..50 {
            t.insert(k);
        }
        assert!(matches!(t.decode(), Err(DecodeFailure::Stall { .. })));
    }

    #[test]
    fn wire_round_trip() {
        let mut t = Iblt::new(24, 3, 8).unwrap();
        t.insert(5);
        t.delete(6);
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), t.encoded_len());
        assert_eq!(Iblt::from_bytes(&bytes).unwrap(), t);
        assert!(Iblt::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn sizing_rule() {
        assert_eq!(iblt_cells_for(1, 3), 24);
        assert_eq!(iblt_cells_for(20, 3), 120);
        assert_eq!(iblt_cells_for(20, 7), 126);
    }

    #[test]
    fn reconcile_equal_sets() {
        let keys: Vec<u64> = (0..100).collect();
        let mut tr = Transport::new();
        let r = reconcile_key_sets(&keys, &keys, 5, 3, 1, &mut tr).unwrap();
        assert!(r.diff.is_empty());
        assert_eq!(r.retries, 0);
        assert_eq!(tr.transcript().rounds().len(), 1);
    }

    #[test]
    fn reconcile_grows_table_geometrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alice: Vec<u64> = (0..100).map(|_| rng.random()).collect();
        let mut tr = Transport::new();
        let r = reconcile_key_sets(&alice, &[], 1, 3, 2, &mut tr).unwrap();
        assert_eq!(r.diff.deleted_only.len(), 100);
        assert!(r.retries >= 1);
        let sizes: Vec<u64> = tr
            .transcript()
            .rounds()
            .iter()
            .filter(|x| x.label == "iblt")
            .map(|x| x.bits)
            .collect();
        for w in sizes.windows(2) {
            let cells = |b: u64| (b / 8 - 9 - IBLT_HEADER_BYTES as u64) / IBLT_CELL_BYTES as u64;
            assert_eq!(cells(w[1]), 2 * cells(w[0]));
        }
    }

    proptest! {
        #[test]
        fn interleavings_cancel(keys in prop::collection::vec(any::<u64>(), 0..40), seed in any::<u64>()) {
            let mut t = Iblt::new(60, 3, seed).unwrap();
            for &k in &keys { t.insert(k); }
            for &k in keys.iter().rev() { t.delete(k); }
            prop_assert!(t.is_empty());
        }
    }
}

//! Robust IBLT: sum-based cells that tolerate repeated keys carrying
//! different values. A cell holding `C` copies of one key peels into `C`
//! pairs whose values are the clamped, randomly rounded average.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{invalid, DecodeFailure, ReconError, Result};
use crate::geometry::{GridSpec, Norm, Point};
use crate::hashing::pairwise::Checksum;
use crate::iblt::Layout;
use crate::wire::{ByteReader, ByteWriter};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RibltCell {
    pub count: i64,
    pub key_sum: i128,
    pub value_sum: Vec<i64>,
    pub checksum_sum: i128,
}

impl RibltCell {
    fn zero(d: usize) -> Self {
        RibltCell { count: 0, key_sum: 0, value_sum: vec![0; d], checksum_sum: 0 }
    }

    /// Count, key and checksum are all zero. Value residue may remain.
    pub fn is_key_free(&self) -> bool {
        self.count == 0 && self.key_sum == 0 && self.checksum_sum == 0
    }

    pub fn is_zero(&self) -> bool {
        self.is_key_free() && self.value_sum.iter().all(|&v| v == 0)
    }
}

/// Peel test: `C` copies of a single key. Requires `C != 0`, exact division of
/// the key and checksum sums, a key in 64-bit range, and a matching checksum.
/// Value sums need not divide; differing values are averaged on extraction.
pub fn riblt_peelable(cell: &RibltCell, checksum: &Checksum) -> Option<u64> {
    let c = cell.count as i128;
    if c == 0 || cell.key_sum % c != 0 || cell.checksum_sum % c != 0 {
        return None;
    }
    let key = u64::try_from(cell.key_sum / c).ok()?;
    (checksum.of(key) as i128 * c == cell.checksum_sum).then_some(key)
}

/// Most insert/delete operations a table accepts.
pub const MAX_OPERATIONS: u64 = 1 << 40;

#[derive(Debug, Clone)]
pub struct RibltTable {
    k: usize,
    q: usize,
    space: GridSpec,
    seed: u64,
    cells: Vec<RibltCell>,
    operations: u64,
    layout: Layout,
    checksum: Checksum,
}

/// Tables are equal when their shape, seed and cell contents agree.
impl PartialEq for RibltTable {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k
            && self.q == other.q
            && self.space == other.space
            && self.seed == other.seed
            && self.cells == other.cells
    }
}

impl Eq for RibltTable {}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RibltDecoded {
    /// Pairs with net positive count (the inserting side), in extraction order.
    pub positive: Vec<(u64, Point)>,
    /// Pairs with net negative count (the deleting side), in extraction order.
    pub negative: Vec<(u64, Point)>,
    /// Cells left holding only value residue after peeling.
    pub residue_cells: usize,
}

impl RibltDecoded {
    pub fn num_pairs(&self) -> usize {
        self.positive.len() + self.negative.len()
    }
}

pub const RIBLT_HEADER_BYTES: usize = 48;

pub fn riblt_cell_bytes(dim: usize) -> usize {
    8 + 16 + 16 + 8 * dim
}

impl RibltTable {
    /// Table sized for `k` differences: `m = 4 q^2 k` cells.
    pub fn new(k: usize, q: usize, space: GridSpec, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(invalid("robust table needs k >= 1"));
        }
        let m = q
            .checked_mul(q)
            .and_then(|x| x.checked_mul(4))
            .and_then(|x| x.checked_mul(k))
            .ok_or_else(|| invalid("table size overflows"))?;
        Ok(RibltTable {
            k,
            q,
            space,
            seed,
            cells: vec![RibltCell::zero(space.dim()); m],
            operations: 0,
            layout: Layout::new(m, q, seed)?,
            checksum: Checksum::new(seed),
        })
    }

    pub fn m(&self) -> usize {
        self.cells.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn space(&self) -> &GridSpec {
        &self.space
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cells(&self) -> &[RibltCell] {
        &self.cells
    }

    pub fn checksum(&self) -> &Checksum {
        &self.checksum
    }

    /// Cell indices on `key`'s path.
    pub fn path(&self, key: u64) -> Vec<usize> {
        self.layout.cells(key).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(RibltCell::is_zero)
    }

    pub fn insert(&mut self, key: u64, value: &Point) -> Result<()> {
        self.update(key, value, 1)
    }

    pub fn delete(&mut self, key: u64, value: &Point) -> Result<()> {
        self.update(key, value, -1)
    }

    fn update(&mut self, key: u64, value: &Point, sign: i64) -> Result<()> {
        self.space.check(value)?;
        let ops = self.operations + 1;
        if ops > MAX_OPERATIONS || (ops as u128) * (self.space.delta() as u128) > i64::MAX as u128 {
            return Err(ReconError::SizeLimit(format!(
                "robust table accepts at most {MAX_OPERATIONS} operations within 64-bit value sums"
            )));
        }
        self.operations = ops;
        self.apply(key, value.coords(), sign);
        Ok(())
    }

    fn apply(&mut self, key: u64, value: &[u32], sign: i64) {
        let ck = self.checksum.of(key) as i128;
        let s = sign as i128;
        for i in self.layout.cells(key) {
            let c = &mut self.cells[i];
            c.count += sign;
            c.key_sum += s * key as i128;
            c.checksum_sum += s * ck;
            for (acc, &v) in c.value_sum.iter_mut().zip(value) {
                *acc += sign * v as i64;
            }
        }
    }

    /// Subtracts a whole cell's contents from every cell on `key`'s path.
    fn remove_cell(&mut self, key: u64, cell: &RibltCell) {
        for i in self.layout.cells(key) {
            let c = &mut self.cells[i];
            c.count -= cell.count;
            c.key_sum -= cell.key_sum;
            c.checksum_sum -= cell.checksum_sum;
            for (acc, &v) in c.value_sum.iter_mut().zip(&cell.value_sum) {
                *acc -= v;
            }
        }
    }

    /// Breadth-first peeling. Cells that are peelable at the start are queued
    /// in ascending index order; afterwards cells are queued as they become
    /// peelable and processed strictly first-come first-served.
    ///
    /// Succeeds when every cell's count, key sum and checksum sum reach zero.
    /// Leftover value sums are noise that did not cancel and are reported in
    /// `residue_cells`.
    pub fn decode<R: Rng + ?Sized>(
        &self,
        max_pairs: usize,
        rng: &mut R,
    ) -> std::result::Result<RibltDecoded, DecodeFailure> {
        let mut work = self.clone();
        let delta = self.space.delta() as f64;
        let mut queue: VecDeque<usize> = (0..work.m())
            .filter(|&i| riblt_peelable(&work.cells[i], &work.checksum).is_some())
            .collect();
        let mut out = RibltDecoded::default();
        let mut budget = 4 * work.m() + 16;
        while let Some(i) = queue.pop_front() {
            let Some(key) = riblt_peelable(&work.cells[i], &work.checksum) else {
                continue;
            };
            if budget == 0 {
                break;
            }
            budget -= 1;
            let cell = work.cells[i].clone();
            let copies = cell.count.unsigned_abs() as usize;
            if out.num_pairs() + copies > max_pairs {
                return Err(DecodeFailure::Overflow { max_pairs });
            }
            let side = if cell.count > 0 { &mut out.positive } else { &mut out.negative };
            let c = cell.count as f64;
            for _ in 0..copies {
                let coords = cell
                    .value_sum
                    .iter()
                    .map(|&v| round_randomly((v as f64 / c).clamp(0.0, delta), rng))
                    .collect();
                side.push((key, Point::new(coords)));
            }
            work.remove_cell(key, &cell);
            for j in work.layout.cells(key) {
                if riblt_peelable(&work.cells[j], &work.checksum).is_some() {
                    queue.push_back(j);
                }
            }
        }
        let remaining = work.cells.iter().filter(|c| !c.is_key_free()).count();
        if remaining > 0 {
            return Err(DecodeFailure::Stall { remaining });
        }
        out.residue_cells = work.cells.iter().filter(|c| !c.is_zero()).count();
        Ok(out)
    }

    pub fn encoded_len(&self) -> usize {
        RIBLT_HEADER_BYTES + self.m() * riblt_cell_bytes(self.space.dim())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_capacity(self.encoded_len());
        w.u64(self.m() as u64)
            .u64(self.q as u64)
            .u64(self.k as u64)
            .u64(self.space.dim() as u64)
            .u64(self.space.delta() as u64)
            .u64(self.seed);
        for c in &self.cells {
            w.i64(c.count).i128(c.key_sum).i128(c.checksum_sum);
            for &v in &c.value_sum {
                w.i64(v);
            }
        }
        w.finish()
    }

    /// Parses a serialized table; the norm is not part of the table encoding.
    pub fn from_bytes(buf: &[u8], norm: Norm) -> Result<Self> {
        let wire = |e: ReconError| ReconError::Wire(e.to_string());
        let mut r = ByteReader::new(buf);
        let m = r.len_u64(buf.len(), "cell count")?;
        let q = r.len_u64(64, "hash count")?;
        let k = r.len_u64(buf.len(), "k")?;
        let d = r.len_u64(buf.len(), "dimension")?;
        let delta = u32::try_from(r.u64()?).map_err(|_| ReconError::Wire("delta too large".into()))?;
        let seed = r.u64()?;
        let space = GridSpec::new(delta, d, norm).map_err(wire)?;
        let mut t = RibltTable::new(k, q, space, seed).map_err(wire)?;
        if t.m() != m {
            return Err(ReconError::Wire(format!("cell count {m} does not equal 4 q^2 k = {}", t.m())));
        }
        if r.remaining() != m * riblt_cell_bytes(d) {
            return Err(ReconError::Wire("table body has the wrong length".into()));
        }
        for c in &mut t.cells {
            c.count = r.i64()?;
            c.key_sum = r.i128()?;
            c.checksum_sum = r.i128()?;
            for v in &mut c.value_sum {
                *v = r.i64()?;
            }
        }
        r.finish()?;
        Ok(t)
    }
}

/// Rounds up with probability equal to the fractional part.
fn round_randomly<R: Rng + ?Sized>(x: f64, rng: &mut R) -> u32 {
    let floor = x.floor();
    let frac = x - floor;
    let up = frac > 0.0 && rng.random::<f64>() < frac;
    floor as u32 + up as u32
}

//! Hash functions: per-row column hashes for the Count-Min matrix and the
//! key-to-partition map.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Maps `(row, key)` to a column of an `rows x cols` counter matrix.
pub trait ColumnHash: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn column(&self, row: usize, key: u64) -> usize;
}

/// Pairwise-independent multiply-add-shift family, one function per row.
///
/// `h(x) = ((a*x + b) mod 2^128) >> 64` with 128-bit `a, b` is strongly
/// universal over 64-bit keys; the column is that value reduced modulo `cols`.
#[derive(Clone, Debug)]
pub struct MultiplyShift {
    cols: usize,
    params: Vec<(u128, u128)>,
}

impl MultiplyShift {
    pub fn new(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..rows)
            .map(|_| (rng.gen::<u128>() | 1, rng.gen::<u128>()))
            .collect();
        Self { cols, params }
    }

    #[inline]
    fn raw(&self, row: usize, key: u64) -> u64 {
        let (a, b) = self.params[row];
        (a.wrapping_mul(key as u128).wrapping_add(b) >> 64) as u64
    }
}

impl ColumnHash for MultiplyShift {
    fn rows(&self) -> usize {
        self.params.len()
    }

    fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    fn column(&self, row: usize, key: u64) -> usize {
        (self.raw(row, key) % self.cols as u64) as usize
    }
}

/// Explicit key placement, for hand-built examples where collisions must land
/// in specific cells. Unlisted keys fall into column 0.
#[derive(Clone, Debug, Default)]
pub struct FixedPlacement {
    rows: usize,
    cols: usize,
    cells: HashMap<(usize, u64), usize>,
}

impl FixedPlacement {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, cells: HashMap::new() }
    }

    /// Places `key` in column `col` of `row`.
    pub fn place(mut self, row: usize, key: u64, col: usize) -> Self {
        assert!(row < self.rows && col < self.cols, "cell ({row}, {col}) outside matrix");
        self.cells.insert((row, key), col);
        self
    }

    /// Places `key` in one column per row, `cols[row]`.
    pub fn place_all(mut self, key: u64, cols: &[usize]) -> Self {
        assert_eq!(cols.len(), self.rows);
        for (row, &col) in cols.iter().enumerate() {
            self = self.place(row, key, col);
        }
        self
    }
}

impl ColumnHash for FixedPlacement {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn column(&self, row: usize, key: u64) -> usize {
        self.cells.get(&(row, key)).copied().unwrap_or(0)
    }
}

/// 64-bit finalizer from MurmurHash3.
#[inline]
pub fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

/// Key-to-partition ownership map.
///
/// Uses a seeded mix hash that shares nothing with [`MultiplyShift`], so the
/// keys landing in one partition are not correlated with CMS columns.
#[derive(Clone, Copy, Debug)]
pub struct Partitioner {
    partitions: usize,
    salt: u64,
}

impl Partitioner {
    pub fn new(partitions: usize, seed: u64) -> Self {
        assert!(partitions >= 1);
        Self { partitions, salt: fmix64(seed ^ 0x9e37_79b9_7f4a_7c15) }
    }

    pub fn partitions(&self) -> usize {
        self.partitions
    }

    #[inline]
    pub fn owner(&self, key: u64) -> usize {
        if self.partitions == 1 {
            return 0;
        }
        (fmix64(key ^ self.salt) % self.partitions as u64) as usize
    }
}

/// Derives an independent seed for sub-structure `index` of a structure seeded
/// with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    fmix64(seed.wrapping_add(fmix64(index.wrapping_add(0x632b_e59b_d9b4_e019))))
}

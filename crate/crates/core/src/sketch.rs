//! Count-Min matrix with incrementally maintained per-row sums of squares.
//!
//! Counters and partial sums live in atomic cells. Each matrix has exactly one
//! writer (the owning partition's thread); any thread may read. Snapshot
//! consistency across cells is the caller's business.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering::Relaxed};

use crate::error::{Error, Result};
use crate::hash::{ColumnHash, MultiplyShift};

/// Geometry and seed of a Count-Min matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SketchConfig {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

impl SketchConfig {
    pub fn new(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "sketch needs at least one row and one column, got {rows}x{cols}"
            )));
        }
        Ok(Self { rows, cols, seed })
    }

    /// Geometry for an (epsilon, delta) guarantee: `rows = ceil(ln(1/delta))`,
    /// `cols = ceil(e/epsilon)`.
    ///
    /// With this geometry a point estimate exceeds the true frequency by more
    /// than `epsilon * F1` with probability at most `delta`. For the CM+ F2
    /// estimate the per-row failure probability is 3/4, so the row count needed
    /// is `log_{4/3}(1/delta)` instead.
    pub fn from_error_bounds(epsilon: f64, delta: f64, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0 && delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon and delta must lie in (0, 1), got {epsilon}, {delta}"
            )));
        }
        let rows = (1.0 / delta).ln().ceil().max(1.0) as usize;
        let cols = (std::f64::consts::E / epsilon).ceil() as usize;
        Self::new(rows, cols, seed)
    }
}

/// `H x K` matrix of 32-bit counters plus `H` 64-bit sums of squared counters.
pub struct CountMin<S = MultiplyShift> {
    hasher: S,
    rows: usize,
    cols: usize,
    counters: Box<[AtomicU32]>,
    partials: Box<[AtomicU64]>,
}

impl CountMin<MultiplyShift> {
    pub fn new(cfg: &SketchConfig) -> Self {
        Self::with_hasher(MultiplyShift::new(cfg.rows, cfg.cols, cfg.seed))
    }
}

impl<S: ColumnHash> CountMin<S> {
    pub fn with_hasher(hasher: S) -> Self {
        let (rows, cols) = (hasher.rows(), hasher.cols());
        assert!(rows >= 1 && cols >= 1, "empty sketch geometry");
        Self {
            hasher,
            rows,
            cols,
            counters: (0..rows * cols).map(|_| AtomicU32::new(0)).collect(),
            partials: (0..rows).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn hasher(&self) -> &S {
        &self.hasher
    }

    #[inline]
    pub fn column(&self, row: usize, key: u64) -> usize {
        self.hasher.column(row, key)
    }

    #[inline]
    fn cell(&self, row: usize, key: u64) -> &AtomicU32 {
        &self.counters[row * self.cols + self.hasher.column(row, key)]
    }

    /// Adds `value` occurrences of `key`, keeping every row's sum of squares
    /// exact: the touched counter `c` becomes `c + v` and the row sum grows by
    /// `2cv + v^2`.
    ///
    /// Single writer only. Total stream weight must stay below 2^32.
    #[inline]
    pub fn update_enh(&self, key: u64, value: u64) {
        debug_assert!(value > 0, "cash-register updates carry positive values");
        for row in 0..self.rows {
            let cell = self.cell(row, key);
            let c = cell.load(Relaxed) as u64;
            debug_assert!(c + value <= u32::MAX as u64, "counter overflow");
            cell.store((c + value) as u32, Relaxed);
            let p = &self.partials[row];
            p.store(p.load(Relaxed) + 2 * c * value + value * value, Relaxed);
        }
    }

    /// `min_j CMS[j][h_j(key)]`.
    #[inline]
    pub fn point_estimate(&self, key: u64) -> u64 {
        (0..self.rows)
            .map(|row| self.cell(row, key).load(Relaxed) as u64)
            .min()
            .unwrap_or(0)
    }

    /// [`update_enh`](Self::update_enh) followed by the post-update point
    /// estimate, in one pass over the rows.
    #[inline]
    pub fn insert_and_pq_enh(&self, key: u64, value: u64) -> u64 {
        debug_assert!(value > 0);
        let mut est = u64::MAX;
        for row in 0..self.rows {
            let cell = self.cell(row, key);
            let c = cell.load(Relaxed) as u64;
            debug_assert!(c + value <= u32::MAX as u64, "counter overflow");
            cell.store((c + value) as u32, Relaxed);
            let p = &self.partials[row];
            p.store(p.load(Relaxed) + 2 * c * value + value * value, Relaxed);
            est = est.min(c + value);
        }
        est
    }

    /// Sum of row `row`, the exact stream weight absorbed by the matrix.
    pub fn row_sum(&self, row: usize) -> Result<u64> {
        if row >= self.rows {
            return Err(Error::RowOutOfRange { row, rows: self.rows });
        }
        Ok(self.row(row).iter().map(|c| c.load(Relaxed) as u64).sum())
    }

    fn row(&self, row: usize) -> &[AtomicU32] {
        &self.counters[row * self.cols..(row + 1) * self.cols]
    }

    /// CM+ by full scan: `min_j sum_k CMS[j][k]^2`.
    pub fn cmplus_seq(&self) -> u64 {
        (0..self.rows)
            .map(|row| {
                self.row(row)
                    .iter()
                    .map(|c| {
                        let c = c.load(Relaxed) as u64;
                        c * c
                    })
                    .sum::<u64>()
            })
            .min()
            .unwrap_or(0)
    }

    /// CM+ from the maintained partial sums.
    #[inline]
    pub fn partials_min(&self) -> u64 {
        self.partials.iter().map(|p| p.load(Relaxed)).min().unwrap_or(0)
    }

    pub fn partial(&self, row: usize) -> u64 {
        self.partials[row].load(Relaxed)
    }

    /// Loads every per-row partial into `out` (cleared first).
    #[inline]
    pub fn load_partials(&self, out: &mut Vec<u64>) {
        out.clear();
        out.extend(self.partials.iter().map(|p| p.load(Relaxed)));
    }

    pub fn counter(&self, row: usize, col: usize) -> u32 {
        self.counters[row * self.cols + col].load(Relaxed)
    }

    /// Row-major copy of the counters.
    pub fn counters(&self) -> Vec<u32> {
        self.counters.iter().map(|c| c.load(Relaxed)).collect()
    }

    pub fn partials(&self) -> Vec<u64> {
        self.partials.iter().map(|p| p.load(Relaxed)).collect()
    }
}

impl<S> std::fmt::Debug for CountMin<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CountMin").field("rows", &self.rows).field("cols", &self.cols).finish()
    }
}

//! Augmented sketch: a small exact filter for the heaviest keys in front of a
//! Count-Min matrix.
//!
//! Filter keys are stored contiguously, apart from the per-slot counters, so a
//! lookup is one dense scan. Each slot also keeps an exponentially weighted
//! moving average ("projection") of the batch sizes delivered to it, which the
//! lagom F2 query uses to estimate heavy-key occurrences still buffered in
//! delegation filters.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering::{Acquire, Relaxed, Release}};

use crate::hash::{ColumnHash, MultiplyShift};
use crate::sketch::{CountMin, SketchConfig};

/// Largest supported filter size. Filters are meant to fit a cache line or two.
pub const MAX_SLOTS: usize = 64;

/// Default EWMA weight of the newest batch.
pub const DEFAULT_EWMA_WEIGHT: f64 = 0.8;

/// Returns the index of the first occurrence of `key` in `keys`.
///
/// The scan has no data-dependent branch inside a 64-key block: matches are
/// folded into a bit mask and the first set bit is taken.
#[inline]
pub fn af_lookup(keys: &[u64], key: u64) -> Option<usize> {
    for (block, chunk) in keys.chunks(64).enumerate() {
        let mask = chunk
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &k)| m | (((k == key) as u64) << i));
        if mask != 0 {
            return Some(block * 64 + mask.trailing_zeros() as usize);
        }
    }
    None
}

/// A copy of one occupied filter slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugSlot {
    pub key: u64,
    pub count: u64,
    pub old_count: u64,
    pub projection: f64,
}

/// Filter of up to `C` heavy keys with exact counts.
pub struct AugFilter {
    keys: Box<[AtomicU64]>,
    counts: Box<[AtomicU64]>,
    old_counts: Box<[AtomicU64]>,
    projections: Box<[AtomicU64]>,
    len: AtomicUsize,
}

fn atomics(n: usize) -> Box<[AtomicU64]> {
    (0..n).map(|_| AtomicU64::new(0)).collect()
}

impl AugFilter {
    pub fn new(capacity: usize) -> Self {
        assert!((1..=MAX_SLOTS).contains(&capacity), "filter capacity {capacity} not in 1..={MAX_SLOTS}");
        Self {
            keys: atomics(capacity),
            counts: atomics(capacity),
            old_counts: atomics(capacity),
            projections: atomics(capacity),
            len: AtomicUsize::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.keys.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len.load(Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.capacity()
    }

    #[inline]
    pub fn lookup(&self, key: u64) -> Option<usize> {
        let len = self.len();
        let mut buf = [0u64; MAX_SLOTS];
        for (dst, src) in buf[..len].iter_mut().zip(self.keys.iter()) {
            *dst = src.load(Relaxed);
        }
        af_lookup(&buf[..len], key)
    }

    #[inline]
    pub fn count(&self, slot: usize) -> u64 {
        self.counts[slot].load(Relaxed)
    }

    #[inline]
    pub fn old_count(&self, slot: usize) -> u64 {
        self.old_counts[slot].load(Relaxed)
    }

    #[inline]
    pub fn projection(&self, slot: usize) -> f64 {
        f64::from_bits(self.projections[slot].load(Relaxed))
    }

    #[inline]
    pub fn projection_bits(&self, slot: usize) -> u64 {
        self.projections[slot].load(Relaxed)
    }

    pub fn key(&self, slot: usize) -> u64 {
        self.keys[slot].load(Relaxed)
    }

    pub fn slot(&self, slot: usize) -> AugSlot {
        AugSlot {
            key: self.key(slot),
            count: self.count(slot),
            old_count: self.old_count(slot),
            projection: self.projection(slot),
        }
    }

    pub fn slots(&self) -> Vec<AugSlot> {
        (0..self.len()).map(|i| self.slot(i)).collect()
    }

    /// Slot holding the smallest count; ties go to the lowest index.
    fn min_slot(&self) -> (usize, u64) {
        let mut best = (0, self.count(0));
        for i in 1..self.len() {
            let c = self.count(i);
            if c < best.1 {
                best = (i, c);
            }
        }
        best
    }

    fn write_slot(&self, slot: usize, key: u64, count: u64, old: u64, projection: f64) {
        self.keys[slot].store(key, Relaxed);
        self.counts[slot].store(count, Relaxed);
        self.old_counts[slot].store(old, Relaxed);
        self.projections[slot].store(projection.to_bits(), Relaxed);
    }
}

impl std::fmt::Debug for AugFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.slots()).finish()
    }
}

/// One partition's augmented sketch: filter plus Count-Min matrix.
#[derive(Debug)]
pub struct ASketch<S = MultiplyShift> {
    cms: CountMin<S>,
    filter: AugFilter,
    ewma_weight: f64,
}

impl ASketch<MultiplyShift> {
    pub fn new(cfg: &SketchConfig, slots: usize) -> Self {
        Self::with_cms(CountMin::new(cfg), slots, DEFAULT_EWMA_WEIGHT)
    }
}

impl<S: ColumnHash> ASketch<S> {
    pub fn with_cms(cms: CountMin<S>, slots: usize, ewma_weight: f64) -> Self {
        assert!((0.0..=1.0).contains(&ewma_weight));
        Self { cms, filter: AugFilter::new(slots), ewma_weight }
    }

    pub fn cms(&self) -> &CountMin<S> {
        &self.cms
    }

    pub fn filter(&self) -> &AugFilter {
        &self.filter
    }

    pub fn ewma_weight(&self) -> f64 {
        self.ewma_weight
    }

    /// Inserts `value` occurrences of `key`. Single writer only.
    ///
    /// A resident key is counted exactly and its projection moves toward
    /// `value`. A new key takes a free slot if there is one. Otherwise the
    /// update goes to the CMS, and if the key's post-update estimate beats the
    /// lightest resident key, that key is evicted (its occurrences since
    /// install are pushed into the CMS) and the new key installed with
    /// `count = old_count = estimate`.
    pub fn insert_enh(&self, key: u64, value: u64) {
        debug_assert!(value > 0);
        let f = &self.filter;
        if let Some(slot) = f.lookup(key) {
            f.counts[slot].store(f.count(slot) + value, Relaxed);
            let w = self.ewma_weight;
            let proj = w * value as f64 + (1.0 - w) * f.projection(slot);
            f.projections[slot].store(proj.to_bits(), Relaxed);
            return;
        }
        let len = f.len.load(Relaxed);
        if len < f.capacity() {
            f.write_slot(len, key, value, 0, value as f64);
            f.len.store(len + 1, Release);
            return;
        }
        let estimate = self.cms.insert_and_pq_enh(key, value);
        let (slot, min_count) = f.min_slot();
        if estimate > min_count {
            let evicted = f.key(slot);
            let delta = min_count - f.old_count(slot);
            if delta > 0 {
                self.cms.update_enh(evicted, delta);
            }
            f.write_slot(slot, key, estimate, estimate, value as f64);
        }
    }

    /// Filter count if resident, CMS point estimate otherwise.
    #[inline]
    pub fn query(&self, key: u64) -> u64 {
        match self.filter.lookup(key) {
            Some(slot) => self.filter.count(slot),
            None => self.cms.point_estimate(key),
        }
    }

    /// Sequential F2 estimate of this partition: CM+ over the matrix plus
    /// `count^2 - old_count^2` per resident key.
    pub fn cmplus_with_filter(&self) -> u64 {
        let heavy: u64 = (0..self.filter.len())
            .map(|i| {
                let (c, o) = (self.filter.count(i), self.filter.old_count(i));
                c * c - o * o
            })
            .sum();
        self.cms.cmplus_seq() + heavy
    }

    /// Weight held in the filter and not yet reflected in the CMS.
    pub fn filter_excess(&self) -> u64 {
        (0..self.filter.len()).map(|i| self.filter.count(i) - self.filter.old_count(i)).sum()
    }
}

//! Point, F1 and F2 queries under the three synchronization designs.

use std::sync::atomic::{fence, Ordering::*};
use std::time::{Duration, Instant};

use crossbeam::channel;

use crate::delegation::{Idle, LmqSketch, PqRequest, Stamp, Updater};
use crate::error::{Error, Result};

/// A query answer with timing and, for lagom F2, the number of partition
/// rescans caused by concurrent flushes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryResult {
    pub value: u64,
    pub retries: u64,
    pub duration_ns: u64,
}

impl QueryResult {
    /// Runs `query` and times it.
    pub fn timed(query: impl FnOnce() -> u64) -> Self {
        let start = Instant::now();
        let value = query();
        Self { value, retries: 0, duration_ns: start.elapsed().as_nanos() as u64 }
    }
}

impl LmqSketch {
    /// Exact F1: the sum of the per-thread completed-update counters. Wait-free.
    pub fn f1_query(&self) -> u64 {
        self.parts.iter().map(|p| p.f1_partial.load(Acquire)).sum()
    }

    /// F2 with no coordination with concurrent flushes.
    ///
    /// Per partition: CM+ over the counter matrix, plus for each resident key
    /// `(count + buffered)^2 - old_count^2`, where `buffered` is the key's total
    /// in every delegation filter aimed at the partition. Only meaningful at
    /// quiescence; under concurrency a flush in progress can make it miss or
    /// double-count updates. Torn reads are clamped at zero.
    pub fn f2_nosync(&self) -> u64 {
        let mut total: i128 = 0;
        for (i, part) in self.parts.iter().enumerate() {
            total += part.sketch.cms().cmplus_seq() as i128;
            let f = part.sketch.filter();
            for s in 0..f.len() {
                let key = f.key(s);
                let mut freq = f.count(s) as i128;
                for src in self.parts.iter() {
                    freq += src.outbound[i].count_of(key) as i128;
                }
                let old = f.old_count(s) as i128;
                total += freq * freq - old * old;
            }
        }
        total.max(0) as u64
    }

    /// F1 under the exclusive lock: one matrix row per partition, plus filter
    /// occurrences not yet in the matrix, plus everything buffered in
    /// delegation filters.
    pub fn f1_fullsync(&self) -> u64 {
        let _excl = self.fullsync.write().unwrap();
        let p = self.partitions();
        (0..p)
            .map(|i| {
                let sk = &self.parts[i].sketch;
                sk.cms().row_sum(0).unwrap() + sk.filter_excess() + self.buffered_toward(i)
            })
            .sum()
    }

    /// F2 under the exclusive lock, as CM+ over the merge of every partition's
    /// matrix and every delegation filter.
    ///
    /// Buffered occurrences of resident keys are added to their filter count;
    /// the rest are added to a scratch copy of the owner's matrix. Partitions
    /// hold disjoint key sets, so summing per-partition CM+ equals CM+ over the
    /// side-by-side merged matrix.
    pub fn f2_fullsync(&self) -> u64 {
        let _excl = self.fullsync.write().unwrap();
        let p = self.partitions();
        let mut scratch: Vec<u64> = Vec::new();
        let mut extra: Vec<u64> = Vec::new();
        let mut total: u128 = 0;
        for i in 0..p {
            let sk = &self.parts[i].sketch;
            let (cms, f) = (sk.cms(), sk.filter());
            let (rows, cols) = (cms.rows(), cms.cols());
            scratch.clear();
            scratch.extend(cms.counters().into_iter().map(u64::from));
            extra.clear();
            extra.resize(f.len(), 0);
            for src in self.parts.iter() {
                for (key, count) in src.outbound[i].entries() {
                    match f.lookup(key) {
                        Some(s) => extra[s] += count,
                        None => {
                            for r in 0..rows {
                                scratch[r * cols + cms.column(r, key)] += count;
                            }
                        }
                    }
                }
            }
            let cmplus = scratch
                .chunks(cols)
                .map(|row| row.iter().map(|&c| (c as u128) * (c as u128)).sum::<u128>())
                .min()
                .unwrap_or(0);
            total += cmplus;
            for (s, &e) in extra.iter().enumerate() {
                let freq = (f.count(s) + e) as u128;
                let old = f.old_count(s) as u128;
                total += freq * freq - old * old;
            }
        }
        total as u64
    }

    /// Claims the single lagom F2 scanner.
    pub fn lagom_scanner(&self) -> Result<LagomScanner<'_>> {
        if self.scanner_active.swap(true, AcqRel) {
            return Err(Error::ScannerBusy);
        }
        Ok(LagomScanner {
            sketch: self,
            rows: Vec::with_capacity(self.config().rows),
            slots: Vec::with_capacity(self.config().slots),
            stats: ScanStats::default(),
        })
    }

    /// Sends a point query to the owner's mailbox and waits for the answer.
    /// The owner's updater thread must be serving its mailbox.
    pub fn point_query_via_owner(&self, key: u64, timeout: Duration) -> Result<u64> {
        let owner = self.owner(key);
        let (tx, rx) = channel::bounded(1);
        self.parts[owner]
            .mailbox
            .0
            .send(PqRequest { key, reply: tx })
            .map_err(|_| Error::QueryTimeout(key))?;
        rx.recv_timeout(timeout).map_err(|_| Error::QueryTimeout(key))
    }
}

impl Updater<'_> {
    /// Frequency estimate of a key owned by this partition: the augmented
    /// sketch's answer plus the key's occurrences buffered in every delegation
    /// filter aimed here.
    pub fn point_query(&self, key: u64) -> Result<u64> {
        let owner = self.sketch().owner(key);
        if owner != self.id() {
            return Err(Error::NotOwner { key, owner, caller: self.id() });
        }
        Ok(self.point_query_unchecked(key))
    }

    pub(crate) fn point_query_unchecked(&self, key: u64) -> u64 {
        let sk = self.sketch();
        let _shared = match sk.config().sync_mode {
            crate::SyncMode::FullSync => Some(sk.fullsync.read().unwrap()),
            _ => None,
        };
        let id = self.id();
        let mut value = sk.parts[id].sketch.query(key);
        for src in sk.parts.iter() {
            value += src.outbound[id].count_of(key);
        }
        value
    }
}

/// Counters kept by a [`LagomScanner`] across queries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub queries: u64,
    pub partition_scans: u64,
    pub retries: u64,
    /// Largest number of retries needed for a single partition.
    pub max_partition_retries: u64,
    /// Scans compared against a recorded flush state.
    pub audited: u64,
    /// Scans that matched no recorded flush state.
    pub audit_violations: u64,
}

/// Exclusive handle for lagom F2 queries. The scan-flag protocol admits one
/// scanner at a time; dropping the handle releases it.
pub struct LagomScanner<'a> {
    sketch: &'a LmqSketch,
    rows: Vec<u64>,
    slots: Vec<(u64, u64, u64)>,
    stats: ScanStats,
}

impl LagomScanner<'_> {
    pub fn stats(&self) -> ScanStats {
        self.stats
    }

    /// F2 from an atomic snapshot of each partition.
    ///
    /// For partition `i`: raise its scan flag, then repeatedly read `v2`, the
    /// minimum per-row sum of squares, and each resident key's
    /// `(count + P * projection / 2)^2 - old_count^2`, then `v1`, until
    /// `v1 == v2`. The projection stands in for the key's occurrences still
    /// buffered in the partition's `P` delegation filters, assumed half full
    /// on average. Arithmetic is in f64, truncated once at the end.
    pub fn f2_lagom(&mut self) -> QueryResult {
        let start = Instant::now();
        let sk = self.sketch;
        let pf = sk.partitions() as f64;
        let mut result = 0.0f64;
        let mut retries = 0;
        for part in sk.parts.iter() {
            part.being_scanned.store(true, SeqCst);
            let mut attempts = 0;
            let mut wait = Idle::default();
            let (local, generation) = loop {
                let v2 = part.versions.v2.load(SeqCst);
                part.sketch.cms().load_partials(&mut self.rows);
                let mut local = self.rows.iter().copied().min().unwrap_or(0) as f64;
                let f = part.sketch.filter();
                self.slots.clear();
                for s in 0..f.len() {
                    let (count, old, proj) = (f.count(s), f.old_count(s), f.projection_bits(s));
                    self.slots.push((count, old, proj));
                    let freq = count as f64 + pf * f64::from_bits(proj) / 2.0;
                    let old = old as f64;
                    local += freq * freq - old * old;
                }
                fence(Acquire);
                let v1 = part.versions.v1.load(SeqCst);
                if v1 == v2 {
                    break (local, v2);
                }
                attempts += 1;
                // Let the flush finish before rescanning, so each retry
                // corresponds to one flush.
                while part.versions.v1.load(SeqCst) != part.versions.v2.load(SeqCst) {
                    wait.step();
                }
            };
            part.being_scanned.store(false, SeqCst);
            result += local;
            retries += attempts;
            self.stats.partition_scans += 1;
            self.stats.max_partition_retries = self.stats.max_partition_retries.max(attempts);
            if let Some(audit) = &part.audit {
                let mut log = audit.lock().unwrap();
                let seen = Stamp { per_row: self.rows.clone(), slots: self.slots.clone() };
                self.stats.audited += 1;
                if log.get(&generation) != Some(&seen) {
                    self.stats.audit_violations += 1;
                }
                // Later accepted scans of this partition can only see newer states.
                *log = log.split_off(&generation);
            }
        }
        self.stats.queries += 1;
        self.stats.retries += retries;
        QueryResult { value: result as u64, retries, duration_ns: start.elapsed().as_nanos() as u64 }
    }
}

impl Drop for LagomScanner<'_> {
    fn drop(&mut self) {
        self.sketch.scanner_active.store(false, Release);
    }
}

//! The partitioned runtime: key ownership, delegation filters, the handover
//! queue, and the flush protocol.
//!
//! Updater thread `i` owns partition `i`. It buffers every update in
//! `dfs[i][owner(key)]` (including its own partition, "self-delegation").
//! When that filter holds `C` distinct keys or `B` buffered occurrences it is
//! handed over: pushed onto the owner's pending queue. The producer may not
//! touch a handed-over filter again until the owner has drained it into its
//! augmented sketch and cleared it. While waiting, the producer drains its own
//! pending queue, so two producers waiting on each other both make progress.
//!
//! Each flush is bracketed by a version pair. `v1` is bumped before the
//! partition is touched and `v2` after; a reader that sees the same value in
//! `v2` before its scan and in `v1` after it has read a state no flush was
//! writing. Before bumping `v1` the owner waits for the partition's scan flag
//! to drop, so a scanner retries at most once per partition.

use std::collections::BTreeMap;
use std::sync::atomic::{fence, AtomicBool, AtomicU64, AtomicUsize, Ordering::*};
use std::sync::{Mutex, OnceLock, RwLock};

use crossbeam::channel::{self, Receiver, Sender};
use crossbeam::queue::ArrayQueue;
use crossbeam::utils::CachePadded;

use crate::asketch::{af_lookup, ASketch, DEFAULT_EWMA_WEIGHT, MAX_SLOTS};
use crate::error::{Error, Result};
use crate::hash::{derive_seed, Partitioner};
use crate::reference::{FrozenPartition, FrozenState};
use crate::sketch::SketchConfig;

/// Synchronization design used between updates and global queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SyncMode {
    FullSync,
    NoSync,
    Lagom,
}

impl std::str::FromStr for SyncMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fullsync" => Ok(Self::FullSync),
            "nosync" => Ok(Self::NoSync),
            "lagom" => Ok(Self::Lagom),
            _ => Err(Error::InvalidConfig(format!("unknown sync mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for SyncMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FullSync => "fullsync",
            Self::NoSync => "nosync",
            Self::Lagom => "lagom",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalConfig {
    /// Number of partitions, one updater thread each.
    pub partitions: usize,
    pub rows: usize,
    pub cols: usize,
    /// Slots per augmented filter and per delegation filter.
    pub slots: usize,
    /// Occurrences a delegation filter may buffer before handover. `None`
    /// disables the bound (plain delegation).
    pub bound: Option<u64>,
    pub seed: u64,
    pub sync_mode: SyncMode,
    pub ewma_weight: f64,
    /// Record a copy of every flushed partition state so lagom scans can be
    /// checked against it. Test and debugging aid; costs a lock per flush.
    pub audit_snapshots: bool,
}

impl GlobalConfig {
    /// `P` partitions of `rows x cols` with `C = 16` and `B = 1000`.
    pub fn new(partitions: usize, rows: usize, cols: usize) -> Self {
        Self {
            partitions,
            rows,
            cols,
            slots: 16,
            bound: Some(1000),
            seed: 0,
            sync_mode: SyncMode::Lagom,
            ewma_weight: DEFAULT_EWMA_WEIGHT,
            audit_snapshots: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_slots(mut self, slots: usize) -> Self {
        self.slots = slots;
        self
    }

    pub fn with_bound(mut self, bound: Option<u64>) -> Self {
        self.bound = bound;
        self
    }

    pub fn with_mode(mut self, mode: SyncMode) -> Self {
        self.sync_mode = mode;
        self
    }

    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit_snapshots = audit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.partitions == 0 {
            return bad("at least one partition is required".into());
        }
        if self.rows == 0 || self.cols == 0 {
            return bad(format!("sketch geometry {}x{} is empty", self.rows, self.cols));
        }
        if !(1..=MAX_SLOTS).contains(&self.slots) {
            return bad(format!("slots must lie in 1..={MAX_SLOTS}, got {}", self.slots));
        }
        if self.bound == Some(0) {
            return bad("buffer bound must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.ewma_weight) {
            return bad(format!("EWMA weight {} outside [0, 1]", self.ewma_weight));
        }
        Ok(())
    }

    pub fn sketch_config(&self, partition: usize) -> SketchConfig {
        SketchConfig { rows: self.rows, cols: self.cols, seed: derive_seed(self.seed, partition as u64) }
    }
}

/// Buffer of up to `C` updates from one producer thread to one owner.
pub struct DelegationFilter {
    keys: Box<[AtomicU64]>,
    counts: Box<[AtomicU64]>,
    size: AtomicUsize,
    sum: AtomicU64,
    handed_over: AtomicBool,
    bound: u64,
    #[cfg(debug_assertions)]
    writer: usize,
}

impl DelegationFilter {
    fn new(capacity: usize, bound: Option<u64>, _writer: usize) -> Self {
        Self {
            keys: (0..capacity).map(|_| AtomicU64::new(0)).collect(),
            counts: (0..capacity).map(|_| AtomicU64::new(0)).collect(),
            size: AtomicUsize::new(0),
            sum: AtomicU64::new(0),
            handed_over: AtomicBool::new(false),
            bound: bound.unwrap_or(u64::MAX),
            #[cfg(debug_assertions)]
            writer: _writer,
        }
    }

    pub fn capacity(&self) -> usize {
        self.keys.len()
    }

    /// Number of distinct buffered keys.
    pub fn size(&self) -> usize {
        self.size.load(Acquire)
    }

    /// Total buffered occurrences.
    pub fn sum(&self) -> u64 {
        self.sum.load(Acquire)
    }

    /// Set while the filter sits in (or is being drained from) the owner's
    /// pending queue.
    pub fn is_handed_over(&self) -> bool {
        self.handed_over.load(Acquire)
    }

    /// Buffered occurrences of `key`, zero if absent.
    #[inline]
    pub fn count_of(&self, key: u64) -> u64 {
        let n = self.size();
        let mut buf = [0u64; MAX_SLOTS];
        for (dst, src) in buf[..n].iter_mut().zip(self.keys.iter()) {
            *dst = src.load(Relaxed);
        }
        match af_lookup(&buf[..n], key) {
            Some(i) => self.counts[i].load(Relaxed),
            None => 0,
        }
    }

    pub fn entries(&self) -> Vec<(u64, u64)> {
        (0..self.size()).map(|i| (self.keys[i].load(Relaxed), self.counts[i].load(Relaxed))).collect()
    }

    #[inline]
    fn full(&self, size: usize, sum: u64) -> bool {
        size == self.capacity() || sum >= self.bound
    }

    /// Buffers an update. Returns true if the filter is now full and must be
    /// handed over. Producer only, and only while not handed over.
    #[inline]
    fn add(&self, _writer: usize, key: u64, value: u64) -> bool {
        #[cfg(debug_assertions)]
        debug_assert_eq!(_writer, self.writer, "delegation filter written by a foreign thread");
        debug_assert!(!self.handed_over.load(Relaxed));
        let n = self.size.load(Relaxed);
        let mut buf = [0u64; MAX_SLOTS];
        for (dst, src) in buf[..n].iter_mut().zip(self.keys.iter()) {
            *dst = src.load(Relaxed);
        }
        let size = match af_lookup(&buf[..n], key) {
            Some(i) => {
                let c = &self.counts[i];
                c.store(c.load(Relaxed) + value, Relaxed);
                n
            }
            None => {
                self.keys[n].store(key, Relaxed);
                self.counts[n].store(value, Relaxed);
                self.size.store(n + 1, Release);
                n + 1
            }
        };
        let sum = self.sum.load(Relaxed) + value;
        self.sum.store(sum, Release);
        self.full(size, sum)
    }

    /// Owner only, after draining.
    fn clear(&self) {
        self.size.store(0, Relaxed);
        self.sum.store(0, Relaxed);
        self.handed_over.store(false, Release);
    }
}

/// Flushed partition state recorded for audits, tagged by its `v2` value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Stamp {
    pub per_row: Vec<u64>,
    /// `(count, old_count, projection bits)` per occupied slot.
    pub slots: Vec<(u64, u64, u64)>,
}

pub(crate) struct PqRequest {
    pub key: u64,
    pub reply: Sender<u64>,
}

pub(crate) struct Versions {
    pub v1: AtomicU64,
    pub v2: AtomicU64,
}

pub(crate) struct Partition {
    pub sketch: ASketch,
    pub f1_partial: CachePadded<AtomicU64>,
    pub versions: CachePadded<Versions>,
    pub being_scanned: CachePadded<AtomicBool>,
    pub pending: ArrayQueue<usize>,
    /// `dfs[i][target]` for this partition's thread `i`.
    pub outbound: Box<[CachePadded<DelegationFilter>]>,
    pub mailbox: (Sender<PqRequest>, Receiver<PqRequest>),
    pub audit: Option<Mutex<BTreeMap<u64, Stamp>>>,
}

impl Partition {
    fn new(cfg: &GlobalConfig, id: usize) -> Self {
        let sketch = ASketch::with_cms(
            crate::sketch::CountMin::new(&cfg.sketch_config(id)),
            cfg.slots,
            cfg.ewma_weight,
        );
        let mut p = Self {
            sketch,
            f1_partial: CachePadded::new(AtomicU64::new(0)),
            versions: CachePadded::new(Versions { v1: AtomicU64::new(0), v2: AtomicU64::new(0) }),
            being_scanned: CachePadded::new(AtomicBool::new(false)),
            pending: ArrayQueue::new(cfg.partitions),
            outbound: (0..cfg.partitions)
                .map(|_| CachePadded::new(DelegationFilter::new(cfg.slots, cfg.bound, id)))
                .collect(),
            mailbox: channel::unbounded(),
            audit: None,
        };
        if cfg.audit_snapshots {
            let mut log = BTreeMap::new();
            log.insert(0, p.stamp());
            p.audit = Some(Mutex::new(log));
        }
        p
    }

    pub fn stamp(&self) -> Stamp {
        let f = self.sketch.filter();
        Stamp {
            per_row: self.sketch.cms().partials(),
            slots: (0..f.len()).map(|i| (f.count(i), f.old_count(i), f.projection_bits(i))).collect(),
        }
    }
}

fn parallelism() -> usize {
    static N: OnceLock<usize> = OnceLock::new();
    *N.get_or_init(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Waiting policy: a short exponential spin when other cores can make
/// progress, yielding otherwise.
#[derive(Default)]
pub(crate) struct Idle(u32);

impl Idle {
    #[inline]
    pub fn step(&mut self) {
        if parallelism() > 1 && self.0 < 7 {
            for _ in 0..(1u32 << self.0) {
                std::hint::spin_loop();
            }
            self.0 += 1;
        } else {
            std::thread::yield_now();
        }
    }
}

/// The composite structure shared by all updater and query threads.
pub struct LmqSketch {
    cfg: GlobalConfig,
    partitioner: Partitioner,
    pub(crate) parts: Box<[Partition]>,
    claimed: Box<[AtomicBool]>,
    pub(crate) scanner_active: AtomicBool,
    pub(crate) fullsync: RwLock<()>,
}

impl LmqSketch {
    pub fn new(cfg: GlobalConfig) -> Result<Self> {
        cfg.validate()?;
        let partitioner = Partitioner::new(cfg.partitions, cfg.seed);
        Ok(Self {
            parts: (0..cfg.partitions).map(|i| Partition::new(&cfg, i)).collect(),
            claimed: (0..cfg.partitions).map(|_| AtomicBool::new(false)).collect(),
            scanner_active: AtomicBool::new(false),
            fullsync: RwLock::new(()),
            partitioner,
            cfg,
        })
    }

    pub fn config(&self) -> &GlobalConfig {
        &self.cfg
    }

    pub fn partitions(&self) -> usize {
        self.cfg.partitions
    }

    #[inline]
    pub fn owner(&self, key: u64) -> usize {
        self.partitioner.owner(key)
    }

    pub fn partitioner(&self) -> Partitioner {
        self.partitioner
    }

    /// Claims the updater handle of `partition`. Exactly one handle per
    /// partition can be live at a time.
    pub fn updater(&self, partition: usize) -> Result<Updater<'_>> {
        if partition >= self.partitions() {
            return Err(Error::InvalidConfig(format!("no partition {partition}")));
        }
        if self.claimed[partition].swap(true, AcqRel) {
            return Err(Error::UpdaterClaimed(partition));
        }
        Ok(Updater { sketch: self, id: partition })
    }

    /// Claims every updater handle, in partition order.
    pub fn updaters(&self) -> Result<Vec<Updater<'_>>> {
        (0..self.partitions()).map(|i| self.updater(i)).collect()
    }

    /// Partition `i`'s augmented sketch.
    pub fn asketch(&self, partition: usize) -> &ASketch {
        &self.parts[partition].sketch
    }

    /// `dfs[source][target]`.
    pub fn delegation_filter(&self, source: usize, target: usize) -> &DelegationFilter {
        &self.parts[source].outbound[target]
    }

    /// `(v1, v2)` of a partition.
    pub fn versions(&self, partition: usize) -> (u64, u64) {
        let v = &self.parts[partition].versions;
        (v.v1.load(SeqCst), v.v2.load(SeqCst))
    }

    pub fn f1_partial(&self, partition: usize) -> u64 {
        self.parts[partition].f1_partial.load(Acquire)
    }

    pub fn pending_len(&self, partition: usize) -> usize {
        self.parts[partition].pending.len()
    }

    /// Occurrences buffered toward `target` across all producers,
    /// `sum_i dfs[i][target].sum`.
    pub fn buffered_toward(&self, target: usize) -> u64 {
        self.parts.iter().map(|p| p.outbound[target].sum()).sum()
    }

    /// Hands over every non-empty delegation filter and drains all pending
    /// queues, so every buffered update reaches its owner's sketch.
    pub fn quiesce(&mut self) {
        let p = self.partitions();
        for src in 0..p {
            for target in 0..p {
                let df = &self.parts[src].outbound[target];
                if df.size() > 0 && !df.is_handed_over() {
                    df.handed_over.store(true, Release);
                    self.parts[target].pending.push(src).expect("pending queue holds one filter per producer");
                }
            }
        }
        for target in 0..p {
            self.drain_pending(target);
        }
    }

    /// Copies the whole state. Taking `&mut self` guarantees no updater or
    /// scanner is live.
    pub fn freeze(&mut self) -> FrozenState {
        let p = self.partitions();
        let partitions = (0..p)
            .map(|j| {
                let sk = &self.parts[j].sketch;
                FrozenPartition {
                    rows: self.cfg.rows,
                    cols: self.cfg.cols,
                    counters: sk.cms().counters(),
                    partials: sk.cms().partials(),
                    slots: sk.filter().slots(),
                    inbound: (0..p).map(|i| self.parts[i].outbound[j].entries()).collect(),
                }
            })
            .collect();
        FrozenState { partitions }
    }

    /// Processes partition `id`'s pending filters. Caller must be the only
    /// writer of that partition.
    pub(crate) fn drain_pending(&self, id: usize) {
        let part = &self.parts[id];
        while !part.pending.is_empty() {
            let mut idle = Idle::default();
            while part.being_scanned.load(SeqCst) {
                idle.step();
            }
            let v = &part.versions;
            let before = v.v1.fetch_add(1, SeqCst);
            debug_assert_eq!(before, v.v2.load(Relaxed), "flush started with another in flight");
            fence(Release);

            let src = part.pending.pop().expect("pending queue has a single consumer");
            let df = &self.parts[src].outbound[id];
            let n = df.size.load(Acquire);
            for s in 0..n {
                part.sketch.insert_enh(df.keys[s].load(Relaxed), df.counts[s].load(Relaxed));
            }
            if let Some(audit) = &part.audit {
                audit.lock().unwrap().insert(before + 1, part.stamp());
            }
            df.clear();
            v.v2.store(before + 1, Release);
        }
    }
}

impl std::fmt::Debug for LmqSketch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LmqSketch").field("cfg", &self.cfg).finish()
    }
}

/// Returned by [`Updater::try_insert`] when the target delegation filter is
/// still waiting to be flushed by its owner.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Blocked {
    pub target: usize,
}

/// Exclusive write handle for one partition, used by its updater thread.
pub struct Updater<'a> {
    sketch: &'a LmqSketch,
    id: usize,
}

impl<'a> Updater<'a> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn sketch(&self) -> &'a LmqSketch {
        self.sketch
    }

    /// Inserts `value` occurrences of `key`, waiting (and helping) while the
    /// target filter is handed over.
    pub fn insert(&mut self, key: u64, value: u64) {
        let mut idle = Idle::default();
        loop {
            match self.try_insert(key, value) {
                Ok(()) => return,
                Err(_) => {
                    self.process_pending_inserts();
                    idle.step();
                }
            }
        }
    }

    /// Buffers the update unless the target filter is handed over.
    pub fn try_insert(&mut self, key: u64, value: u64) -> Result<(), Blocked> {
        debug_assert!(value > 0);
        let sk = self.sketch;
        let _shared = match sk.cfg.sync_mode {
            SyncMode::FullSync => Some(sk.fullsync.read().unwrap()),
            _ => None,
        };
        let target = sk.owner(key);
        let df = &sk.parts[self.id].outbound[target];
        if df.is_handed_over() {
            return Err(Blocked { target });
        }
        let full = df.add(self.id, key, value);
        let f1 = &sk.parts[self.id].f1_partial;
        f1.store(f1.load(Relaxed) + value, Release);
        if full {
            df.handed_over.store(true, Release);
            sk.parts[target].pending.push(self.id).expect("pending queue holds one filter per producer");
        }
        Ok(())
    }

    /// Drains this partition's pending queue into its augmented sketch.
    pub fn process_pending_inserts(&mut self) {
        let sk = self.sketch;
        if sk.parts[self.id].pending.is_empty() {
            return;
        }
        let _shared = match sk.cfg.sync_mode {
            SyncMode::FullSync => Some(sk.fullsync.read().unwrap()),
            _ => None,
        };
        sk.drain_pending(self.id);
    }

    /// Answers point queries posted to this partition's mailbox.
    pub fn serve_point_queries(&mut self) -> usize {
        let mut served = 0;
        while let Ok(req) = self.sketch.parts[self.id].mailbox.1.try_recv() {
            let value = self.point_query_unchecked(req.key);
            let _ = req.reply.send(value);
            served += 1;
        }
        served
    }
}

impl Drop for Updater<'_> {
    fn drop(&mut self) {
        self.sketch.claimed[self.id].store(false, Release);
    }
}

/// Drives all partitions from the calling thread, deterministically.
///
/// When an insert finds its target filter handed over, the target partition is
/// flushed first. Handed-over filters otherwise stay pending, as they would
/// under concurrency.
pub struct SequentialDriver<'a> {
    updaters: Vec<Updater<'a>>,
}

impl<'a> SequentialDriver<'a> {
    pub fn new(sketch: &'a LmqSketch) -> Result<Self> {
        Ok(Self { updaters: sketch.updaters()? })
    }

    pub fn insert(&mut self, thread: usize, key: u64, value: u64) {
        while let Err(Blocked { target }) = self.updaters[thread].try_insert(key, value) {
            self.updaters[target].process_pending_inserts();
        }
    }

    /// Feeds the sub-streams round-robin, one tuple per thread per turn.
    pub fn run(&mut self, streams: &[Vec<crate::Tuple>]) {
        assert_eq!(streams.len(), self.updaters.len());
        let longest = streams.iter().map(Vec::len).max().unwrap_or(0);
        for pos in 0..longest {
            for (thread, s) in streams.iter().enumerate() {
                if let Some(t) = s.get(pos) {
                    self.insert(thread, t.key, t.value);
                }
            }
        }
    }

    pub fn updater(&mut self, thread: usize) -> &mut Updater<'a> {
        &mut self.updaters[thread]
    }

    pub fn process_all_pending(&mut self) {
        for u in &mut self.updaters {
            u.process_pending_inserts();
        }
    }
}

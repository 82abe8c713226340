//! Runs one updater thread per partition over pre-split sub-streams, next to a
//! caller-supplied coordinator that can issue queries, stop the updaters, or
//! pause them all.
//!
//! A paused or finished updater keeps draining its own pending queue until
//! every updater is idle; otherwise a producer blocked on its filter would wait
//! forever. Once all are idle nothing mutates the structure, so the
//! coordinator may read it as if it were quiescent (apart from buffered
//! updates still sitting in delegation filters).

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering::*};
use std::time::{Duration, Instant};

use crossbeam::utils::CachePadded;

use crate::delegation::{Idle, LmqSketch, Updater};
use crate::Tuple;

#[derive(Clone, Debug, Default)]
pub struct PoolOptions {
    /// Restart each sub-stream from the beginning when it runs out; the
    /// updaters then run until stopped.
    pub cycle: bool,
    /// Per-thread tuple limits.
    pub limits: Option<Vec<u64>>,
    /// Per-thread tuple counts at which the thread parks until
    /// [`Control::open_gate`].
    pub pause_at: Option<Vec<u64>>,
    /// Every this many tuples, the next tuple whose key the thread owns is also
    /// point-queried. 0 disables.
    pub pq_every: u64,
    /// Check that successive point queries of a key never decrease.
    pub check_pq_monotonic: bool,
    /// Maintain invoked and completed weight logs per thread.
    pub track_weights: bool,
    /// Pin updater `i` to core `i mod cores`.
    pub pin: bool,
}

/// Shared flags and per-thread progress logs.
pub struct Control {
    partitions: usize,
    stop: AtomicBool,
    pause: AtomicBool,
    gate: AtomicBool,
    parked: AtomicUsize,
    done: AtomicUsize,
    busy: AtomicUsize,
    tuples: Box<[CachePadded<AtomicU64>]>,
    invoked: Box<[CachePadded<AtomicU64>]>,
    completed: Box<[CachePadded<AtomicU64>]>,
}

fn counters(n: usize) -> Box<[CachePadded<AtomicU64>]> {
    (0..n).map(|_| CachePadded::new(AtomicU64::new(0))).collect()
}

impl Control {
    fn new(partitions: usize) -> Self {
        Self {
            partitions,
            stop: AtomicBool::new(false),
            pause: AtomicBool::new(false),
            gate: AtomicBool::new(false),
            parked: AtomicUsize::new(0),
            done: AtomicUsize::new(0),
            busy: AtomicUsize::new(0),
            tuples: counters(partitions),
            invoked: counters(partitions),
            completed: counters(partitions),
        }
    }

    pub fn partitions(&self) -> usize {
        self.partitions
    }

    /// Makes every updater finish at its next tuple boundary.
    pub fn stop(&self) {
        self.stop.store(true, SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.stop.load(SeqCst)
    }

    /// True once every updater has left its stream loop.
    pub fn all_done(&self) -> bool {
        self.done.load(SeqCst) == self.partitions
    }

    fn idle(&self) -> usize {
        self.parked.load(SeqCst) + self.done.load(SeqCst)
    }

    /// Waits until every updater is parked or done and none is still helping.
    pub fn wait_quiet(&self) {
        let mut idle = Idle::default();
        while !(self.idle() == self.partitions && self.busy.load(SeqCst) == 0) {
            idle.step();
        }
    }

    /// Parks all updaters at their next tuple boundary and waits until no
    /// thread mutates the structure.
    pub fn pause_world(&self) {
        self.pause.store(true, SeqCst);
        self.wait_quiet();
    }

    pub fn resume(&self) {
        self.pause.store(false, SeqCst);
    }

    /// Releases threads parked at their `pause_at` count.
    pub fn open_gate(&self) {
        self.gate.store(true, SeqCst);
    }

    /// Tuples processed so far by thread `i`.
    pub fn tuples(&self, i: usize) -> u64 {
        self.tuples[i].load(Acquire)
    }

    /// Total weight of inserts that have returned.
    pub fn completed_weight(&self) -> u64 {
        self.completed.iter().map(|c| c.load(SeqCst)).sum()
    }

    /// Total weight of inserts that have been started.
    pub fn invoked_weight(&self) -> u64 {
        self.invoked.iter().map(|c| c.load(SeqCst)).sum()
    }

    /// Runs one helping step unless every updater is idle. `busy` brackets
    /// the check so [`Control::wait_quiet`] cannot return mid-step.
    fn help(&self, u: &mut Updater<'_>) {
        self.busy.fetch_add(1, SeqCst);
        if self.idle() < self.partitions {
            u.process_pending_inserts();
            u.serve_point_queries();
        }
        self.busy.fetch_sub(1, SeqCst);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WorkerReport {
    pub tuples: u64,
    pub weight: u64,
    /// From start until the thread left its stream loop.
    pub elapsed: Duration,
    pub point_queries: u64,
    /// Point queries of a key that had been queried before, each compared
    /// with its predecessor when monotonicity is checked.
    pub pq_pairs: u64,
    pub pq_violations: u64,
}

/// Runs `streams[i]` on updater `i` while `coordinator` runs on the calling
/// thread. Returns once every updater has finished; in cycle mode the
/// updaters are stopped when the coordinator returns.
///
/// # Panics
/// If an updater handle is already claimed or `streams` has the wrong length.
pub fn run<R: Send>(
    sketch: &LmqSketch,
    streams: &[Vec<Tuple>],
    opts: &PoolOptions,
    coordinator: impl FnOnce(&Control) -> R + Send,
) -> (Vec<WorkerReport>, R) {
    let p = sketch.partitions();
    assert_eq!(streams.len(), p, "one sub-stream per partition");
    let ctl = Control::new(p);
    let updaters = sketch.updaters().expect("updater handles are free");
    let cores = if opts.pin { core_affinity::get_core_ids().unwrap_or_default() } else { Vec::new() };
    std::thread::scope(|s| {
        let ctl = &ctl;
        let handles: Vec<_> = updaters
            .into_iter()
            .zip(streams)
            .map(|(u, stream)| {
                let core = (!cores.is_empty()).then(|| cores[u.id() % cores.len()]);
                s.spawn(move || {
                    if let Some(core) = core {
                        core_affinity::set_for_current(core);
                    }
                    worker(u, stream, ctl, opts)
                })
            })
            .collect();
        let result = coordinator(ctl);
        if opts.cycle {
            ctl.stop();
        }
        let reports = handles.into_iter().map(|h| h.join().expect("updater panicked")).collect();
        (reports, result)
    })
}

fn park(u: &mut Updater<'_>, ctl: &Control, at_gate: bool) {
    ctl.parked.fetch_add(1, SeqCst);
    let mut idle = Idle::default();
    loop {
        let hold = ctl.pause.load(SeqCst) || (at_gate && !ctl.gate.load(SeqCst));
        if !hold || ctl.is_stopped() {
            break;
        }
        ctl.help(u);
        idle.step();
    }
    ctl.parked.fetch_sub(1, SeqCst);
}

fn worker(mut u: Updater<'_>, stream: &[Tuple], ctl: &Control, opts: &PoolOptions) -> WorkerReport {
    let i = u.id();
    let limit = opts.limits.as_ref().map_or(u64::MAX, |l| l[i]);
    let pause_at = opts.pause_at.as_ref().map(|l| l[i]);
    let owner = u.sketch().partitioner();
    let mut last_pq: HashMap<u64, u64> = HashMap::new();
    let mut report = WorkerReport::default();
    let mut pq_due = false;
    let mut pos = 0;
    let start = Instant::now();
    loop {
        if ctl.pause.load(Relaxed) {
            park(&mut u, ctl, false);
        }
        if pause_at == Some(report.tuples) && !ctl.gate.load(SeqCst) {
            park(&mut u, ctl, true);
        }
        if ctl.stop.load(Relaxed) || report.tuples >= limit {
            break;
        }
        if pos == stream.len() {
            if !opts.cycle || stream.is_empty() {
                break;
            }
            pos = 0;
        }
        let t = stream[pos];
        pos += 1;
        if opts.track_weights {
            ctl.invoked[i].fetch_add(t.value, SeqCst);
        }
        u.insert(t.key, t.value);
        if opts.track_weights {
            ctl.completed[i].fetch_add(t.value, SeqCst);
        }
        report.tuples += 1;
        report.weight += t.value;
        ctl.tuples[i].store(report.tuples, Release);

        if opts.pq_every > 0 {
            pq_due |= report.tuples % opts.pq_every == 0;
            if pq_due && owner.owner(t.key) == i {
                pq_due = false;
                let v = u.point_query(t.key).expect("key is owned");
                report.point_queries += 1;
                if opts.check_pq_monotonic {
                    if let Some(prev) = last_pq.insert(t.key, v) {
                        report.pq_pairs += 1;
                        report.pq_violations += (v < prev) as u64;
                    }
                }
            }
        }
        if report.tuples % 64 == 0 {
            u.serve_point_queries();
        }
    }
    report.elapsed = start.elapsed();
    ctl.done.fetch_add(1, SeqCst);
    let mut idle = Idle::default();
    while !ctl.all_done() {
        ctl.help(&mut u);
        idle.step();
    }
    u.process_pending_inserts();
    report
}

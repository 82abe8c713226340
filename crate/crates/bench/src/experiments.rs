use std::time::{Duration, Instant};

use anyhow::{bail, ensure};
use lmq_core::pool::{self, Control, PoolOptions};
use lmq_core::reference::{
    f2_all_seq, f2_proj_seq, fast_agms_f2, k_prime, mape, part_cmplus, partas_cmplus, wide_cmplus, ExactOracle,
};
use lmq_core::streamgen::split_round_robin;
use lmq_core::{LagomScanner, LmqSketch, SequentialDriver, Tuple};

use crate::config::{BenchConfig, Mode};
use crate::output::{AccuracyRow, IvlRow, LatencyRow, ThroughputRow, SCHEMA_VERSION};

/// Global F2 query for a mode: the lagom scanner, the exclusive-lock merge,
/// or the uncoordinated scan.
pub enum F2Query<'a> {
    Lagom(LagomScanner<'a>),
    FullSync(&'a LmqSketch),
    NoSync(&'a LmqSketch),
}

impl<'a> F2Query<'a> {
    pub fn new(sk: &'a LmqSketch, mode: Mode) -> Self {
        match mode {
            Mode::Lagom => F2Query::Lagom(sk.lagom_scanner().expect("no other scanner")),
            Mode::Fullsync => F2Query::FullSync(sk),
            Mode::Nosync | Mode::DelegationPlain => F2Query::NoSync(sk),
        }
    }

    /// Runs one query; `retries` is only meaningful for lagom.
    pub fn run(&mut self) -> lmq_core::QueryResult {
        match self {
            F2Query::Lagom(s) => s.f2_lagom(),
            F2Query::FullSync(sk) => lmq_core::QueryResult::timed(|| sk.f2_fullsync()),
            F2Query::NoSync(sk) => lmq_core::QueryResult::timed(|| sk.f2_nosync()),
        }
    }
}

pub fn f1_query(sk: &LmqSketch, mode: Mode) -> u64 {
    match mode {
        Mode::Fullsync => sk.f1_fullsync(),
        _ => sk.f1_query(),
    }
}

/// The sequential counterpart of a mode's F2 estimator, evaluated on the
/// current state. Callers quiesce first.
pub fn sequential_f2(sk: &mut LmqSketch, mode: Mode) -> u64 {
    match mode {
        Mode::Lagom => f2_proj_seq(&sk.freeze()),
        Mode::Nosync | Mode::DelegationPlain => f2_all_seq(&sk.freeze()),
        Mode::Fullsync => sk.f2_fullsync(),
    }
}

/// Calls `query` `rate` times per second until all updaters are done.
fn paced(rate: f64, ctl: &Control, mut query: impl FnMut()) -> u64 {
    let period = Duration::from_secs_f64(1.0 / rate);
    let mut next = Instant::now();
    let mut n = 0;
    while !ctl.all_done() {
        query();
        n += 1;
        next += period;
        let now = Instant::now();
        if next > now {
            std::thread::sleep(next - now);
        } else {
            next = now;
        }
    }
    n
}

fn pool_options(cfg: &BenchConfig) -> PoolOptions {
    PoolOptions { pq_every: cfg.pq_every(), pin: cfg.pin, ..Default::default() }
}

/// Times full-stream processing. With `with_queries`, one F1 and one F2
/// thread query at `query_rate` each for the whole run.
pub fn run_throughput(cfg: &BenchConfig, with_queries: bool) -> anyhow::Result<Vec<ThroughputRow>> {
    let stream = cfg.stream.load()?;
    ensure!(!stream.is_empty(), "empty stream");
    let mut rows = Vec::new();
    for &p in &cfg.partitions {
        let split = split_round_robin(&stream, p);
        for rep in 0..cfg.reps {
            let sk = LmqSketch::new(cfg.global(p))?;
            let queries = with_queries && cfg.query_rate > 0.0;
            let (reports, (f1s, f2s)) = pool::run(&sk, &split, &pool_options(cfg), |ctl| {
                if !queries {
                    return (0, 0);
                }
                std::thread::scope(|s| {
                    let f1 = s.spawn(|| {
                        paced(cfg.query_rate, ctl, || {
                            std::hint::black_box(f1_query(&sk, cfg.mode));
                        })
                    });
                    let f2 = s.spawn(|| {
                        let mut q = F2Query::new(&sk, cfg.mode);
                        paced(cfg.query_rate, ctl, || {
                            std::hint::black_box(q.run());
                        })
                    });
                    (f1.join().unwrap(), f2.join().unwrap())
                })
            });
            let tuples: u64 = reports.iter().map(|r| r.tuples).sum();
            let seconds = reports.iter().map(|r| r.elapsed).max().unwrap_or_default().as_secs_f64();
            rows.push(ThroughputRow {
                schema_version: SCHEMA_VERSION,
                experiment: if with_queries { "throughput-with-queries" } else { "throughput" },
                mode: cfg.mode.to_string(),
                partitions: p,
                z: cfg.stream.z(),
                rep,
                tuples,
                seconds,
                updates_per_second: tuples as f64 / seconds.max(1e-9),
                f1_queries: f1s,
                f2_queries: f2s,
                point_queries: reports.iter().map(|r| r.point_queries).sum(),
            });
        }
    }
    Ok(rows)
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[u64], q: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn latency_row(query: &'static str, cfg: &BenchConfig, p: usize, mut ns: Vec<u64>, max_retries: u64) -> LatencyRow {
    ns.sort_unstable();
    LatencyRow {
        schema_version: SCHEMA_VERSION,
        query,
        mode: cfg.mode.to_string(),
        partitions: p,
        z: cfg.stream.z(),
        samples: ns.len(),
        p50_ns: percentile(&ns, 0.5),
        p90_ns: percentile(&ns, 0.9),
        p99_ns: percentile(&ns, 0.99),
        max_ns: ns.last().copied().unwrap_or(0),
        mean_ns: ns.iter().sum::<u64>() as f64 / ns.len().max(1) as f64,
        max_retries,
    }
}

/// Query latencies under continuous updates. The updaters cycle over their
/// sub-streams; after the warmup, `queries` F1 and then `queries` F2 queries
/// are timed, paced at `query_rate` if it is positive.
pub fn run_latency(cfg: &BenchConfig) -> anyhow::Result<Vec<LatencyRow>> {
    ensure!(cfg.queries > 0, "latency runs need at least one query");
    let stream = cfg.stream.load()?;
    ensure!(!stream.is_empty(), "empty stream");
    let gap = (cfg.query_rate > 0.0).then(|| Duration::from_secs_f64(1.0 / cfg.query_rate));
    let mut rows = Vec::new();
    for &p in &cfg.partitions {
        let split = split_round_robin(&stream, p);
        let sk = LmqSketch::new(cfg.global(p))?;
        let opts = PoolOptions { cycle: true, ..pool_options(cfg) };
        let (_, (f1, f2, retries)) = pool::run(&sk, &split, &opts, |_ctl| {
            std::thread::sleep(Duration::from_millis(cfg.warmup_ms));
            let pause = || {
                if let Some(g) = gap {
                    std::thread::sleep(g);
                }
            };
            let mut f1 = Vec::with_capacity(cfg.queries);
            for _ in 0..cfg.queries {
                let start = Instant::now();
                std::hint::black_box(f1_query(&sk, cfg.mode));
                f1.push(start.elapsed().as_nanos() as u64);
                pause();
            }
            let mut q = F2Query::new(&sk, cfg.mode);
            let mut f2 = Vec::with_capacity(cfg.queries);
            let mut retries = 0;
            for _ in 0..cfg.queries {
                let start = Instant::now();
                let r = std::hint::black_box(q.run());
                f2.push(start.elapsed().as_nanos() as u64);
                retries = retries.max(r.retries);
                pause();
            }
            (f1, f2, retries)
        });
        rows.push(latency_row("f1", cfg, p, f1, 0));
        rows.push(latency_row("f2", cfg, p, f2, retries));
    }
    Ok(rows)
}

/// One rung of the sequential F2 ladder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Wide,
    Part,
    PartAs,
    Lmq,
    FastAgms,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Wide, Method::Part, Method::PartAs, Method::Lmq, Method::FastAgms];

    pub fn name(self) -> &'static str {
        match self {
            Method::Wide => "wide",
            Method::Part => "part",
            Method::PartAs => "partas",
            Method::Lmq => "lmq",
            Method::FastAgms => "fast-agms",
        }
    }
}

/// Estimates F2 of `stream` with one method, every method given the same
/// total memory of `p` partition budgets. Returns `(rows, cols, estimate)`,
/// `cols` being per partition except for the single-sketch methods.
pub fn estimate_f2(cfg: &BenchConfig, method: Method, stream: &[Tuple], p: usize, seed: u64) -> (usize, usize, u64) {
    let h = cfg.rows;
    let width = |slots, dfs| cfg.cols.unwrap_or_else(|| k_prime(cfg.budget_bytes, h, slots, dfs));
    match method {
        Method::Wide => {
            let k = p * width(0, 0);
            (h, k, wide_cmplus(stream, h, k, seed))
        }
        Method::Part => {
            let k = width(0, 0);
            (h, k, part_cmplus(stream, p, h, k, seed))
        }
        Method::PartAs => {
            let k = width(cfg.slots, 0);
            (h, k, partas_cmplus(stream, p, h, k, cfg.slots, seed))
        }
        Method::Lmq => {
            let k = width(cfg.slots, p);
            let global = BenchConfig { seed, ..cfg.clone() }.global(p);
            let global = lmq_core::GlobalConfig { cols: k, ..global };
            let mut sk = LmqSketch::new(global).expect("valid configuration");
            SequentialDriver::new(&sk).unwrap().run(&split_round_robin(stream, p));
            sk.quiesce();
            (h, k, f2_proj_seq(&sk.freeze()))
        }
        Method::FastAgms => {
            const D: usize = 6;
            let bytes = p * h * width(0, 0) * 4;
            let w = 1usize << ((bytes / (D * 8)).max(1).ilog2());
            (D, w, fast_agms_f2(stream, D, w, seed))
        }
    }
}

/// F2 accuracy of the ladder over `reps` seeds and every partition count.
/// Synthetic streams are regenerated per seed; file streams are reused and
/// only the hash seeds vary.
pub fn run_accuracy_seq(cfg: &BenchConfig, methods: &[Method]) -> anyhow::Result<Vec<AccuracyRow>> {
    let mut rows = Vec::new();
    for rep in 0..cfg.reps as u64 {
        let seed = cfg.seed + rep;
        let source = cfg.stream.reseeded(match &cfg.stream {
            crate::config::StreamSource::Zipf(spec) => spec.seed + rep,
            _ => 0,
        });
        let stream = source.load()?;
        let oracle = ExactOracle::from_stream(&stream).f2();
        ensure!(oracle > 0, "empty stream");
        for &p in &cfg.partitions {
            for &m in methods {
                let (h, k, est) = estimate_f2(cfg, m, &stream, p, seed);
                rows.push(AccuracyRow {
                    schema_version: SCHEMA_VERSION,
                    method: m.name(),
                    partitions: p,
                    z: cfg.stream.z(),
                    seed,
                    rows: h,
                    cols: k,
                    estimate: est,
                    oracle,
                    mape: mape(&[est as f64], &[oracle as f64]),
                });
            }
        }
    }
    Ok(rows)
}

/// Per-thread tuple counts of the shortest global prefix reaching weight
/// `trigger`, under round-robin splitting.
pub fn prefix_counts(stream: &[Tuple], p: usize, trigger: u64) -> anyhow::Result<Vec<u64>> {
    let mut acc = 0;
    let len = stream.iter().position(|t| {
        acc += t.value;
        acc >= trigger
    });
    let Some(last) = len else { bail!("trigger {trigger} exceeds the stream weight {acc}") };
    let len = last as u64 + 1;
    Ok((0..p as u64).map(|i| len / p as u64 + u64::from(i < len % p as u64)).collect())
}

/// The interval study. Execution A stops every updater at the trigger prefix
/// and evaluates the sequential query at quiescence (`q_start`). Execution B
/// parks the updaters at the same prefix, releases them and immediately runs
/// the concurrent query (`q_value`), then stops them and evaluates the
/// sequential query again at quiescence (`q_end`).
pub fn run_accuracy_conc(cfg: &BenchConfig) -> anyhow::Result<Vec<IvlRow>> {
    let stream = cfg.stream.load()?;
    let total: u64 = stream.iter().map(|t| t.value).sum();
    let trigger = cfg.trigger.unwrap_or(total / 2).max(1);
    ensure!(trigger <= total, "trigger {trigger} exceeds the stream weight {total}");
    let mut rows = Vec::new();
    for &p in &cfg.partitions {
        let split = split_round_robin(&stream, p);
        let counts = prefix_counts(&stream, p, trigger)?;
        for rep in 0..cfg.reps {
            let mut a = LmqSketch::new(cfg.global(p))?;
            let opts = PoolOptions { limits: Some(counts.clone()), ..pool_options(cfg) };
            let (reports, ()) = pool::run(&a, &split, &opts, |_| ());
            let done: Vec<u64> = reports.iter().map(|r| r.tuples).collect();
            ensure!(done == counts, "execution A processed {done:?}, expected {counts:?}");
            a.quiesce();
            let start = (a.f1_query(), sequential_f2(&mut a, cfg.mode));

            let mut b = LmqSketch::new(cfg.global(p))?;
            let opts = PoolOptions { pause_at: Some(counts.clone()), ..pool_options(cfg) };
            let (_, result) = pool::run(&b, &split, &opts, |ctl| {
                ctl.wait_quiet();
                let parked: Vec<u64> = (0..p).map(|i| ctl.tuples(i)).collect();
                let mut f2q = F2Query::new(&b, cfg.mode);
                ctl.open_gate();
                let f2 = f2q.run().value;
                let f1 = f1_query(&b, cfg.mode);
                ctl.stop();
                (parked, f1, f2)
            });
            let (parked, f1, f2) = result;
            ensure!(parked == counts, "execution B parked at {parked:?}, expected {counts:?}");
            b.quiesce();
            let end = (b.f1_query(), sequential_f2(&mut b, cfg.mode));

            let row = |query, q_start, q_value, q_end| IvlRow {
                schema_version: SCHEMA_VERSION,
                query,
                mode: cfg.mode.to_string(),
                partitions: p,
                z: cfg.stream.z(),
                rep,
                trigger,
                q_start,
                q_value,
                q_end,
            };
            rows.push(row("f1", start.0, f1, end.0));
            rows.push(row("f2", start.1, f2, end.1));
        }
    }
    Ok(rows)
}

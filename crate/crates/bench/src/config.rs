use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use lmq_core::reference::k_prime;
use lmq_core::{streamgen, GlobalConfig, StreamSpec, SyncMode, Tuple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Throughput,
    ThroughputWithQueries,
    Latency,
    AccuracySeq,
    AccuracyConc,
}

/// Structure variant under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Mode {
    Fullsync,
    Nosync,
    Lagom,
    /// Delegation with no buffer bound; global queries read without
    /// coordination, as in no-sync.
    DelegationPlain,
}

impl Mode {
    pub fn sync_mode(self) -> SyncMode {
        match self {
            Mode::Fullsync => SyncMode::FullSync,
            Mode::Nosync | Mode::DelegationPlain => SyncMode::NoSync,
            Mode::Lagom => SyncMode::Lagom,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Fullsync => "fullsync",
            Mode::Nosync => "nosync",
            Mode::Lagom => "lagom",
            Mode::DelegationPlain => "delegation-plain",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where tuples come from: `zipf:z,domain,length,seed` or a tuple file path
/// (`.csv` for text, anything else binary).
#[derive(Clone, Debug, PartialEq)]
pub enum StreamSource {
    Zipf(StreamSpec),
    File(PathBuf),
}

impl StreamSource {
    pub fn load(&self) -> anyhow::Result<Vec<Tuple>> {
        match self {
            StreamSource::Zipf(spec) => Ok(streamgen::gen_zipf(spec)),
            StreamSource::File(path) => {
                streamgen::read_any(path).with_context(|| format!("reading tuples from {}", path.display()))
            }
        }
    }

    /// Skew of a synthetic stream; unknown for files.
    pub fn z(&self) -> Option<f64> {
        match self {
            StreamSource::Zipf(spec) => Some(spec.z),
            StreamSource::File(_) => None,
        }
    }

    /// The same synthetic stream under another seed. Files are returned as is.
    pub fn reseeded(&self, seed: u64) -> Self {
        match self {
            StreamSource::Zipf(spec) => StreamSource::Zipf(StreamSpec { seed, ..*spec }),
            other => other.clone(),
        }
    }
}

impl FromStr for StreamSource {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s.strip_prefix("zipf:") {
            Some(spec) => Ok(StreamSource::Zipf(spec.parse()?)),
            None => Ok(StreamSource::File(PathBuf::from(s))),
        }
    }
}

/// Per-partition memory budget used to size the matrix when `cols` is unset.
pub const DEFAULT_BUDGET_BYTES: usize = 32 * 1024;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub experiment: Experiment,
    pub mode: Mode,
    pub partitions: Vec<usize>,
    pub rows: usize,
    /// Columns per partition; `None` derives them from the memory budget.
    pub cols: Option<usize>,
    pub slots: usize,
    pub bound: u64,
    pub stream: StreamSource,
    /// Global F1 and F2 queries per second, each.
    pub query_rate: f64,
    /// Fraction of update tuples followed by a point query.
    pub pq_frac: f64,
    pub reps: usize,
    /// F1 value at which the concurrent query fires.
    pub trigger: Option<u64>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Samples per query type in latency runs.
    pub queries: usize,
    pub warmup_ms: u64,
    pub budget_bytes: usize,
    pub pin: bool,
}

impl BenchConfig {
    /// Desk-scale defaults for `experiment`.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            mode: Mode::Lagom,
            partitions: vec![1, 2, 4, 8, 16],
            rows: 8,
            cols: None,
            slots: 16,
            bound: 1000,
            stream: StreamSource::Zipf(StreamSpec::new(1.5, 100_000, 10_000_000, 1)),
            query_rate: 1000.0,
            pq_frac: 0.001,
            reps: 1,
            trigger: None,
            out: None,
            seed: 0,
            queries: 100,
            warmup_ms: 100,
            budget_bytes: DEFAULT_BUDGET_BYTES,
            pin: true,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.partitions.is_empty() || self.partitions.contains(&0) {
            bail!("partition counts must be positive");
        }
        if !(self.query_rate >= 0.0 && self.query_rate.is_finite()) {
            bail!("query rate must be a finite value >= 0");
        }
        if !(0.0..=1.0).contains(&self.pq_frac) {
            bail!("point-query fraction must lie in [0, 1]");
        }
        if self.reps == 0 {
            bail!("at least one repetition is required");
        }
        if let StreamSource::Zipf(spec) = &self.stream {
            spec.validate()?;
        }
        for &p in &self.partitions {
            self.global(p).validate()?;
        }
        Ok(())
    }

    /// Matrix width of one partition: `cols` if set, otherwise the widest that
    /// fits the budget next to the filters.
    pub fn cols_for(&self, partitions: usize) -> usize {
        self.cols.unwrap_or_else(|| k_prime(self.budget_bytes, self.rows, self.slots, partitions))
    }

    pub fn global(&self, partitions: usize) -> GlobalConfig {
        let bound = match self.mode {
            Mode::DelegationPlain => None,
            _ => Some(self.bound),
        };
        GlobalConfig::new(partitions, self.rows, self.cols_for(partitions))
            .with_slots(self.slots)
            .with_bound(bound)
            .with_mode(self.mode.sync_mode())
            .with_seed(self.seed)
    }

    /// Tuples between point queries, 0 when disabled.
    pub fn pq_every(&self) -> u64 {
        if self.pq_frac > 0.0 {
            (1.0 / self.pq_frac).round().max(1.0) as u64
        } else {
            0
        }
    }
}

/// `LMQ_PIN=0` disables pinning updaters to cores.
pub fn pin_from_env() -> bool {
    std::env::var("LMQ_PIN").map_or(true, |v| v.trim() != "0")
}

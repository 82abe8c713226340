use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lmq_bench::config::pin_from_env;
use lmq_bench::{BenchConfig, Experiment, Mode, StreamSource};
use lmq_core::{streamgen, StreamSpec};

#[derive(Parser)]
#[command(name = "lmq", version, about = "Benchmarks for the partitioned multi-query frequency sketch")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and emit CSV rows.
    Bench(BenchArgs),
    /// Generate a Zipf stream into a tuple file (CSV if the path ends in .csv).
    Gen {
        /// z,domain,length,seed
        #[arg(long)]
        zipf: StreamSpec,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(value_enum)]
    experiment: Experiment,
    #[arg(long, value_enum, default_value_t = Mode::Lagom)]
    mode: Mode,
    /// Partition counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    partitions: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    rows: usize,
    /// Columns per partition. Defaults to the widest that fits --budget.
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, default_value_t = 16)]
    slots: usize,
    /// Buffered occurrences per delegation filter before handover.
    #[arg(long, default_value_t = 1000)]
    bound: u64,
    /// zipf:z,domain,length,seed or a tuple file path.
    #[arg(long, default_value = "zipf:1.5,100000,10000000,1")]
    stream: StreamSource,
    /// Global F1 and F2 queries per second, each.
    #[arg(long, default_value_t = 1000.0)]
    query_rate: f64,
    /// Fraction of update tuples followed by a point query.
    #[arg(long, default_value_t = 0.001)]
    pq_frac: f64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// F1 value that triggers the concurrent query (accuracy-conc). Defaults
    /// to half the stream weight.
    #[arg(long)]
    trigger: Option<u64>,
    /// Append rows to this CSV file instead of printing them.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hash seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timed queries per type (latency).
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 100)]
    warmup_ms: u64,
    /// Per-partition memory budget in bytes, used when --cols is unset.
    #[arg(long, default_value_t = lmq_bench::config::DEFAULT_BUDGET_BYTES)]
    budget: usize,
}

impl From<BenchArgs> for BenchConfig {
    fn from(a: BenchArgs) -> Self {
        BenchConfig {
            experiment: a.experiment,
            mode: a.mode,
            partitions: a.partitions,
            rows: a.rows,
            cols: a.cols,
            slots: a.slots,
            bound: a.bound,
            stream: a.stream,
            query_rate: a.query_rate,
            pq_frac: a.pq_frac,
            reps: a.reps,
            trigger: a.trigger,
            out: a.out,
            seed: a.seed,
            queries: a.queries,
            warmup_ms: a.warmup_ms,
            budget_bytes: a.budget,
            pin: pin_from_env(),
        }
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Bench(args) => {
            let cfg = BenchConfig::from(args);
            let n = lmq_bench::run(&cfg, std::io::stdout().lock())?;
            if let Some(out) = &cfg.out {
                eprintln!("appended {n} rows to {}", out.display());
            }
        }
        Command::Gen { zipf, out } => {
            let tuples = streamgen::gen_zipf(&zipf);
            let csv = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            if csv {
                streamgen::write_csv(&out, &tuples)
            } else {
                streamgen::write_tuples(&out, &tuples)
            }
            .with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} tuples to {}", tuples.len(), out.display());
        }
    }
    Ok(())
}

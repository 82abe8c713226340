//! Throughput, latency and accuracy experiments over `lmq-core`, with CSV
//! output.

pub mod config;
pub mod experiments;
pub mod output;

use std::io::Write;

pub use config::{BenchConfig, Experiment, Mode, StreamSource};
pub use experiments::Method;

/// Runs the configured experiment and appends its rows to `cfg.out`, or
/// writes them to `stdout` when no output file is set. Returns the row count.
pub fn run(cfg: &BenchConfig, stdout: impl Write) -> anyhow::Result<usize> {
    cfg.validate()?;
    fn emit<T: serde::Serialize>(cfg: &BenchConfig, rows: Vec<T>, stdout: impl Write) -> anyhow::Result<usize> {
        match &cfg.out {
            Some(path) => output::append_rows(path, &rows)?,
            None => output::write_rows(stdout, &rows)?,
        }
        Ok(rows.len())
    }
    match cfg.experiment {
        Experiment::Throughput => emit(cfg, experiments::run_throughput(cfg, false)?, stdout),
        Experiment::ThroughputWithQueries => emit(cfg, experiments::run_throughput(cfg, true)?, stdout),
        Experiment::Latency => emit(cfg, experiments::run_latency(cfg)?, stdout),
        Experiment::AccuracySeq => emit(cfg, experiments::run_accuracy_seq(cfg, &Method::ALL)?, stdout),
        Experiment::AccuracyConc => emit(cfg, experiments::run_accuracy_conc(cfg)?, stdout),
    }
}

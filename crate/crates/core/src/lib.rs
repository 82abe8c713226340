//! A concurrent, partitioned frequency sketch answering point queries, F1 and
//! F2 from one composite data structure.
//!
//! The input domain is split into `P` partitions. Each partition is owned by one
//! updater thread and holds an augmented Count-Min sketch (an exact filter for
//! heavy keys in front of a CMS whose per-row sums of squares are maintained
//! incrementally). Updates for keys owned by another partition are buffered in
//! small delegation filters and handed over in bulk to the owner.
//!
//! Three synchronization designs are available for global queries:
//!
//! * [`SyncMode::FullSync`]: a readers-writer lock; updates share it, global
//!   queries take it exclusively.
//! * [`SyncMode::NoSync`]: global queries read shared state with no
//!   coordination at all.
//! * [`SyncMode::Lagom`]: F2 queries take an atomic snapshot of each partition
//!   through a version pair and a scan flag, and project the heavy-key
//!   occurrences still buffered in delegation filters.
//!
//! [`reference`] holds the sequential estimator ladder and exact oracles,
//! [`streamgen`] synthetic Zipf streams and tuple files, and [`pool`] a small
//! runtime driving one updater thread per partition.

pub mod asketch;
pub mod delegation;
pub mod error;
pub mod hash;
pub mod pool;
pub mod queries;
pub mod reference;
pub mod sketch;
pub mod streamgen;

pub use asketch::{af_lookup, ASketch, AugFilter, AugSlot};
pub use delegation::{DelegationFilter, GlobalConfig, LmqSketch, SequentialDriver, SyncMode, Updater};
pub use error::{Error, Result};
pub use hash::{ColumnHash, FixedPlacement, MultiplyShift, Partitioner};
pub use queries::{LagomScanner, QueryResult, ScanStats};
pub use sketch::{CountMin, SketchConfig};
pub use streamgen::StreamSpec;

/// A stream element: `value` occurrences of `key`. Values are strictly positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tuple {
    pub key: u64,
    pub value: u64,
}

impl Tuple {
    pub const fn new(key: u64, value: u64) -> Self {
        Self { key, value }
    }

    pub const fn unit(key: u64) -> Self {
        Self { key, value: 1 }
    }
}

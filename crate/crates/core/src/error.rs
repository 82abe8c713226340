use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("row {row} out of range for a sketch with {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },

    #[error("key {key} is owned by partition {owner}, not {caller}")]
    NotOwner { key: u64, owner: usize, caller: usize },

    #[error("updater handle for partition {0} is already claimed")]
    UpdaterClaimed(usize),

    #[error("another F2 scanner is already active")]
    ScannerBusy,

    #[error("point query for key {0} timed out waiting for the owner")]
    QueryTimeout(u64),

    #[error("bad magic in tuple file header")]
    BadMagic,

    #[error("unsupported tuple file version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("truncated tuple file: header announces {expected} tuples, body holds {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("invalid tuple at record {record}: {reason}")]
    InvalidTuple { record: u64, reason: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

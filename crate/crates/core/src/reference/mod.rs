//! Sequential estimators and exact oracles.
//!
//! The F2 ladder, from least to most partitioned: one wide CMS ([`wide_cmplus`]),
//! `P` independent CMSs ([`part_cmplus`]), `P` augmented sketches
//! ([`partas_cmplus`]), and the evaluations of the concurrent estimators on a
//! frozen structure ([`f2_all_seq`], [`f2_proj_seq`]). [`FastAgms`] is the
//! sign-sketch baseline.

mod fast_agms;
mod frozen;
mod ladder;
mod memory;
mod oracle;

pub use fast_agms::{fast_agms_f2, FastAgms};
pub use frozen::{f2_all_seq, f2_proj_seq, FrozenPartition, FrozenState};
pub use ladder::{part_cmplus, part_cmplus_with, partas_cmplus, wide_cmplus, wide_cmplus_with};
pub use memory::{k_prime, AF_SLOT_BYTES, COUNTER_BYTES, DF_ENTRY_BYTES};
pub use oracle::{mape, ExactOracle};

use std::collections::HashMap;

use crate::Tuple;

/// Exact per-key frequencies of a stream.
#[derive(Clone, Debug, Default)]
pub struct ExactOracle {
    pub freq: HashMap<u64, u64>,
    pub total_weight: u64,
}

impl ExactOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_stream(stream: &[Tuple]) -> Self {
        let mut o = Self::new();
        o.extend(stream);
        o
    }

    pub fn insert(&mut self, key: u64, value: u64) {
        *self.freq.entry(key).or_insert(0) += value;
        self.total_weight += value;
    }

    pub fn extend(&mut self, stream: &[Tuple]) {
        for t in stream {
            self.insert(t.key, t.value);
        }
    }

    pub fn frequency(&self, key: u64) -> u64 {
        self.freq.get(&key).copied().unwrap_or(0)
    }

    pub fn f1(&self) -> u64 {
        self.total_weight
    }

    pub fn f2(&self) -> u64 {
        self.freq.values().map(|&f| f * f).sum()
    }
}

/// Mean absolute percentage error, `mean(|e - t| / t) * 100`.
///
/// # Panics
/// If the slices differ in length, are empty, or a truth is zero.
pub fn mape(estimates: &[f64], truths: &[f64]) -> f64 {
    assert_eq!(estimates.len(), truths.len(), "mape needs paired values");
    assert!(!truths.is_empty(), "mape of nothing");
    let total: f64 = estimates
        .iter()
        .zip(truths)
        .map(|(&e, &t)| {
            assert!(t > 0.0, "mape needs positive truths");
            (e - t).abs() / t
        })
        .sum();
    total / truths.len() as f64 * 100.0
}

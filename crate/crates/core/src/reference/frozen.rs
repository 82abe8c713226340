use crate::asketch::AugSlot;

/// A copy of one partition, taken with no updater or scanner running.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenPartition {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols` counters.
    pub counters: Vec<u32>,
    /// Per-row sums of squares as maintained by the sketch.
    pub partials: Vec<u64>,
    pub slots: Vec<AugSlot>,
    /// `inbound[i]` holds the `(key, count)` entries buffered in
    /// `dfs[i][this partition]`.
    pub inbound: Vec<Vec<(u64, u64)>>,
}

impl FrozenPartition {
    /// An all-zero partition with no filter entries and `p` empty inbound
    /// delegation filters.
    pub fn empty(rows: usize, cols: usize, p: usize) -> Self {
        Self {
            rows,
            cols,
            counters: vec![0; rows * cols],
            partials: vec![0; rows],
            slots: Vec::new(),
            inbound: vec![Vec::new(); p],
        }
    }

    /// `min_j sum_k counters[j][k]^2`, recomputed from the counters.
    pub fn cmplus(&self) -> u64 {
        self.counters
            .chunks(self.cols.max(1))
            .map(|row| row.iter().map(|&c| c as u64 * c as u64).sum::<u64>())
            .min()
            .unwrap_or(0)
    }

    /// Occurrences of `key` buffered toward this partition.
    pub fn buffered(&self, key: u64) -> u64 {
        self.inbound.iter().flatten().filter(|(k, _)| *k == key).map(|(_, c)| c).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrozenState {
    pub partitions: Vec<FrozenPartition>,
}

/// F2 from CM+ plus each resident key's exact count, including its buffered
/// occurrences: `sum_i [cmplus_i + sum_a ((count_a + buffered_a)^2 - old_a^2)]`.
pub fn f2_all_seq(state: &FrozenState) -> u64 {
    let mut total: i128 = 0;
    for part in &state.partitions {
        total += part.cmplus() as i128;
        for s in &part.slots {
            let freq = (s.count + part.buffered(s.key)) as i128;
            let old = s.old_count as i128;
            total += freq * freq - old * old;
        }
    }
    total.max(0) as u64
}

/// F2 from CM+ plus each resident key's count and projected buffered
/// occurrences, `count + P * projection / 2`, in double precision and
/// truncated once at the end.
pub fn f2_proj_seq(state: &FrozenState) -> u64 {
    let pf = state.partitions.len() as f64;
    let mut result = 0.0f64;
    for part in &state.partitions {
        let mut local = part.cmplus() as f64;
        for s in &part.slots {
            let freq = s.count as f64 + pf * s.projection / 2.0;
            let old = s.old_count as f64;
            local += freq * freq - old * old;
        }
        result += local;
    }
    result as u64
}

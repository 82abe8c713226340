//! Per-partition memory accounting used to size the matrix when filters take
//! part of the budget.

pub const COUNTER_BYTES: usize = 4;
/// Key, count, old count and projection, 8 bytes each.
pub const AF_SLOT_BYTES: usize = 32;
/// Key and buffered count.
pub const DF_ENTRY_BYTES: usize = 16;

/// Widest `K'` with `rows * K' * 4 + slots * 32 + dfs * slots * 16 <= budget`,
/// where `dfs` is the number of delegation filters a partition owns (`P` with
/// delegation, 0 without). Zero if the filters alone exceed the budget.
pub fn k_prime(budget_bytes: usize, rows: usize, slots: usize, dfs: usize) -> usize {
    let filters = slots * AF_SLOT_BYTES + dfs * slots * DF_ENTRY_BYTES;
    budget_bytes.saturating_sub(filters) / (rows * COUNTER_BYTES)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_of_32_kib() {
        assert_eq!(k_prime(32 * 1024, 8, 0, 0), 1024);
        assert_eq!(k_prime(32 * 1024, 8, 16, 0), 1008);
        assert_eq!(k_prime(32 * 1024, 8, 16, 16), 880);
        assert_eq!(k_prime(100, 8, 16, 16), 0);
    }

    #[test]
    fn k_prime_is_maximal() {
        for (b, h, c, p) in [(32768, 8, 16, 4), (5000, 3, 7, 2), (4096, 1, 1, 1)] {
            let k = k_prime(b, h, c, p);
            let used = |k: usize| h * k * COUNTER_BYTES + c * AF_SLOT_BYTES + p * c * DF_ENTRY_BYTES;
            assert!(used(k) <= b);
            assert!(used(k + 1) > b);
        }
    }
}

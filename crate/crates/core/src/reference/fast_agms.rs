use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Tuple;

const MERSENNE_61: u64 = (1 << 61) - 1;

#[inline]
fn mod_m61(x: u128) -> u64 {
    let m = MERSENNE_61 as u128;
    let x = (x & m) + (x >> 61);
    let lo = ((x & m) + (x >> 61)) as u64;
    if lo >= MERSENNE_61 {
        lo - MERSENNE_61
    } else {
        lo
    }
}

#[inline]
fn mul_m61(a: u64, b: u64) -> u64 {
    mod_m61(a as u128 * b as u128)
}

/// Horner evaluation of a polynomial over GF(2^61 - 1); `coeffs[0]` is the
/// leading coefficient.
#[inline]
fn poly(coeffs: &[u64], x: u64) -> u64 {
    coeffs.iter().fold(0, |acc, &c| {
        let s = mul_m61(acc, x) + c;
        if s >= MERSENNE_61 {
            s - MERSENNE_61
        } else {
            s
        }
    })
}

/// Fast-AGMS sketch: each row adds `sign(a) * v` to one bucket, and F2 is the
/// median over rows of the row's sum of squared buckets.
///
/// Signs come from a degree-3 polynomial over GF(2^61 - 1) (4-wise
/// independent), buckets from a separate degree-1 polynomial.
#[derive(Clone, Debug)]
pub struct FastAgms {
    rows: usize,
    cols: usize,
    counters: Vec<i64>,
    sign: Vec<[u64; 4]>,
    bucket: Vec<[u64; 2]>,
}

impl FastAgms {
    pub fn new(rows: usize, cols: usize, seed: u64) -> Self {
        assert!(rows >= 1 && cols >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeff = || rng.gen_range(0..MERSENNE_61);
        let sign = (0..rows).map(|_| [coeff(), coeff(), coeff(), coeff()]).collect();
        let bucket = (0..rows).map(|_| [coeff().max(1), coeff()]).collect();
        Self { rows, cols, counters: vec![0; rows * cols], sign, bucket }
    }

    #[inline]
    fn reduce_key(key: u64) -> u64 {
        mod_m61(key as u128)
    }

    pub fn update(&mut self, key: u64, value: u64) {
        let x = Self::reduce_key(key);
        for r in 0..self.rows {
            let col = (poly(&self.bucket[r], x) % self.cols as u64) as usize;
            let v = value as i64;
            let delta = if poly(&self.sign[r], x) & 1 == 1 { v } else { -v };
            self.counters[r * self.cols + col] += delta;
        }
    }

    /// Median of per-row estimates; the lower middle one for an even row count.
    pub fn f2(&self) -> u64 {
        let mut est: Vec<u128> = self
            .counters
            .chunks(self.cols)
            .map(|row| row.iter().map(|&c| (c as i128 * c as i128) as u128).sum())
            .collect();
        est.sort_unstable();
        est[(self.rows - 1) / 2].min(u64::MAX as u128) as u64
    }
}

pub fn fast_agms_f2(stream: &[Tuple], rows: usize, cols: usize, seed: u64) -> u64 {
    let mut s = FastAgms::new(rows, cols, seed);
    for t in stream {
        s.update(t.key, t.value);
    }
    s.f2()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_arithmetic() {
        assert_eq!(mod_m61(MERSENNE_61 as u128), 0);
        assert_eq!(mod_m61(u128::MAX), (u128::MAX % MERSENNE_61 as u128) as u64);
        assert_eq!(mul_m61(MERSENNE_61 - 1, MERSENNE_61 - 1), 1);
        // 2x^2 + 3x + 5 at x = 7.
        assert_eq!(poly(&[2, 3, 5], 7), 124);
    }

    #[test]
    fn empty_and_single_key() {
        assert_eq!(fast_agms_f2(&[], 6, 64, 1), 0);
        assert_eq!(fast_agms_f2(&[Tuple::new(42, 7)], 6, 64, 1), 49);
        assert_eq!(fast_agms_f2(&[Tuple::new(42, 3), Tuple::new(42, 4)], 5, 8, 2), 49);
    }

    #[test]
    fn signs_are_balanced() {
        let s = FastAgms::new(1, 1, 11);
        let x = (0..100_000u64).map(|k| poly(&s.sign[0], FastAgms::reduce_key(k)) & 1).sum::<u64>();
        assert!((49_000..51_000).contains(&x), "{x}");
    }

    #[test]
    fn lower_median_for_even_rows() {
        let mut s = FastAgms::new(4, 1, 1);
        s.counters = vec![1, 3, 2, 4];
        assert_eq!(s.f2(), 4);
    }
}

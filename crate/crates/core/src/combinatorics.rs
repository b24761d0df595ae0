//! Binomial coefficients and lexicographic enumeration of `b`-subsets.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::embedding::{Batch, BatchCollection};
use crate::error::{Error, Result};

/// Largest number of batches [`enumerate_batches`] will materialize by default.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// `C(n, k)` in `u128`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        match acc.checked_mul((n - i) as u128) {
            Some(x) => acc = x / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Exact `C(n, k)`.
pub fn binomial_big(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Ratio of two big integers as `f64`, without overflowing either operand.
pub fn big_ratio(num: &BigUint, den: &BigUint) -> f64 {
    let shift = den.bits().saturating_sub(1000);
    let n = (num >> shift).to_f64().unwrap_or(f64::INFINITY);
    let d = (den >> shift).to_f64().unwrap_or(f64::INFINITY);
    n / d
}

/// The `rank`-th `b`-subset of `0..n` in lexicographic order.
pub fn unrank_subset(n: usize, b: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(b);
    let mut next = 0;
    for slot in 0..b {
        let remaining = b - slot - 1;
        loop {
            let with_next = binomial(n - next - 1, remaining);
            if rank < with_next {
                out.push(next);
                next += 1;
                break;
            }
            rank -= with_next;
            next += 1;
        }
    }
    out
}

/// Advances a sorted `b`-subset of `0..n` to its lexicographic successor.
fn next_subset(current: &mut [usize], n: usize) -> bool {
    let b = current.len();
    for pos in (0..b).rev() {
        if current[pos] < n - b + pos {
            current[pos] += 1;
            for later in pos + 1..b {
                current[later] = current[later - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// All `C(n, b)` batches in lexicographic order, refusing more than `cap`.
pub fn enumerate_batches_capped(n: usize, b: usize, cap: u128) -> Result<BatchCollection> {
    if b < 2 || b > n {
        return Err(Error::InvalidArgument(format!(
            "batch size must satisfy 2 <= b <= n, got b = {b}, n = {n}"
        )));
    }
    let count = binomial(n, b);
    if count > cap {
        return Err(Error::CapExceeded {
            what: "mini-batch",
            count,
            cap,
        });
    }
    let mut batches = Vec::with_capacity(count as usize);
    let mut current: Vec<usize> = (0..b).collect();
    loop {
        batches.push(Batch::from_sorted_unchecked(current.clone()));
        if !next_subset(&mut current, n) {
            break;
        }
    }
    BatchCollection::general(batches)
}

/// All `C(n, b)` batches in lexicographic order.
pub fn enumerate_batches(n: usize, b: usize) -> Result<BatchCollection> {
    enumerate_batches_capped(n, b, DEFAULT_ENUMERATION_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(8, 2), 28);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(64, 32), 1_832_624_140_942_590_534);
        assert_eq!(binomial_big(64, 32), BigUint::from(1_832_624_140_942_590_534u128));
        assert_eq!(binomial(300, 150), u128::MAX);
    }

    #[test]
    fn enumerates_lexicographically() {
        let c = enumerate_batches(4, 2).unwrap();
        let got: Vec<Vec<usize>> = c.batches().iter().map(|b| b.indices().to_vec()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(enumerate_batches(8, 2).unwrap().len(), 28);
        let single = enumerate_batches(3, 3).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.batches()[0].indices(), &[0, 1, 2]);
    }

    #[test]
    fn cap_refusal_names_count() {
        let err = enumerate_batches_capped(10, 5, 100).unwrap_err();
        assert_eq!(
            err,
            Error::CapExceeded {
                what: "mini-batch",
                count: 252,
                cap: 100
            }
        );
        assert!(err.to_string().contains("252"));
    }

    #[test]
    fn unrank_matches_enumeration() {
        for (n, b) in [(5, 2), (6, 3), (7, 4), (4, 4)] {
            let all = enumerate_batches(n, b).unwrap();
            for (rank, batch) in all.batches().iter().enumerate() {
                assert_eq!(unrank_subset(n, b, rank as u128), batch.indices());
            }
        }
    }

    #[test]
    fn big_ratio_handles_huge_operands() {
        let den = binomial_big(3000, 1500);
        let num = &den * BigUint::from(3u32);
        assert!((big_ratio(&num, &den) - 3.0).abs() < 1e-12);
    }
}

//! Exhaustive balanced partitioning, used as an oracle for the spectral
//! selector.

use crate::batching::AffinityGraph;
use crate::combinatorics::binomial;
use crate::embedding::{Batch, BatchCollection};
use crate::error::{Error, Result};

pub const PARTITION_CAP: u128 = 100_000;

/// Number of ways to split `n` items into unlabeled groups of size `b`.
pub fn balanced_partition_count(n: usize, b: usize) -> u128 {
    if b == 0 || !n.is_multiple_of(b) {
        return 0;
    }
    let mut count: u128 = 1;
    let mut remaining = n;
    while remaining > 0 {
        count = count.saturating_mul(binomial(remaining - 1, b - 1));
        remaining -= b;
    }
    count
}

/// Every partition of `0..n` into groups of size `b`, in lexicographic
/// order of the encoding "groups sorted by their smallest member".
pub fn balanced_partitions(n: usize, b: usize, cap: u128) -> Result<Vec<Vec<Vec<usize>>>> {
    if b < 2 || !n.is_multiple_of(b) {
        return Err(Error::NotDivisible { n, divisor: b });
    }
    let count = balanced_partition_count(n, b);
    if count > cap {
        return Err(Error::CapExceeded {
            what: "balanced partition",
            count,
            cap,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut groups = Vec::new();
    let mut used = vec![false; n];
    extend(n, b, &mut used, &mut groups, &mut out);
    Ok(out)
}

fn extend(
    n: usize,
    b: usize,
    used: &mut Vec<bool>,
    groups: &mut Vec<Vec<usize>>,
    out: &mut Vec<Vec<Vec<usize>>>,
) {
    let Some(leader) = (0..n).find(|&i| !used[i]) else {
        out.push(groups.clone());
        return;
    };
    used[leader] = true;
    let free: Vec<usize> = (leader + 1..n).filter(|&i| !used[i]).collect();
    let mut pick: Vec<usize> = (0..b - 1).collect();
    loop {
        let mut group = vec![leader];
        group.extend(pick.iter().map(|&p| free[p]));
        for &m in &group[1..] {
            used[m] = true;
        }
        groups.push(group);
        extend(n, b, used, groups, out);
        let group = groups.pop().unwrap_or_default();
        for &m in &group[1..] {
            used[m] = false;
        }
        if !advance(&mut pick, free.len()) {
            break;
        }
    }
    used[leader] = false;
}

fn advance(pick: &mut [usize], n: usize) -> bool {
    let k = pick.len();
    for pos in (0..k).rev() {
        if pick[pos] < n - k + pos {
            pick[pos] += 1;
            for later in pos + 1..k {
                pick[later] = pick[later - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Sum of `A_ij` over unordered pairs inside the same batch.
pub fn within_batch_weight(a: &AffinityGraph, coll: &BatchCollection) -> f64 {
    coll.batches()
        .iter()
        .map(|b| group_weight(a, b.indices()))
        .sum()
}

fn group_weight(a: &AffinityGraph, members: &[usize]) -> f64 {
    let m = a.matrix();
    let mut w = 0.0;
    for (x, &i) in members.iter().enumerate() {
        for &j in &members[x + 1..] {
            w += m[(i, j)];
        }
    }
    w
}

/// Sum of `A_ij` over all unordered pairs.
pub fn total_edge_weight(a: &AffinityGraph) -> f64 {
    let m = a.matrix();
    let n = m.nrows();
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| m[(i, j)])
        .sum()
}

/// Sum of `A_ij` over unordered pairs split across batches.
pub fn cut_weight(a: &AffinityGraph, coll: &BatchCollection) -> f64 {
    let n = a.len();
    let mut owner = vec![usize::MAX; n];
    for (g, b) in coll.batches().iter().enumerate() {
        for &i in b.indices() {
            owner[i] = g;
        }
    }
    let m = a.matrix();
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| owner[i] != owner[j])
        .map(|(i, j)| m[(i, j)])
        .sum()
}

/// Balanced partition maximizing within-batch weight (equivalently
/// minimizing the cut), by exhaustive search. The first optimum in
/// enumeration order wins ties.
pub fn brute_force_min_cut(a: &AffinityGraph, b: usize) -> Result<BatchCollection> {
    let n = a.len();
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    for groups in balanced_partitions(n, b, PARTITION_CAP)? {
        let w: f64 = groups.iter().map(|g| group_weight(a, g)).sum();
        if best.as_ref().is_none_or(|(bw, _)| w > *bw) {
            best = Some((w, groups));
        }
    }
    let (_, groups) = best.ok_or(Error::EmptyCollection)?;
    let batches = groups
        .into_iter()
        .map(|g| Batch::new(g, n))
        .collect::<Result<Vec<_>>>()?;
    BatchCollection::partition(batches, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;

    #[test]
    fn counts() {
        assert_eq!(balanced_partition_count(4, 2), 3);
        assert_eq!(balanced_partition_count(6, 3), 10);
        assert_eq!(balanced_partition_count(8, 2), 105);
        assert_eq!(balanced_partition_count(8, 4), 35);
        for (n, b) in [(4, 2), (6, 2), (6, 3), (8, 4), (9, 3)] {
            let all = balanced_partitions(n, b, PARTITION_CAP).unwrap();
            assert_eq!(all.len() as u128, balanced_partition_count(n, b));
        }
    }

    #[test]
    fn dominant_edges_forced() {
        let mut m = DMatrix::from_element(4, 4, 0.1);
        m.fill_diagonal(0.0);
        m[(0, 1)] = 5.0;
        m[(1, 0)] = 5.0;
        m[(2, 3)] = 4.0;
        m[(3, 2)] = 4.0;
        let a = AffinityGraph::new(m).unwrap();
        let p = brute_force_min_cut(&a, 2).unwrap();
        let groups: Vec<&[usize]> = p.batches().iter().map(|b| b.indices()).collect();
        assert_eq!(groups, vec![&[0, 1][..], &[2, 3][..]]);
    }

    #[test]
    fn within_plus_cut_is_total() {
        let mut rng = crate::rng::stream(2, 0);
        let mut m = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(0.0..1.0));
        m = &m + m.transpose();
        m.fill_diagonal(0.0);
        let a = AffinityGraph::new(m).unwrap();
        let p = brute_force_min_cut(&a, 3).unwrap();
        let total = total_edge_weight(&a);
        assert!((within_batch_weight(&a, &p) + cut_weight(&a, &p) - total).abs() < 1e-12);
        for groups in balanced_partitions(6, 3, PARTITION_CAP).unwrap() {
            let batches = groups.into_iter().map(|g| Batch::new(g, 6).unwrap()).collect();
            let c = BatchCollection::partition(batches, 6).unwrap();
            assert!(within_batch_weight(&a, &c) <= within_batch_weight(&a, &p));
        }
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            balanced_partitions(16, 2, PARTITION_CAP),
            Err(Error::CapExceeded { .. })
        ));
    }
}

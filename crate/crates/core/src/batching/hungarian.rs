//! Hungarian algorithm (shortest augmenting paths with potentials) for
//! square minimum-cost assignment.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Minimum-cost perfect matching of rows to columns.
///
/// Returns `assignment[row] = column` and the total cost. Runs in `O(n^3)`.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Result<(Vec<usize>, f64)> {
    let n = cost.nrows();
    if n != cost.ncols() {
        return Err(Error::NotSquare {
            rows: n,
            cols: cost.ncols(),
        });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("assignment cost".into()));
    }
    // One-based arrays; index 0 is the virtual root of each augmenting tree.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            assignment[col_owner[j] - 1] = j - 1;
        }
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[(r, c)])
        .sum();
    Ok((assignment, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn brute_force(cost: &DMatrix<f64>) -> f64 {
        fn go(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            let n = cost.nrows();
            if row == n {
                *best = best.min(acc);
                return;
            }
            for c in 0..n {
                if !used[c] {
                    used[c] = true;
                    go(cost, row + 1, used, acc + cost[(row, c)], best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        go(cost, 0, &mut vec![false; cost.nrows()], 0.0, &mut best);
        best
    }

    #[test]
    fn textbook_instance() {
        let cost = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        let (assignment, total) = min_cost_assignment(&cost).unwrap();
        assert_eq!(total, 5.0);
        assert_eq!(assignment, vec![1, 0, 2]);
    }

    #[test]
    fn matches_permutation_search() {
        let mut rng = crate::rng::stream(5, 0);
        for n in 1..=7 {
            for _ in 0..20 {
                let cost = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..10.0));
                let (assignment, total) = min_cost_assignment(&cost).unwrap();
                let mut cols = assignment.clone();
                cols.sort_unstable();
                assert_eq!(cols, (0..n).collect::<Vec<_>>());
                assert!((total - brute_force(&cost)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_rectangular() {
        assert!(min_cost_assignment(&DMatrix::zeros(2, 3)).is_err());
    }
}

//! Headless property battery behind the `verify` subcommand.
//!
//! Each check draws its random instances from streams derived from one
//! seed and reports a single pass/fail line.

use std::f64::consts::{E, FRAC_1_SQRT_2};

use nalgebra::DMatrix;
use num_bigint::BigUint;
use rand::seq::index::sample;
use rand::Rng;

use crate::batching::mincut::{balanced_partition_count, balanced_partitions};
use crate::batching::{
    assignment_cost, balanced_assign, build_affinity, chunked_sc_select, laplacian,
    min_cost_assignment, sc_select, symmetric_eigs,
};
use crate::combinatorics::enumerate_batches;
use crate::embedding::{normalize_columns, Batch, BatchCollection, EmbeddingPair};
use crate::error::Result;
use crate::geometry::{make_cross_polytope, make_simplex_etf};
use crate::loss::{
    batch_gradient, contrastive_loss, full_loss, jensen_lower_bound, lm_gradient, logit_loss,
    one_sided_loss,
};
use crate::optim::{gamma_numerators, mean_gradient, run_optimizer, OptimizerConfig, Variant};
use crate::rng::{self, StreamRng};
use crate::toy::{toy_batch_loss, toy_gradient, ToyState};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

type Check = fn(&mut StreamRng) -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 17] = [
    ("closed-form-losses", closed_form_losses),
    ("non-scaling", non_scaling),
    ("lm-gradient-fd", lm_gradient_fd),
    ("batch-gradient-fd", batch_gradient_fd),
    ("toy-gradient-fd", toy_gradient_fd),
    ("batch-gradient-bound", batch_gradient_bound),
    ("lm-gradient-bound", lm_gradient_bound),
    ("lm-gradient-lipschitz", lm_gradient_lipschitz),
    ("jensen-lower-bound", jensen_below_loss),
    ("gamma-sums", gamma_sums),
    ("etf-stationarity", etf_stationarity),
    ("cross-polytope-structure", cross_polytope_structure),
    ("non-quasi-convexity", non_quasi_convexity),
    ("hungarian-exhaustive", hungarian_exhaustive),
    ("partition-validity", partition_validity),
    ("laplacian-psd", laplacian_psd),
    ("determinism", determinism),
];

/// Names of all checks, in run order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(name, _)| *name).collect()
}

/// Runs every check. Check `i` draws from stream `i` of `seed`.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut rng = rng::stream(seed, i as u64);
            match check(&mut rng) {
                Ok((passed, detail)) => CheckResult::new(name, passed, detail),
                Err(e) => CheckResult::new(name, false, format!("error: {e}")),
            }
        })
        .collect()
}

fn random_emb(rng: &mut StreamRng, d: usize, n: usize) -> Result<EmbeddingPair> {
    EmbeddingPair::random(d, n, rng)
}

fn central_diff<F: Fn(&DMatrix<f64>) -> Result<f64>>(
    x: &DMatrix<f64>,
    f: F,
) -> Result<DMatrix<f64>> {
    let h = 1e-5;
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[(i, j)] += h;
            minus[(i, j)] -= h;
            out[(i, j)] = (f(&plus)? - f(&minus)?) / (2.0 * h);
        }
    }
    Ok(out)
}

fn rel_err(fd: &DMatrix<f64>, an: &DMatrix<f64>) -> f64 {
    (fd - an).norm() / an.norm().max(f64::MIN_POSITIVE)
}

fn basis(n: usize) -> Result<EmbeddingPair> {
    EmbeddingPair::symmetric(DMatrix::identity(n, n))
}

fn collapsed(n: usize) -> Result<EmbeddingPair> {
    let mut u = DMatrix::zeros(n, n);
    u.row_mut(0).fill(1.0);
    EmbeddingPair::symmetric(u)
}

fn mean_batch_loss(emb: &EmbeddingPair, b: usize, one_sided: bool) -> Result<f64> {
    let all = enumerate_batches(emb.len(), b)?;
    let mut sum = 0.0;
    for batch in all.batches() {
        sum += if one_sided {
            one_sided_loss(emb, batch)?
        } else {
            contrastive_loss(emb, batch)?
        };
    }
    Ok(sum / all.len() as f64)
}

fn closed_form_losses(_: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for n in 2..=8 {
        let full = Batch::full(n)?;
        let nf = n as f64;
        let (be, ce) = (basis(n)?, collapsed(n)?);
        worst = worst.max((one_sided_loss(&be, &full)? - ((E + nf - 1.0).ln() - 1.0)).abs());
        worst = worst.max((one_sided_loss(&ce, &full)? - nf.ln()).abs());
        for b in 2..=n {
            let bf = b as f64;
            worst = worst.max((mean_batch_loss(&be, b, true)? - ((E + bf - 1.0).ln() - 1.0)).abs());
            worst = worst.max((mean_batch_loss(&ce, b, true)? - bf.ln()).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max error {worst:.1e}")))
}

fn non_scaling(_: &mut StreamRng) -> Result<(bool, String)> {
    let (n, b) = (10, 2);
    let rb = mean_batch_loss(&basis(n)?, b, false)? / full_loss(&basis(n)?);
    let rc = mean_batch_loss(&collapsed(n)?, b, false)? / full_loss(&collapsed(n)?);
    Ok((
        (rb - rc).abs() > 1e-3,
        format!("ratios {rb:.6} and {rc:.6}"),
    ))
}

fn lm_gradient_fd(rng: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let b = rng.gen_range(2..=8);
        let x = DMatrix::from_fn(b, b, |_, _| rng.gen_range(-3.0..3.0));
        let fd = central_diff(&x, logit_loss)?;
        worst = worst.max(rel_err(&fd, &lm_gradient(&x)?));
    }
    Ok((worst <= 1e-5, format!("max relative error {worst:.1e} over 100 instances")))
}

fn batch_gradient_fd(rng: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let b = rng.gen_range(2..=6);
        let n = b + rng.gen_range(0..4);
        let d = rng.gen_range(2..=8);
        let emb = random_emb(rng, d, n)?;
        let batch = Batch::new(sample(rng, n, b).into_vec(), n)?;
        let ub = emb.u().select_columns(batch.indices());
        let vb = emb.v().select_columns(batch.indices());
        let (gu, gv) = batch_gradient(&emb, &batch)?;
        let fu = central_diff(&ub, |m| logit_loss(&(m.transpose() * &vb)))?;
        let fv = central_diff(&vb, |m| logit_loss(&(ub.transpose() * m)))?;
        worst = worst.max(rel_err(&fu, &gu)).max(rel_err(&fv, &gv));
    }
    Ok((worst <= 1e-5, format!("max relative error {worst:.1e} over 100 instances")))
}

fn toy_gradient_fd(_: &mut StreamRng) -> Result<(bool, String)> {
    let grid = [0.05, 0.2, 0.5, 0.7];
    let pairs = enumerate_batches(4, 2)?.into_batches();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for code in 0..grid.len().pow(4) {
        let theta: [f64; 4] = std::array::from_fn(|i| grid[(code / grid.len().pow(i as u32)) % 4]);
        for batch in &pairs {
            let s = ToyState {
                theta,
                epsilon: 0.05,
            };
            let an = DMatrix::from_row_slice(1, 4, &toy_gradient(&s, batch)?);
            let fd = central_diff(&DMatrix::from_row_slice(1, 4, &theta), |m| {
                let t = ToyState {
                    theta: [m[0], m[1], m[2], m[3]],
                    epsilon: 0.05,
                };
                toy_batch_loss(&t, batch)
            })?;
            worst = worst.max((fd - an).abs().max());
            count += 1;
        }
    }
    Ok((worst <= 1e-6, format!("max abs error {worst:.1e} over {count} grid points")))
}

fn batch_gradient_bound(rng: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for b in [2, 4, 8] {
        for _ in 0..1000 {
            let d = rng.gen_range(2..=16);
            let emb = random_emb(rng, d, b)?;
            let (gu, gv) = batch_gradient(&emb, &Batch::full(b)?)?;
            worst = worst.max((gu.norm_squared() + gv.norm_squared()).sqrt());
        }
    }
    Ok((worst <= 4.0, format!("max norm {worst:.4} (bound 4)")))
}

fn uniform_square(rng: &mut StreamRng, b: usize) -> DMatrix<f64> {
    DMatrix::from_fn(b, b, |_, _| rng.gen_range(-1.0..=1.0))
}

fn lm_gradient_bound(rng: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for b in [2usize, 4, 8] {
        let bound = 2.0 * (2.0 / b as f64).sqrt();
        for _ in 0..1000 {
            let x = uniform_square(rng, b);
            worst = worst.max(lm_gradient(&x)?.norm() / bound);
        }
    }
    Ok((worst <= 1.0, format!("max norm / bound {worst:.4}")))
}

fn lm_gradient_lipschitz(rng: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for b in [2usize, 4, 8] {
        let lip = 2.0 * E * E / (b * b) as f64;
        for _ in 0..1000 {
            let (x, y) = (uniform_square(rng, b), uniform_square(rng, b));
            let ratio = (lm_gradient(&x)? - lm_gradient(&y)?).norm() / (x - y).norm();
            worst = worst.max(ratio / lip);
        }
    }
    Ok((worst <= 1.0, format!("max ratio / constant {worst:.4}")))
}

fn jensen_below_loss(rng: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let b = rng.gen_range(2..=6);
        let d = rng.gen_range(2..=8);
        let emb = random_emb(rng, d, b)?;
        let full = Batch::full(b)?;
        worst = worst.min(contrastive_loss(&emb, &full)? - jensen_lower_bound(&emb, &full)?);
    }
    Ok((worst >= -1e-12, format!("min loss - bound {worst:.2e}")))
}

fn gamma_sums(_: &mut StreamRng) -> Result<(bool, String)> {
    let mut bad = 0;
    let mut total = 0;
    for m in 1..=30 {
        for k in 1..=m {
            for q in 1..=k {
                let (nums, den) = gamma_numerators(m, k, q)?;
                let sum: BigUint = nums.iter().sum();
                bad += usize::from(sum != den * BigUint::from(q));
                total += 1;
            }
        }
    }
    Ok((bad == 0, format!("{bad}/{total} triples with sum != q")))
}

fn etf_stationarity(_: &mut StreamRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for d in 2..=8 {
        for n in 2..=d + 1 {
            let emb = make_simplex_etf(n, d)?;
            let (gu, gv) = mean_gradient(&emb, &[Batch::full(n)?])?;
            for (g, m) in [(gu, emb.u()), (gv, emb.v())] {
                for c in 0..n {
                    let col = m.column(c);
                    let gc = g.column(c);
                    let tangent = gc - col * col.dot(&gc);
                    worst = worst.max(tangent.norm());
                }
            }
        }
    }
    Ok((worst < 1e-6, format!("max tangential gradient {worst:.1e}")))
}

fn cross_polytope_structure(_: &mut StreamRng) -> Result<(bool, String)> {
    let mut ok = true;
    for d in 1..=8 {
        let emb = make_cross_polytope(d)?;
        let u = emb.u();
        for i in 0..2 * d {
            for j in 0..2 * d {
                let dot = u.column(i).dot(&u.column(j));
                let expected = if i == j {
                    1.0
                } else if i % d == j % d {
                    -1.0
                } else {
                    0.0
                };
                ok &= (dot - expected).abs() < 1e-12;
            }
        }
        ok &= emb.u() == emb.v();
    }
    Ok((ok, "unit columns, antipodal pairs, all else orthogonal for d = 1..8".into()))
}

/// Loss of the counterexample triple, with every column normalized.
pub fn non_quasi_convex_triple() -> Result<[f64; 3]> {
    let (a, b, c) = (FRAC_1_SQRT_2, 0.4f64.sqrt(), 0.2f64.sqrt());
    let u1 = DMatrix::from_row_slice(2, 2, &[a, b, a, c]);
    let u2 = DMatrix::from_element(2, 2, a);
    let v1 = u2.clone();
    let v2 = DMatrix::from_row_slice(2, 2, &[b, a, c, a]);
    let mut u3 = (&u1 + &u2) / 2.0;
    let mut v3 = (&v1 + &v2) / 2.0;
    normalize_columns(&mut u3)?;
    normalize_columns(&mut v3)?;
    let first = full_loss(&EmbeddingPair::normalized(u1, v1)?);
    let second = full_loss(&EmbeddingPair::normalized(u2, v2)?);
    let mid = full_loss(&EmbeddingPair::new(u3, v3)?);
    Ok([first, second, mid])
}

fn non_quasi_convexity(_: &mut StreamRng) -> Result<(bool, String)> {
    let [first, second, mid] = non_quasi_convex_triple()?;
    let top = first.max(second);
    Ok((
        mid > top,
        format!("midpoint {mid:.5} > endpoints max {top:.5}"),
    ))
}

fn hungarian_exhaustive(rng: &mut StreamRng) -> Result<(bool, String)> {
    fn best(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
        if row == cost.nrows() {
            return 0.0;
        }
        let mut out = f64::INFINITY;
        for c in 0..cost.ncols() {
            if !used[c] {
                used[c] = true;
                out = out.min(cost[(row, c)] + best(cost, row + 1, used));
                used[c] = false;
            }
        }
        out
    }
    let mut worst: f64 = 0.0;
    for n in 1..=6 {
        for _ in 0..20 {
            let cost = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..10.0));
            let (_, total) = min_cost_assignment(&cost)?;
            worst = worst.max((total - best(&cost, 0, &mut vec![false; n])).abs());
        }
    }
    for (n, b) in [(4, 2), (6, 2), (6, 3), (8, 4)] {
        let k = n / b;
        debug_assert!(balanced_partition_count(n, b) <= 10_000);
        for _ in 0..5 {
            let points = DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
            let centers = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
            let got = assignment_cost(&points, &centers, &balanced_assign(&points, &centers, b)?);
            let mut exhaustive = f64::INFINITY;
            for groups in balanced_partitions(n, b, 10_000)? {
                let cost = DMatrix::from_fn(k, k, |g, c| {
                    groups[g]
                        .iter()
                        .map(|&i| (points.row(i) - centers.row(c)).norm())
                        .sum()
                });
                exhaustive = exhaustive.min(best(&cost, 0, &mut vec![false; k]));
            }
            worst = worst.max((got - exhaustive).abs());
        }
    }
    Ok((worst <= 1e-9, format!("max gap to exhaustive minimum {worst:.1e}")))
}

fn is_partition(coll: &BatchCollection, n: usize, b: usize) -> bool {
    let mut seen = vec![false; n];
    coll.batches().iter().all(|batch| {
        batch.len() == b
            && batch
                .indices()
                .iter()
                .all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
    }) && seen.iter().all(|&s| s)
}

fn partition_validity(rng: &mut StreamRng) -> Result<(bool, String)> {
    let mut ok = true;
    let mut runs = 0;
    for (n, b, chunk_k) in [(8, 2, 2), (12, 3, 2), (16, 4, 2), (24, 4, 3)] {
        for _ in 0..5 {
            let emb = random_emb(rng, 6, n)?;
            let seed = rng.gen();
            ok &= is_partition(&sc_select(&emb, b, seed)?, n, b);
            ok &= is_partition(&chunked_sc_select(&emb, b, chunk_k, seed)?, n, b);
            runs += 2;
        }
    }
    Ok((ok, format!("{runs} selections checked")))
}

fn laplacian_psd(rng: &mut StreamRng) -> Result<(bool, String)> {
    let mut lowest = f64::INFINITY;
    for _ in 0..20 {
        let n = 2 * rng.gen_range(2..=8);
        let emb = random_emb(rng, 5, n)?;
        let lap = laplacian(&build_affinity(&emb, 2)?);
        let eigs = symmetric_eigs(&lap, n)?;
        lowest = lowest.min(eigs.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min));
    }
    Ok((lowest >= -1e-9, format!("smallest eigenvalue {lowest:.2e}")))
}

fn determinism(rng: &mut StreamRng) -> Result<(bool, String)> {
    let emb = random_emb(rng, 6, 16)?;
    let seed = rng.gen();
    let same_sc = sc_select(&emb, 4, seed)? == sc_select(&emb, 4, seed)?;
    let mut cfg = OptimizerConfig::new(Variant::Osgd, 2, 0.5, 50, seed);
    cfg.k = 4;
    cfg.q = 2;
    let a = run_optimizer(&emb, &cfg, None)?;
    let b = run_optimizer(&emb, &cfg, None)?;
    let same_run = a.trace == b.trace && a.embedding == b.embedding;
    Ok((
        same_sc && same_run,
        format!("sc_select repeatable: {same_sc}; optimizer repeatable: {same_run}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes() {
        let results = run_all(0);
        assert_eq!(results.len(), check_names().len());
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn triple_values() {
        let [first, second, mid] = non_quasi_convex_triple().unwrap();
        assert!((first - 1.386320).abs() < 1e-6);
        assert!((second - first).abs() < 1e-12);
        assert!((mid - 1.389043).abs() < 1e-6);
    }
}

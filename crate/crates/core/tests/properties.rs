use mbcl::batching::{batch_loss_histogram, chunked_sc_select, sc_select};
use mbcl::combinatorics::enumerate_batches;
use mbcl::geometry::{gram, oracle_distance};
use mbcl::loss::{
    batch_gradient, contrastive_loss, full_loss, jensen_lower_bound, lm_gradient, logit_loss,
    pair_weight,
};
use mbcl::optim::{
    gamma_weights, gd_step, run_optimizer, select_top_q, weighted_osgd_loss, OptimizerConfig,
    Variant,
};
use mbcl::rng::{stream, INIT_STREAM};
use mbcl::{Batch, BatchCollection, EmbeddingPair};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn emb(d: usize, n: usize, seed: u64) -> EmbeddingPair {
    EmbeddingPair::random(d, n, &mut stream(seed, INIT_STREAM)).unwrap()
}

fn square(b: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, b * b).prop_map(move |v| DMatrix::from_vec(b, b, v))
}

fn logits() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..=6).prop_flat_map(|b| square(b, -3.0, 3.0))
}

fn logit_pair() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (2usize..=8).prop_flat_map(|b| (square(b, -1.0, 1.0), square(b, -1.0, 1.0)))
}

fn is_exact_partition(coll: &BatchCollection, n: usize, b: usize) -> bool {
    let mut seen = vec![0usize; n];
    for batch in coll.batches() {
        if batch.len() != b {
            return false;
        }
        for &i in batch.indices() {
            seen[i] += 1;
        }
    }
    seen.iter().all(|&c| c == 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lm_gradient_matches_central_differences(x in logits()) {
        let an = lm_gradient(&x).unwrap();
        let h = 1e-5;
        let fd = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[(i, j)] += h;
            m[(i, j)] -= h;
            (logit_loss(&p).unwrap() - logit_loss(&m).unwrap()) / (2.0 * h)
        });
        prop_assert!((fd - &an).norm() <= 1e-5 * an.norm());
    }

    #[test]
    fn lm_gradient_entries_sum_to_zero(x in logits()) {
        // Both softmaxes carry total mass B, cancelling the -2I diagonal.
        prop_assert!(lm_gradient(&x).unwrap().sum().abs() < 1e-12);
    }

    #[test]
    fn lm_gradient_bound_and_lipschitz((x, y) in logit_pair()) {
        let b = x.nrows() as f64;
        let (gx, gy) = (lm_gradient(&x).unwrap(), lm_gradient(&y).unwrap());
        prop_assert!(gx.norm() <= 2.0 * (2.0 / b).sqrt());
        let lip = 2.0 * std::f64::consts::E.powi(2) / (b * b);
        prop_assert!((gx - gy).norm() <= lip * (x - y).norm() + 1e-15);
    }

    #[test]
    fn batch_gradient_norm_at_most_four(b in 2usize..=8, d in 2usize..=16, seed in any::<u64>()) {
        let e = emb(d, b, seed);
        let (gu, gv) = batch_gradient(&e, &Batch::full(b).unwrap()).unwrap();
        prop_assert!((gu.norm_squared() + gv.norm_squared()).sqrt() <= 4.0);
    }

    #[test]
    fn jensen_bound_below_loss(b in 2usize..=6, d in 2usize..=8, seed in any::<u64>()) {
        let e = emb(d, b, seed);
        let full = Batch::full(b).unwrap();
        prop_assert!(jensen_lower_bound(&e, &full).unwrap() <= contrastive_loss(&e, &full).unwrap() + 1e-12);
    }

    #[test]
    fn pair_weight_symmetric_and_positive(n in 3usize..=8, d in 2usize..=6, b in 2usize..=4, seed in any::<u64>()) {
        let e = emb(d, n, seed);
        for k in 0..n {
            for l in k + 1..n {
                let w = pair_weight(&e, k, l, b).unwrap();
                prop_assert!(w > 0.0);
                prop_assert_eq!(w, pair_weight(&e, l, k, b).unwrap());
            }
        }
    }

    #[test]
    fn oracle_distance_is_a_pseudometric(n in 2usize..=6, d in 2usize..=5, s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (emb(d, n, s1), emb(d, n, s2));
        prop_assert_eq!(oracle_distance(&a, &a).unwrap(), 0.0);
        let ab = oracle_distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - oracle_distance(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn oracle_distance_ignores_common_rotation(n in 2usize..=6, d in 2usize..=5, seed in any::<u64>()) {
        let a = emb(d, n, seed);
        let mut rng = stream(seed, 7);
        let m = DMatrix::from_fn(d, d, |_, _| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng));
        let q = m.qr().q();
        let rotated = EmbeddingPair::normalized(&q * a.u(), &q * a.v()).unwrap();
        prop_assert!(oracle_distance(&a, &rotated).unwrap() < 1e-10);
        prop_assert!((gram(&a).0 - gram(&rotated).0).abs().max() < 1e-12);
    }

    #[test]
    fn gd_step_keeps_unit_norms(n in 2usize..=8, d in 2usize..=6, eta in 0.0f64..2.0, seed in any::<u64>()) {
        let e = emb(d, n, seed);
        let coll = enumerate_batches(n, 2).unwrap();
        let next = gd_step(&e, &coll, eta).unwrap();
        for m in [next.u(), next.v()] {
            for c in m.column_iter() {
                prop_assert!((c.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn top_q_ignores_candidate_order(seed in any::<u64>(), q in 1usize..=4) {
        let e = emb(3, 6, seed);
        let all = enumerate_batches(6, 2).unwrap().into_batches();
        let mut reversed = all.clone();
        reversed.reverse();
        prop_assert_eq!(select_top_q(&e, &all, q).unwrap(), select_top_q(&e, &reversed, q).unwrap());
    }

    #[test]
    fn gamma_weights_sum_to_q(m in 1usize..=30, k_frac in 0.0f64..1.0, q_frac in 0.0f64..1.0) {
        let k = 1 + ((m - 1) as f64 * k_frac) as usize;
        let q = 1 + ((k - 1) as f64 * q_frac) as usize;
        let g = gamma_weights(m, k, q).unwrap();
        prop_assert!((g.iter().sum::<f64>() - q as f64).abs() < 1e-9);
        prop_assert!(g.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
    }

    #[test]
    fn sc_select_outputs_exact_partitions(k in 2usize..=5, b in 2usize..=4, seed in any::<u64>()) {
        let n = k * b;
        let e = emb(4, n, seed);
        prop_assert!(is_exact_partition(&sc_select(&e, b, seed).unwrap(), n, b));
    }
}

#[test]
fn optimizer_runs_are_bit_identical() {
    let e = emb(6, 8, 3);
    for variant in Variant::ALL {
        let mut cfg = OptimizerConfig::new(variant, 2, 0.5, 40, 11);
        if variant.name().starts_with("osgd") {
            cfg.k = 4;
            cfg.q = 2;
        }
        let subset = BatchCollection::consecutive_partition(8, 2).unwrap();
        let subset = (variant == Variant::SubsetGd).then_some(&subset);
        let a = run_optimizer(&e, &cfg, subset).unwrap();
        let b = run_optimizer(&e, &cfg, subset).unwrap();
        assert_eq!(a.trace, b.trace, "{}", variant.name());
        assert_eq!(a.embedding, b.embedding, "{}", variant.name());
    }
}

#[test]
fn weighted_loss_matches_monte_carlo() {
    use rand::seq::index::sample;
    let (n, b, k, q) = (5, 2, 3, 2);
    let e = emb(3, n, 21);
    let losses: Vec<f64> = enumerate_batches(n, b)
        .unwrap()
        .batches()
        .iter()
        .map(|x| contrastive_loss(&e, x).unwrap())
        .collect();
    let mut rng = stream(21, 0);
    let draws = 100_000;
    let values: Vec<f64> = (0..draws)
        .map(|_| {
            let mut picked: Vec<f64> = sample(&mut rng, losses.len(), k).into_iter().map(|i| losses[i]).collect();
            picked.sort_by(|x, y| y.total_cmp(x));
            picked[..q].iter().sum::<f64>() / q as f64
        })
        .collect();
    let mean = values.iter().sum::<f64>() / draws as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let se = (var / draws as f64).sqrt();
    let exact = weighted_osgd_loss(&e, b, k, q).unwrap();
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn subset_gd_never_reaches_the_etf() {
    use mbcl::geometry::classify_configuration;
    let subset = BatchCollection::consecutive_partition(8, 2).unwrap();
    for seed in 20..25 {
        let cfg = OptimizerConfig::new(Variant::SubsetGd, 2, 0.5, 500, seed);
        let run = run_optimizer(&emb(16, 8, seed), &cfg, Some(&subset)).unwrap();
        assert_eq!(classify_configuration(&run.embedding, 0.05), None);
    }
}

#[test]
fn spectral_beats_most_random_partitions_on_small_graphs() {
    use mbcl::batching::{build_affinity, within_batch_weight};
    use mbcl::optim::random_partition_collection;
    let (n, b) = (6, 3);
    for trial in 0..5u64 {
        let e = emb(3, n, 300 + trial);
        let a = build_affinity(&e, b).unwrap();
        let sc = within_batch_weight(&a, &sc_select(&e, b, trial).unwrap());
        let beaten = (0..10)
            .filter(|&s| {
                let r = random_partition_collection(n, b, 1000 * trial + s).unwrap();
                sc >= within_batch_weight(&a, &r)
            })
            .count();
        assert!(beaten >= 8, "trial {trial}: only {beaten}/10");
    }
}

#[test]
fn histogram_counts_cover_every_batch() {
    let e = emb(6, 32, 5);
    let coll = sc_select(&e, 4, 5).unwrap();
    let hist = batch_loss_histogram(&e, &coll, 7).unwrap();
    assert_eq!(hist.len(), 7);
    assert_eq!(hist.iter().map(|(_, c)| c).sum::<usize>(), coll.len());
    assert!(hist.windows(2).all(|w| w[0].0 < w[1].0));
}

#[test]
fn single_chunk_matches_plain_selection() {
    let e = emb(5, 12, 8);
    assert_eq!(chunked_sc_select(&e, 3, 4, 9).unwrap(), sc_select(&e, 3, 9).unwrap());
    let chunked = chunked_sc_select(&emb(5, 24, 8), 3, 4, 9).unwrap();
    assert!(is_exact_partition(&chunked, 24, 3));
}

#[test]
fn full_loss_matches_full_batch() {
    let e = emb(4, 7, 2);
    assert_eq!(full_loss(&e), contrastive_loss(&e, &Batch::full(7).unwrap()).unwrap());
}

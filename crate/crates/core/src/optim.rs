//! Projected gradient descent over embedding pairs: full-batch, all
//! mini-batches, a fixed subset, SGD and ordered SGD (with and without
//! replacement), plus the rank-weighted objective that ordered SGD
//! descends in expectation.

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_traits::Zero;
use rand::seq::{index, SliceRandom};

use crate::combinatorics::{
    big_ratio, binomial, binomial_big, enumerate_batches, unrank_subset,
};
use crate::embedding::{Batch, BatchCollection, EmbeddingPair};
use crate::error::{Error, Result};
use crate::geometry::{default_oracle, oracle_distance};
use crate::loss::{batch_gradient, contrastive_loss, full_loss};
use crate::rng;

/// Step size `eta`, either fixed or one value per step.
#[derive(Debug, Clone, PartialEq)]
pub enum LearningRate {
    Constant(f64),
    Schedule(Vec<f64>),
}

impl LearningRate {
    /// Rate for zero-based step `t`.
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Self::Constant(eta) => *eta,
            Self::Schedule(etas) => etas[t],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    FullBatchGd,
    AllNcBGd,
    SubsetGd,
    SgdWithReplacement,
    SgdWithoutReplacement,
    Osgd,
    OsgdWithoutReplacement,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Self::FullBatchGd,
        Self::AllNcBGd,
        Self::SubsetGd,
        Self::SgdWithReplacement,
        Self::SgdWithoutReplacement,
        Self::Osgd,
        Self::OsgdWithoutReplacement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::FullBatchGd => "full-batch-gd",
            Self::AllNcBGd => "all-ncb-gd",
            Self::SubsetGd => "subset-gd",
            Self::SgdWithReplacement => "sgd",
            Self::SgdWithoutReplacement => "sgd-without-replacement",
            Self::Osgd => "osgd",
            Self::OsgdWithoutReplacement => "osgd-without-replacement",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    fn without_replacement(self) -> bool {
        matches!(self, Self::SgdWithoutReplacement | Self::OsgdWithoutReplacement)
    }

    fn ordered(self) -> bool {
        matches!(self, Self::Osgd | Self::OsgdWithoutReplacement)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub eta: LearningRate,
    pub steps: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Mini-batch size `B`.
    pub batch_size: usize,
    /// Batches drawn per step.
    pub k: usize,
    /// Highest-loss batches kept among the `k` drawn (ordered variants).
    pub q: usize,
}

impl OptimizerConfig {
    /// Plain descent at constant `eta` with `k = q = 1`.
    pub fn new(variant: Variant, batch_size: usize, eta: f64, steps: usize, seed: u64) -> Self {
        Self {
            eta: LearningRate::Constant(eta),
            steps,
            seed,
            variant,
            batch_size,
            k: 1,
            q: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// One-based step number.
    pub step: usize,
    /// Full-batch loss after the update.
    pub full_loss: f64,
    /// Gram distance to the known optimum, when one exists for `(N, d)`.
    pub oracle_dist: Option<f64>,
    /// Batches whose gradients entered the update, in reduction order.
    pub selected: Vec<Batch>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }
}

/// Trace plus the final iterate.
#[derive(Debug, Clone)]
pub struct Run {
    pub trace: RunTrace,
    pub embedding: EmbeddingPair,
}

/// Mean of the scattered batch gradients, accumulated in the given order.
pub fn mean_gradient(
    emb: &EmbeddingPair,
    batches: &[Batch],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if batches.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let mut gu = DMatrix::zeros(emb.dim(), emb.len());
    let mut gv = DMatrix::zeros(emb.dim(), emb.len());
    for batch in batches {
        let (bu, bv) = batch_gradient(emb, batch)?;
        for (t, &i) in batch.indices().iter().enumerate() {
            let mut cu = gu.column_mut(i);
            cu += bu.column(t);
            let mut cv = gv.column_mut(i);
            cv += bv.column(t);
        }
    }
    let m = batches.len() as f64;
    Ok((gu / m, gv / m))
}

fn descend(emb: &EmbeddingPair, batches: &[Batch], eta: f64) -> Result<EmbeddingPair> {
    if eta == 0.0 {
        return Ok(emb.clone());
    }
    let (gu, gv) = mean_gradient(emb, batches)?;
    emb.retract(&gu, &gv, eta)
}

/// One projected step on the mean loss of `coll`; `emb` is left untouched.
pub fn gd_step(emb: &EmbeddingPair, coll: &BatchCollection, eta: f64) -> Result<EmbeddingPair> {
    descend(emb, coll.batches(), eta)
}

/// Keeps the `q` highest-loss batches among `candidates`, ties going to the
/// lexicographically smaller batch. The result is sorted by batch id, so it
/// does not depend on the order of `candidates`.
pub fn select_top_q(emb: &EmbeddingPair, candidates: &[Batch], q: usize) -> Result<Vec<Batch>> {
    let mut scored = candidates
        .iter()
        .map(|b| Ok((contrastive_loss(emb, b)?, b.sorted_key(), b)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let mut kept: Vec<(Vec<usize>, &Batch)> = scored
        .into_iter()
        .take(q)
        .map(|(_, key, b)| (key, b))
        .collect();
    kept.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(kept.into_iter().map(|(_, b)| b.clone()).collect())
}

fn sorted_by_id(mut batches: Vec<Batch>) -> Vec<Batch> {
    batches.sort_by_key(|b| b.sorted_key());
    batches
}

fn validate(n: usize, cfg: &OptimizerConfig, subset: Option<&BatchCollection>) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidConfig(msg));
    if cfg.steps == 0 {
        return bad("steps must be positive".into());
    }
    match &cfg.eta {
        LearningRate::Constant(eta) if !(eta.is_finite() && *eta >= 0.0) => {
            return bad(format!("learning rate must be finite and nonnegative, got {eta}"));
        }
        LearningRate::Schedule(etas) => {
            if etas.len() != cfg.steps {
                return bad(format!(
                    "schedule has {} rates for {} steps",
                    etas.len(),
                    cfg.steps
                ));
            }
            if let Some(eta) = etas.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
                return bad(format!("learning rate must be finite and nonnegative, got {eta}"));
            }
        }
        _ => {}
    }
    match (cfg.variant, subset) {
        (Variant::SubsetGd, None) => return bad("subset-gd needs a batch subset".into()),
        (Variant::SubsetGd, Some(s)) => {
            if let Some(b) = s.batches().iter().find(|b| b.check_within(n).is_err()) {
                return bad(format!("subset batch {:?} is out of range", b.indices()));
            }
        }
        (v, Some(_)) => return bad(format!("{} does not take a subset", v.name())),
        _ => {}
    }
    let b = cfg.batch_size;
    let needs_b = !matches!(cfg.variant, Variant::FullBatchGd | Variant::SubsetGd);
    if needs_b && !(2 <= b && b <= n) {
        return bad(format!("batch size must satisfy 2 <= B <= N, got B = {b}, N = {n}"));
    }
    if matches!(
        cfg.variant,
        Variant::SgdWithReplacement
            | Variant::SgdWithoutReplacement
            | Variant::Osgd
            | Variant::OsgdWithoutReplacement
    ) {
        if cfg.k == 0 {
            return bad("k must be positive".into());
        }
        if cfg.variant.ordered() && !(1 <= cfg.q && cfg.q <= cfg.k) {
            return bad(format!("need 1 <= q <= k, got q = {}, k = {}", cfg.q, cfg.k));
        }
        if cfg.variant.without_replacement() {
            if !n.is_multiple_of(b) {
                return bad(format!("N = {n} is not divisible by B = {b}"));
            }
            if !(n / b).is_multiple_of(cfg.k) {
                return bad(format!(
                    "N/B = {} batches per epoch is not divisible by k = {}",
                    n / b,
                    cfg.k
                ));
            }
        } else {
            let m = binomial(n, b);
            if cfg.k as u128 > m {
                return bad(format!("k = {} exceeds the {m} available mini-batches", cfg.k));
            }
            if usize::try_from(m).is_err() {
                return bad(format!("{m} mini-batches cannot be indexed"));
            }
        }
    }
    Ok(())
}

/// Runs the configured variant from `init`.
///
/// Every step ends with column normalization. `subset` is required by
/// [`Variant::SubsetGd`] and rejected otherwise.
pub fn run_optimizer(
    init: &EmbeddingPair,
    cfg: &OptimizerConfig,
    subset: Option<&BatchCollection>,
) -> Result<Run> {
    let n = init.len();
    validate(n, cfg, subset)?;
    let oracle = default_oracle(n, init.dim());
    let b = cfg.batch_size;

    let fixed: Option<Vec<Batch>> = match cfg.variant {
        Variant::FullBatchGd => Some(vec![Batch::full(n)?]),
        Variant::AllNcBGd => Some(enumerate_batches(n, b)?.into_batches()),
        Variant::SubsetGd => subset.map(|s| s.batches().to_vec()),
        _ => None,
    };
    let m = binomial(n, b) as usize;
    let mut step_rng = rng::stream(cfg.seed, rng::STEP_STREAM);
    let mut epoch_batches: Vec<Batch> = Vec::new();
    let mut epoch = 0;
    let mut cursor = 0;

    let mut emb = init.clone();
    let mut records = Vec::with_capacity(cfg.steps);
    for t in 0..cfg.steps {
        let selected = match cfg.variant {
            Variant::FullBatchGd | Variant::AllNcBGd | Variant::SubsetGd => {
                fixed.clone().unwrap_or_default()
            }
            Variant::SgdWithReplacement | Variant::Osgd => {
                let drawn: Vec<Batch> = index::sample(&mut step_rng, m, cfg.k)
                    .into_iter()
                    .map(|r| Batch::from_sorted_unchecked(unrank_subset(n, b, r as u128)))
                    .collect();
                if cfg.variant.ordered() {
                    select_top_q(&emb, &drawn, cfg.q)?
                } else {
                    sorted_by_id(drawn)
                }
            }
            Variant::SgdWithoutReplacement | Variant::OsgdWithoutReplacement => {
                if cursor == epoch_batches.len() {
                    epoch_batches = random_partition(n, b, &mut rng::epoch_stream(cfg.seed, epoch));
                    epoch += 1;
                    cursor = 0;
                }
                let group = &epoch_batches[cursor..cursor + cfg.k];
                cursor += cfg.k;
                if cfg.variant.ordered() {
                    select_top_q(&emb, group, cfg.q)?
                } else {
                    group.to_vec()
                }
            }
        };
        emb = descend(&emb, &selected, cfg.eta.at(t))?;
        let loss = full_loss(&emb);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("full loss at step {}", t + 1)));
        }
        let oracle_dist = oracle.as_ref().map(|o| oracle_distance(&emb, o)).transpose()?;
        records.push(StepRecord {
            step: t + 1,
            full_loss: loss,
            oracle_dist,
            selected,
        });
    }
    Ok(Run {
        trace: RunTrace { records },
        embedding: emb,
    })
}

/// Shuffles `0..n` and cuts it into `n / b` consecutive batches, each
/// stored in ascending order.
pub fn random_partition<R: rand::Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Vec<Batch> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm.chunks(b)
        .map(|c| {
            let mut idx = c.to_vec();
            idx.sort_unstable();
            Batch::from_sorted_unchecked(idx)
        })
        .collect()
}

/// Random balanced partition of `0..n` into batches of size `b`.
pub fn random_partition_collection(n: usize, b: usize, seed: u64) -> Result<BatchCollection> {
    if b < 2 || !n.is_multiple_of(b) {
        return Err(Error::NotDivisible { n, divisor: b });
    }
    let batches = random_partition(n, b, &mut rng::stream(seed, rng::STEP_STREAM));
    BatchCollection::partition(batches, n)
}

fn check_gamma_args(m: usize, k: usize, q: usize) -> Result<()> {
    if !(1 <= q && q <= k && k <= m) {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= q <= k <= m, got m = {m}, k = {k}, q = {q}"
        )));
    }
    Ok(())
}

/// Exact numerators of the rank weights and their common denominator
/// `C(m, k)`: weight `j` (one-based rank by descending loss) is the
/// probability that the `j`-th largest of `m` batches lands among the top
/// `q` of `k` drawn without replacement.
pub fn gamma_numerators(m: usize, k: usize, q: usize) -> Result<(Vec<BigUint>, BigUint)> {
    check_gamma_args(m, k, q)?;
    let den = binomial_big(m, k);
    let nums = (1..=m)
        .map(|j| {
            (0..q).fold(BigUint::zero(), |acc, l| {
                if k < l + 1 {
                    return acc;
                }
                acc + binomial_big(j - 1, l) * binomial_big(m - j, k - l - 1)
            })
        })
        .collect();
    Ok((nums, den))
}

/// Rank weights `gamma_1..gamma_m`; they sum to `q`.
pub fn gamma_weights(m: usize, k: usize, q: usize) -> Result<Vec<f64>> {
    let (nums, den) = gamma_numerators(m, k, q)?;
    Ok(nums.iter().map(|num| big_ratio(num, &den)).collect())
}

/// All batch losses sorted descending, ties broken by lexicographic batch id.
pub fn ranked_batch_losses(emb: &EmbeddingPair, b: usize) -> Result<Vec<(Batch, f64)>> {
    let all = enumerate_batches(emb.len(), b)?;
    let mut ranked = all
        .into_batches()
        .into_iter()
        .map(|batch| contrastive_loss(emb, &batch).map(|l| (batch, l)))
        .collect::<Result<Vec<_>>>()?;
    // Enumeration is already lexicographic; a stable sort keeps ties in id order.
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ranked)
}

/// `1/q sum_j gamma_j L(B_(j))` over all `C(N, b)` batches ranked by loss.
pub fn weighted_osgd_loss(emb: &EmbeddingPair, b: usize, k: usize, q: usize) -> Result<f64> {
    let ranked = ranked_batch_losses(emb, b)?;
    let gammas = gamma_weights(ranked.len(), k, q)?;
    let sum: f64 = gammas
        .iter()
        .zip(&ranked)
        .map(|(g, (_, loss))| g * loss)
        .sum();
    Ok(sum / q as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_simplex_etf;

    fn random_emb(d: usize, n: usize, seed: u64) -> EmbeddingPair {
        EmbeddingPair::random(d, n, &mut rng::stream(seed, rng::INIT_STREAM)).unwrap()
    }

    #[test]
    fn zero_step_is_identity() {
        let emb = random_emb(5, 6, 1);
        let coll = enumerate_batches(6, 3).unwrap();
        assert_eq!(gd_step(&emb, &coll, 0.0).unwrap(), emb);
    }

    #[test]
    fn etf_is_stationary_under_full_batch_step() {
        let etf = make_simplex_etf(8, 16).unwrap();
        let coll = BatchCollection::general(vec![Batch::full(8).unwrap()]).unwrap();
        let next = gd_step(&etf, &coll, 0.5).unwrap();
        assert!(oracle_distance(&next, &etf).unwrap() < 1e-6);
    }

    #[test]
    fn full_batch_loss_does_not_increase() {
        let cfg = OptimizerConfig::new(Variant::FullBatchGd, 8, 0.5, 500, 3);
        let run = run_optimizer(&random_emb(16, 8, 3), &cfg, None).unwrap();
        for w in run.trace.records.windows(2) {
            assert!(w[1].full_loss <= w[0].full_loss + 1e-6);
        }
    }

    #[test]
    fn columns_stay_unit_norm() {
        let mut cfg = OptimizerConfig::new(Variant::Osgd, 3, 0.7, 40, 9);
        cfg.k = 5;
        cfg.q = 2;
        let run = run_optimizer(&random_emb(4, 9, 9), &cfg, None).unwrap();
        for m in [run.embedding.u(), run.embedding.v()] {
            for c in m.column_iter() {
                assert!((c.norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn config_errors() {
        let emb = random_emb(4, 6, 0);
        let mut cfg = OptimizerConfig::new(Variant::Osgd, 2, 0.1, 10, 0);
        cfg.k = 2;
        cfg.q = 3;
        assert!(matches!(run_optimizer(&emb, &cfg, None), Err(Error::InvalidConfig(_))));

        let cfg = OptimizerConfig::new(Variant::SubsetGd, 2, 0.1, 10, 0);
        assert!(matches!(run_optimizer(&emb, &cfg, None), Err(Error::InvalidConfig(_))));

        let mut cfg = OptimizerConfig::new(Variant::SgdWithoutReplacement, 4, 0.1, 10, 0);
        assert!(matches!(run_optimizer(&emb, &cfg, None), Err(Error::InvalidConfig(_))));
        cfg.batch_size = 2;
        cfg.k = 2;
        assert!(matches!(run_optimizer(&emb, &cfg, None), Err(Error::InvalidConfig(_))));

        let mut cfg = OptimizerConfig::new(Variant::FullBatchGd, 6, 0.1, 3, 0);
        cfg.eta = LearningRate::Schedule(vec![0.1, 0.1]);
        assert!(matches!(run_optimizer(&emb, &cfg, None), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn without_replacement_walks_each_epoch_partition() {
        let emb = random_emb(3, 6, 4);
        let mut cfg = OptimizerConfig::new(Variant::SgdWithoutReplacement, 2, 0.1, 6, 4);
        cfg.k = 1;
        let run = run_optimizer(&emb, &cfg, None).unwrap();
        for epoch in run.trace.records.chunks(3) {
            let mut seen: Vec<usize> = epoch
                .iter()
                .flat_map(|r| r.selected[0].indices().to_vec())
                .collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn top_q_ignores_candidate_order() {
        let emb = random_emb(3, 7, 11);
        let all = enumerate_batches(7, 3).unwrap().into_batches();
        let picked = select_top_q(&emb, &all, 4).unwrap();
        let mut reversed = all.clone();
        reversed.reverse();
        assert_eq!(select_top_q(&emb, &reversed, 4).unwrap(), picked);
    }

    #[test]
    fn top_q_ties_favor_smaller_id() {
        let emb = EmbeddingPair::symmetric(DMatrix::identity(4, 4)).unwrap();
        let all = enumerate_batches(4, 2).unwrap().into_batches();
        let picked = select_top_q(&emb, &all, 2).unwrap();
        assert_eq!(picked[0].indices(), &[0, 1]);
        assert_eq!(picked[1].indices(), &[0, 2]);
    }

    #[test]
    fn gamma_special_cases() {
        let g = gamma_weights(6, 6, 2).unwrap();
        assert_eq!(g, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let g = gamma_weights(7, 1, 1).unwrap();
        for x in g {
            assert!((x - 1.0 / 7.0).abs() < 1e-15);
        }
        assert!(gamma_weights(5, 3, 4).is_err());
        assert!(gamma_weights(5, 6, 1).is_err());
    }

    #[test]
    fn weighted_loss_special_cases() {
        let emb = random_emb(3, 6, 5);
        let all = enumerate_batches(6, 2).unwrap();
        let mean = crate::loss::avg_minibatch_loss(&emb, &all).unwrap().total;
        let m = all.len();
        assert!((weighted_osgd_loss(&emb, 2, m, m).unwrap() - mean).abs() < 1e-12);
        assert!((weighted_osgd_loss(&emb, 2, 1, 1).unwrap() - mean).abs() < 1e-12);
        assert!(weighted_osgd_loss(&emb, 2, 4, 2).unwrap() > mean);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::from_name(v.name()), Some(v));
        }
    }
}

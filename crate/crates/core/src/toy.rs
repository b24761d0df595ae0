//! Four pairs in the plane, one angle each, with `v_i = u_i`:
//!
//! ```text
//! u_1 = ( cos t1,  sin t1)    u_2 = ( cos t2, -sin t2)
//! u_3 = (-cos t3, -sin t3)    u_4 = (-cos t4,  sin t4)
//! ```
//!
//! At `t = pi/4` the points form a rotated cross-polytope. Starting from a
//! small common angle, ordered SGD picks the highest-loss pair every step
//! and reaches the neighbourhood of `pi/4` several times sooner than plain
//! SGD.

use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4};

use nalgebra::DMatrix;
use rand::Rng;

use crate::combinatorics::enumerate_batches;
use crate::embedding::{Batch, EmbeddingPair};
use crate::error::{Error, Result};
use crate::geometry::{make_cross_polytope, oracle_distance};
use crate::loss::{batch_logits, contrastive_loss, full_loss, lm_gradient};
use crate::optim::{RunTrace, StepRecord};
use crate::rng;

const SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyState {
    pub theta: [f64; 4],
    /// Common initial angle.
    pub epsilon: f64,
}

impl ToyState {
    /// All four angles at `epsilon`.
    pub fn symmetric(epsilon: f64) -> Self {
        Self {
            theta: [epsilon; 4],
            epsilon,
        }
    }
}

pub fn toy_embeddings(s: &ToyState) -> EmbeddingPair {
    let u = DMatrix::from_fn(2, 4, |r, c| {
        let (sx, sy) = SIGNS[c];
        if r == 0 {
            sx * s.theta[c].cos()
        } else {
            sy * s.theta[c].sin()
        }
    });
    EmbeddingPair::normalized(u.clone(), u).expect("toy columns are unit vectors")
}

fn column_derivative(s: &ToyState, c: usize) -> [f64; 2] {
    let (sx, sy) = SIGNS[c];
    [-sx * s.theta[c].sin(), sy * s.theta[c].cos()]
}

fn check_toy_batch(batch: &Batch) -> Result<()> {
    batch.check_within(4)?;
    if batch.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "toy batches have two members, got {}",
            batch.len()
        )));
    }
    Ok(())
}

/// Contrastive loss of the toy embeddings on a two-element batch.
pub fn toy_batch_loss(s: &ToyState, batch: &Batch) -> Result<f64> {
    check_toy_batch(batch)?;
    contrastive_loss(&toy_embeddings(s), batch)
}

/// Full-batch loss of the toy configuration.
pub fn toy_full_loss(s: &ToyState) -> f64 {
    full_loss(&toy_embeddings(s))
}

/// Gradient of a batch loss with respect to the four angles. Since `v` is
/// tied to `u`, each column collects `U_B (G + G^T)`.
pub fn toy_gradient(s: &ToyState, batch: &Batch) -> Result<[f64; 4]> {
    let emb = toy_embeddings(s);
    let x = batch_logits(&emb, batch)?;
    let g = lm_gradient(&x)?;
    let ub = emb.u().select_columns(batch.indices());
    let du = ub * (&g + g.transpose());
    let mut out = [0.0; 4];
    for (t, &i) in batch.indices().iter().enumerate() {
        let d = column_derivative(s, i);
        out[i] = du[(0, t)] * d[0] + du[(1, t)] * d[1];
    }
    Ok(out)
}

/// One gradient step on the batch loss; only the batch angles move.
pub fn toy_step(s: &ToyState, batch: &Batch, eta: f64) -> Result<ToyState> {
    check_toy_batch(batch)?;
    let g = toy_gradient(s, batch)?;
    let mut next = *s;
    for (t, gi) in next.theta.iter_mut().zip(g) {
        *t -= eta * gi;
    }
    Ok(next)
}

/// Per-step increase of both angles of an adjacent pair at a symmetric
/// state `phi`, divided by the learning rate.
pub fn adjacent_drift(phi: f64) -> f64 {
    2.0 * (2.0 * phi).sin() / (1.0 + (1.0 - (2.0 * phi).cos()).exp())
}

/// Closed-form batch losses at the symmetric state `epsilon`, for the
/// adjacent `{0,1}`, antipodal `{0,2}` and obtuse `{0,3}` pairs.
pub fn symmetric_class_losses(epsilon: f64) -> [f64; 3] {
    let c = (2.0 * epsilon).cos();
    [
        -2.0 + 2.0 * (E + c.exp()).ln(),
        -2.0 + 2.0 * (E + (-1f64).exp()).ln(),
        -2.0 + 2.0 * (E + (-c).exp()).ln(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToyVariant {
    /// Highest-loss pair among all six.
    Osgd,
    /// One pair drawn uniformly.
    Sgd,
    /// Mean gradient over all six pairs.
    AllBatchGd,
}

impl ToyVariant {
    pub const ALL: [ToyVariant; 3] = [Self::Osgd, Self::Sgd, Self::AllBatchGd];

    pub fn name(self) -> &'static str {
        match self {
            Self::Osgd => "osgd",
            Self::Sgd => "sgd",
            Self::AllBatchGd => "all-batch-gd",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub trace: RunTrace,
    /// First step after which every angle lies in `(pi/4 - rho, pi/4)`.
    pub hit_time: Option<usize>,
    pub final_state: ToyState,
}

fn in_target(s: &ToyState, rho: f64) -> bool {
    s.theta.iter().all(|&t| FRAC_PI_4 - rho < t && t < FRAC_PI_4)
}

struct ToyDriver {
    variant: ToyVariant,
    eta: f64,
    rho: f64,
    pairs: Vec<Batch>,
    rng: rng::StreamRng,
    state: ToyState,
}

impl ToyDriver {
    fn new(variant: ToyVariant, epsilon: f64, eta: f64, rho: f64, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < FRAC_PI_4) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, pi/4), got {epsilon}"
            )));
        }
        if !(rho > 0.0 && rho < FRAC_PI_4 - epsilon) {
            return Err(Error::InvalidArgument(format!(
                "rho must lie in (0, pi/4 - epsilon), got {rho}"
            )));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
        }
        Ok(Self {
            variant,
            eta,
            rho,
            pairs: enumerate_batches(4, 2)?.into_batches(),
            rng: rng::stream(seed, rng::STEP_STREAM),
            state: ToyState::symmetric(epsilon),
        })
    }

    /// Applies update `step` and returns the batches it used.
    fn advance(&mut self, step: usize) -> Result<Vec<Batch>> {
        let selected = match self.variant {
            ToyVariant::Osgd => {
                let mut best = 0;
                let mut best_loss = f64::NEG_INFINITY;
                for (i, p) in self.pairs.iter().enumerate() {
                    let l = toy_batch_loss(&self.state, p)?;
                    if l > best_loss {
                        best = i;
                        best_loss = l;
                    }
                }
                vec![self.pairs[best].clone()]
            }
            ToyVariant::Sgd => vec![self.pairs[self.rng.gen_range(0..self.pairs.len())].clone()],
            ToyVariant::AllBatchGd => self.pairs.clone(),
        };
        let mut grad = [0.0; 4];
        for p in &selected {
            let g = toy_gradient(&self.state, p)?;
            for (acc, gi) in grad.iter_mut().zip(g) {
                *acc += gi;
            }
        }
        let scale = self.eta / selected.len() as f64;
        for (t, gi) in self.state.theta.iter_mut().zip(grad) {
            *t -= scale * gi;
        }
        if let Some((index, &value)) = self
            .state
            .theta
            .iter()
            .enumerate()
            .find(|(_, &t)| !(t > 0.0 && t < FRAC_PI_2))
        {
            return Err(Error::ToyLeftDomain { index, value, step });
        }
        Ok(selected)
    }

    fn hit(&self) -> bool {
        in_target(&self.state, self.rho)
    }
}

/// Runs `max_steps` updates from the symmetric state `epsilon`.
pub fn run_toy(
    variant: ToyVariant,
    epsilon: f64,
    eta: f64,
    rho: f64,
    seed: u64,
    max_steps: usize,
) -> Result<ToyRun> {
    let mut driver = ToyDriver::new(variant, epsilon, eta, rho, seed)?;
    let oracle = make_cross_polytope(2)?;
    let mut hit_time = None;
    let mut records = Vec::with_capacity(max_steps);
    for step in 1..=max_steps {
        let selected = driver.advance(step)?;
        if hit_time.is_none() && driver.hit() {
            hit_time = Some(step);
        }
        let emb = toy_embeddings(&driver.state);
        records.push(StepRecord {
            step,
            full_loss: full_loss(&emb),
            oracle_dist: Some(oracle_distance(&emb, &oracle)?),
            selected,
        });
    }
    Ok(ToyRun {
        trace: RunTrace { records },
        hit_time,
        final_state: driver.state,
    })
}

/// Hitting time alone: the same dynamics as [`run_toy`] with the same seed,
/// stopped at the first step inside the target region. No trace is kept.
pub fn toy_hit_time(
    variant: ToyVariant,
    epsilon: f64,
    eta: f64,
    rho: f64,
    seed: u64,
    max_steps: usize,
) -> Result<Option<usize>> {
    let mut driver = ToyDriver::new(variant, epsilon, eta, rho, seed)?;
    for step in 1..=max_steps {
        driver.advance(step)?;
        if driver.hit() {
            return Ok(Some(step));
        }
    }
    Ok(None)
}

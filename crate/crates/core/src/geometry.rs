//! Closed-form optimal configurations and distances to them.

use nalgebra::DMatrix;

use crate::embedding::EmbeddingPair;
use crate::error::{Error, Result};

/// Tolerance used when classifying optimizer outputs, coarse enough to
/// match heatmap-level agreement.
pub const DEFAULT_CLASSIFY_TOL: f64 = 0.05;

/// `N x N` matrix of inner products `u_i . v_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(pub DMatrix<f64>);

impl GramMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    SimplexEtf,
    CrossPolytope,
}

/// Simplex ETF: `U = V` with unit columns and `u_i . u_j = -1/(n-1)`.
///
/// Column `i` holds the coordinates of the centered basis vector
/// `e_i - 1/n` in the Helmert basis of the sum-zero subspace, rescaled to
/// unit norm and padded with zeros up to `d` rows.
pub fn make_simplex_etf(n: usize, d: usize) -> Result<EmbeddingPair> {
    if n < 2 {
        return Err(Error::Infeasible(format!("simplex ETF needs n >= 2, got {n}")));
    }
    if n > d + 1 {
        return Err(Error::Infeasible(format!(
            "simplex ETF with n = {n} needs d >= {}, got d = {d}",
            n - 1
        )));
    }
    let scale = (n as f64 / (n - 1) as f64).sqrt();
    let mut u = DMatrix::zeros(d, n);
    for k in 1..n {
        // Helmert vector k: k ones, then -k, then zeros, over sqrt(k (k + 1)).
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            u[(k - 1, i)] = scale / norm;
        }
        u[(k - 1, k)] = -(k as f64) * scale / norm;
    }
    EmbeddingPair::normalized(u.clone(), u)
}

/// Simplex cross-polytope in `d` dimensions: columns `e_1..e_d, -e_1..-e_d`.
pub fn make_cross_polytope(d: usize) -> Result<EmbeddingPair> {
    if d == 0 {
        return Err(Error::Infeasible("cross-polytope needs d >= 1".into()));
    }
    let u = DMatrix::from_fn(d, 2 * d, |r, c| {
        if c == r {
            1.0
        } else if c == r + d {
            -1.0
        } else {
            0.0
        }
    });
    EmbeddingPair::symmetric(u)
}

/// The known optimum for `(n, d)`, when one exists: the simplex ETF for
/// `n <= d + 1`, the cross-polytope for `n = 2d`.
pub fn default_oracle(n: usize, d: usize) -> Option<EmbeddingPair> {
    if n >= 2 && n <= d + 1 {
        make_simplex_etf(n, d).ok()
    } else if n == 2 * d {
        make_cross_polytope(d).ok()
    } else {
        None
    }
}

pub fn gram(emb: &EmbeddingPair) -> GramMatrix {
    GramMatrix(emb.u().transpose() * emb.v())
}

/// Frobenius distance between the Gram matrices of `emb` and `oracle`.
pub fn oracle_distance(emb: &EmbeddingPair, oracle: &EmbeddingPair) -> Result<f64> {
    if emb.len() != oracle.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot compare {} pairs with an oracle of {} pairs",
            emb.len(),
            oracle.len()
        )));
    }
    Ok((gram(emb).0 - gram(oracle).0).norm())
}

fn etf_target(n: usize, i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        -1.0 / (n as f64 - 1.0)
    }
}

/// Recognizes a simplex ETF (with `U = V`) or a cross-polytope Gram pattern
/// within `tol`.
pub fn classify_configuration(emb: &EmbeddingPair, tol: f64) -> Option<OracleKind> {
    let n = emb.len();
    if n < 2 {
        return None;
    }
    let g = gram(emb).0;

    let etf_err = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (g[(i, j)] - etf_target(n, i, j)).abs())
        .fold(0.0, f64::max);
    let uv_err = (emb.u() - emb.v()).abs().max();
    if etf_err <= tol && uv_err <= tol {
        return Some(OracleKind::SimplexEtf);
    }

    if n.is_multiple_of(2) && matches_cross_polytope(&g, tol) {
        return Some(OracleKind::CrossPolytope);
    }
    None
}

/// Pairs every row with its most negative off-diagonal entry (lowest index
/// on ties) and checks the resulting involution against the
/// `1 / -1 / 0` pattern.
fn matches_cross_polytope(g: &DMatrix<f64>, tol: f64) -> bool {
    let n = g.nrows();
    let partner: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = if i == 0 { 1 } else { 0 };
            for j in (0..n).filter(|&j| j != i) {
                if g[(i, j)] < g[(i, best)] {
                    best = j;
                }
            }
            best
        })
        .collect();
    if (0..n).any(|i| partner[partner[i]] != i) {
        return false;
    }
    (0..n).all(|i| {
        (0..n).all(|j| {
            let target = if i == j {
                1.0
            } else if j == partner[i] {
                -1.0
            } else {
                0.0
            };
            (g[(i, j)] - target).abs() <= tol
        })
    })
}

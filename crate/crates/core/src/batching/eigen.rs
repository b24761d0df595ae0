//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest tolerated `|m_ij - m_ji|` for input matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Sweeps stop once the off-diagonal Frobenius norm falls below this,
/// relative to `max(1, ||m||_F)`.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Leading eigenpairs: eigenvalues ascending, eigenvectors as the columns of
/// `vectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Full eigendecomposition by cyclic row-order Jacobi rotations, sorted by
/// ascending eigenvalue (ties keep diagonal order).
///
/// Each eigenvector is signed so that its largest-magnitude entry (first one
/// on ties) is positive.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> Result<EigenPairs> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::NotSquare {
            rows: n,
            cols: m.ncols(),
        });
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigensolver input".into()));
    }

    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let threshold = OFF_DIAGONAL_TOL * m.norm().max(1.0);

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) < threshold {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate_columns(&mut a, p, q, c, s);
                rotate_rows(&mut a, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = v.select_columns(&order);
    for mut col in vectors.column_iter_mut() {
        let mut pivot = 0;
        for (r, x) in col.iter().enumerate() {
            if x.abs() > col[pivot].abs() {
                pivot = r;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(EigenPairs { values, vectors })
}

/// The `k` eigenpairs with the smallest eigenvalues.
pub fn smallest_eigenpairs(m: &DMatrix<f64>, k: usize) -> Result<EigenPairs> {
    if k == 0 || k > m.nrows() {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let full = jacobi_eigen(m)?;
    Ok(EigenPairs {
        values: full.values[..k].to_vec(),
        vectors: full.vectors.columns(0, k).into_owned(),
    })
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

// Right-multiplication by the plane rotation J(p, q) with J_pq = s, J_qp = -s.
fn rotate_columns(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..a.nrows() {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
}

fn rotate_rows(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..a.ncols() {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
}

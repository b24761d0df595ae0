//! Batch contrastive losses, the Jensen lower bound, pair weights and the
//! closed-form gradients of the batch loss.
//!
//! For a batch `B` with logits `X = U_B^T V_B`, the two-sided loss is
//!
//! ```text
//! L(X) = 1/|B| sum_i [ lse(X[i, :]) - X[i, i] ] + 1/|B| sum_j [ lse(X[:, j]) - X[j, j] ]
//! ```
//!
//! and its gradient is `(-2 I + P + Q) / |B|` with `P` the row softmax and `Q`
//! the column softmax of `X`. All logarithms are natural.

use nalgebra::DMatrix;

use crate::embedding::{Batch, BatchCollection, EmbeddingPair};
use crate::error::{Error, Result};

/// Per-batch losses and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// `(position in the collection, loss)`.
    pub per_batch: Vec<(usize, f64)>,
}

pub(crate) fn log_sum_exp<I: Iterator<Item = f64> + Clone>(values: I) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(1 + exp(x))` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logits `U_B^T V_B` for a batch, after checking it against `emb`.
pub fn batch_logits(emb: &EmbeddingPair, batch: &Batch) -> Result<DMatrix<f64>> {
    batch.check_within(emb.len())?;
    let idx = batch.indices();
    let ub = emb.u().select_columns(idx);
    let vb = emb.v().select_columns(idx);
    Ok(ub.transpose() * vb)
}

fn row_term(x: &DMatrix<f64>) -> f64 {
    let b = x.nrows();
    let sum: f64 = (0..b)
        .map(|i| log_sum_exp(x.row(i).iter().copied()) - x[(i, i)])
        .sum();
    sum / b as f64
}

/// Two-sided loss of a square logit matrix.
pub fn logit_loss(x: &DMatrix<f64>) -> Result<f64> {
    check_square(x)?;
    Ok(row_term(x) + row_term(&x.transpose()))
}

/// `1/b sum_i -log( exp(u_i.v_i) / sum_j exp(u_i.v_j) )` over the batch.
pub fn one_sided_loss(emb: &EmbeddingPair, batch: &Batch) -> Result<f64> {
    let x = batch_logits(emb, batch)?;
    Ok(row_term(&x))
}

/// Symmetric InfoNCE loss of the batch: both one-sided terms summed.
pub fn contrastive_loss(emb: &EmbeddingPair, batch: &Batch) -> Result<f64> {
    let x = batch_logits(emb, batch)?;
    logit_loss(&x)
}

/// Loss on the full batch `0..N`.
pub fn full_loss(emb: &EmbeddingPair) -> f64 {
    let x = emb.u().transpose() * emb.v();
    row_term(&x) + row_term(&x.transpose())
}

/// Mean contrastive loss over a collection of batches.
pub fn avg_minibatch_loss(emb: &EmbeddingPair, coll: &BatchCollection) -> Result<LossBreakdown> {
    if coll.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let per_batch = coll
        .batches()
        .iter()
        .enumerate()
        .map(|(pos, b)| contrastive_loss(emb, b).map(|l| (pos, l)))
        .collect::<Result<Vec<_>>>()?;
    let total = per_batch.iter().map(|&(_, l)| l).sum::<f64>() / per_batch.len() as f64;
    Ok(LossBreakdown { total, per_batch })
}

fn check_square(x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != x.ncols() {
        return Err(Error::NotSquare {
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

/// Row-wise softmax.
pub fn row_softmax(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = x.clone();
    for mut row in p.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.apply(|e| *e = (*e - max).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Column-wise softmax.
pub fn column_softmax(x: &DMatrix<f64>) -> DMatrix<f64> {
    row_softmax(&x.transpose()).transpose()
}

/// Gradient of [`logit_loss`] with respect to the logits:
/// `(-2 I + P_X + Q_X) / B`.
pub fn lm_gradient(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(x)?;
    let b = x.nrows();
    let mut g = row_softmax(x) + column_softmax(x);
    for i in 0..b {
        g[(i, i)] -= 2.0;
    }
    Ok(g / b as f64)
}

/// Gradients of the batch loss with respect to the batch columns,
/// `(V_B G^T, U_B G)` with `G = lm_gradient(U_B^T V_B)`. Both are `d x b`,
/// column `t` belonging to `batch.indices()[t]`.
pub fn batch_gradient(
    emb: &EmbeddingPair,
    batch: &Batch,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let x = batch_logits(emb, batch)?;
    let g = lm_gradient(&x)?;
    let idx = batch.indices();
    let ub = emb.u().select_columns(idx);
    let vb = emb.v().select_columns(idx);
    Ok((vb * g.transpose(), ub * g))
}

/// Batch gradient scattered into full-width `d x N` buffers; columns outside
/// the batch are zero.
pub fn scattered_batch_gradient(
    emb: &EmbeddingPair,
    batch: &Batch,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (gu, gv) = batch_gradient(emb, batch)?;
    let mut full_u = DMatrix::zeros(emb.dim(), emb.len());
    let mut full_v = DMatrix::zeros(emb.dim(), emb.len());
    for (t, &i) in batch.indices().iter().enumerate() {
        full_u.set_column(i, &gu.column(t));
        full_v.set_column(i, &gv.column(t));
    }
    Ok((full_u, full_v))
}

/// Jensen lower bound of the batch loss:
///
/// ```text
/// 1/(B(B-1)) sum_i sum_{j != i} [ ln(1 + (B-1) e^{u_i.(v_j - v_i)}) + ln(1 + (B-1) e^{v_i.(u_j - u_i)}) ]
/// ```
pub fn jensen_lower_bound(emb: &EmbeddingPair, batch: &Batch) -> Result<f64> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    let x = batch_logits(emb, batch)?;
    let log_bm1 = ((b - 1) as f64).ln();
    let mut sum = 0.0;
    for i in 0..b {
        for j in (0..b).filter(|&j| j != i) {
            sum += softplus(log_bm1 + x[(i, j)] - x[(i, i)]);
            sum += softplus(log_bm1 + x[(j, i)] - x[(i, i)]);
        }
    }
    Ok(sum / (b * (b - 1)) as f64)
}

/// Edge weight `w(k, l)` of the batch-selection graph for batch size `b`;
/// symmetric in `k` and `l`.
pub fn pair_weight(emb: &EmbeddingPair, k: usize, l: usize, b: usize) -> Result<f64> {
    let n = emb.len();
    for index in [k, l] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n });
        }
    }
    if k == l {
        return Err(Error::SelfPair(k));
    }
    if b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    let (u, v) = (emb.u(), emb.v());
    let log_bm1 = ((b - 1) as f64).ln();
    let mut w = 0.0;
    for (i, j) in [(k, l), (l, k)] {
        let (ui, vi) = (u.column(i), v.column(i));
        let uv = ui.dot(&v.column(j)) - ui.dot(&vi);
        let vu = vi.dot(&u.column(j)) - vi.dot(&ui);
        w += softplus(log_bm1 + uv) + softplus(log_bm1 + vu);
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn basis(n: usize) -> EmbeddingPair {
        EmbeddingPair::symmetric(DMatrix::identity(n, n)).unwrap()
    }

    fn collapsed(n: usize, d: usize) -> EmbeddingPair {
        EmbeddingPair::symmetric(DMatrix::from_fn(d, n, |r, _| if r == 0 { 1.0 } else { 0.0 }))
            .unwrap()
    }

    fn all_pairs(n: usize) -> BatchCollection {
        let mut batches = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                batches.push(Batch::new(vec![i, j], n).unwrap());
            }
        }
        BatchCollection::general(batches).unwrap()
    }

    #[test]
    fn one_sided_closed_forms() {
        let full = Batch::full(4).unwrap();
        let l = one_sided_loss(&basis(4), &full).unwrap();
        assert!((l - ((E + 3.0).ln() - 1.0)).abs() < 1e-12);
        assert!((l - 0.743668).abs() < 1e-6);
        let l = one_sided_loss(&collapsed(4, 2), &full).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_element_batch_has_zero_loss() {
        let u = DMatrix::from_column_slice(3, 1, &[0.6, 0.0, 0.8]);
        let emb = EmbeddingPair::symmetric(u).unwrap();
        let b = Batch::single(0, 1).unwrap();
        assert_eq!(one_sided_loss(&emb, &b).unwrap(), 0.0);
        assert_eq!(contrastive_loss(&emb, &b).unwrap(), 0.0);
    }

    #[test]
    fn two_sided_values() {
        let full = Batch::full(4).unwrap();
        let l = contrastive_loss(&basis(4), &full).unwrap();
        assert!((l - 2.0 * ((E + 3.0).ln() - 1.0)).abs() < 1e-12);
        assert!((l - 1.487337).abs() < 1e-6);
        assert_eq!(l, full_loss(&basis(4)));

        let dup = collapsed(2, 3);
        let l = contrastive_loss(&dup, &Batch::full(2).unwrap()).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn minibatch_means() {
        let coll = all_pairs(4);
        let r = avg_minibatch_loss(&basis(4), &coll).unwrap();
        assert_eq!(r.per_batch.len(), 6);
        assert!((r.total - 2.0 * ((E + 1.0).ln() - 1.0)).abs() < 1e-12);
        assert!((r.total - 0.626523).abs() < 1e-5);
        let r = avg_minibatch_loss(&collapsed(4, 2), &coll).unwrap();
        assert!((r.total - 2.0 * 2f64.ln()).abs() < 1e-12);

        let only_full = BatchCollection::general(vec![Batch::full(4).unwrap()]).unwrap();
        let r = avg_minibatch_loss(&basis(4), &only_full).unwrap();
        assert_eq!(r.total, full_loss(&basis(4)));
    }

    #[test]
    fn lm_gradient_at_zero() {
        let g = lm_gradient(&DMatrix::zeros(2, 2)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, -0.5]);
        assert!((g - expected).abs().max() < 1e-15);
    }

    #[test]
    fn lm_gradient_rejects_non_square() {
        assert_eq!(
            lm_gradient(&DMatrix::zeros(2, 3)),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        );
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = DMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let p = row_softmax(&x);
        for row in p.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-14);
        }
        let q = column_softmax(&x);
        for col in q.column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn jensen_orthogonal_pair() {
        let emb = basis(4);
        let b = Batch::new(vec![1, 3], 4).unwrap();
        let lb = jensen_lower_bound(&emb, &b).unwrap();
        let expected = 2.0 * (-1f64).exp().ln_1p();
        assert!((lb - expected).abs() < 1e-14);
        assert!((lb - 0.626523).abs() < 1e-6);
        // B = 2 has a single term per row, so the bound is tight.
        assert!((lb - contrastive_loss(&emb, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pair_weight_values() {
        let emb = basis(4);
        let w = pair_weight(&emb, 0, 2, 2).unwrap();
        assert!((w - 4.0 * (-1f64).exp().ln_1p()).abs() < 1e-14);
        assert!((w - 1.253046).abs() < 1e-6);
        assert_eq!(pair_weight(&emb, 1, 1, 2), Err(Error::SelfPair(1)));
        let b = Batch::new(vec![0, 2], 4).unwrap();
        assert!((jensen_lower_bound(&emb, &b).unwrap() - w / 2.0).abs() < 1e-14);
    }

    #[test]
    fn out_of_range_batch_rejected() {
        let b = Batch::new(vec![0, 5], 6).unwrap();
        assert_eq!(
            contrastive_loss(&basis(4), &b),
            Err(Error::IndexOutOfRange { index: 5, n: 4 })
        );
    }
}

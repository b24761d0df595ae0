//! Embedding pairs, batches and batch collections.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Tolerance on column norms accepted by [`EmbeddingPair::new`].
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Two `d x N` matrices whose columns are unit-norm embeddings of `N`
/// positive pairs `(u_i, v_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl EmbeddingPair {
    /// Wraps `u` and `v`, checking shapes and unit column norms.
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        check_shapes(&u, &v)?;
        for (side, m) in [("u", &u), ("v", &v)] {
            for (column, col) in m.column_iter().enumerate() {
                let norm = col.norm();
                if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(Error::NotUnitNorm { side, column, norm });
                }
            }
        }
        Ok(Self { u, v })
    }

    /// Normalizes every column of `u` and `v` and wraps the result.
    pub fn normalized(mut u: DMatrix<f64>, mut v: DMatrix<f64>) -> Result<Self> {
        check_shapes(&u, &v)?;
        normalize_columns(&mut u)?;
        normalize_columns(&mut v)?;
        Ok(Self { u, v })
    }

    /// Symmetric pair with `v = u`.
    pub fn symmetric(u: DMatrix<f64>) -> Result<Self> {
        let v = u.clone();
        Self::new(u, v)
    }

    /// Columns drawn from a standard normal per coordinate and then normalized.
    pub fn random<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::EmptyEmbedding);
        }
        let u = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self::normalized(u, v)
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Embedding dimension `d`.
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// Number of positive pairs `N`.
    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.u.ncols() == 0
    }

    /// Restricts to the given columns, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            u: self.u.select_columns(indices),
            v: self.v.select_columns(indices),
        }
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.u, self.v)
    }

    /// `self.u - eta * gu`, `self.v - eta * gv`, then column normalization.
    pub(crate) fn retract(&self, gu: &DMatrix<f64>, gv: &DMatrix<f64>, eta: f64) -> Result<Self> {
        let u = &self.u - gu * eta;
        let v = &self.v - gv * eta;
        Self::normalized(u, v)
    }
}

fn check_shapes(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<()> {
    if u.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            u_rows: u.nrows(),
            u_cols: u.ncols(),
            v_rows: v.nrows(),
            v_cols: v.ncols(),
        });
    }
    if u.nrows() == 0 || u.ncols() == 0 {
        return Err(Error::EmptyEmbedding);
    }
    Ok(())
}

/// Scales every column to unit Euclidean norm.
pub fn normalize_columns(m: &mut DMatrix<f64>) -> Result<()> {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NonFinite(format!("column {j} has norm {norm}")));
        }
        col /= norm;
    }
    Ok(())
}

/// An index subset of `0..N` used as a mini-batch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Batch {
    indices: Vec<usize>,
}

impl Batch {
    /// Validates distinct indices in `0..n` and a size of at least 2.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if indices.len() < 2 {
            return Err(Error::BatchTooSmall(indices.len()));
        }
        validate_indices(&indices, n)?;
        Ok(Self { indices })
    }

    /// A one-element batch. The batch losses evaluate to zero on it; nothing
    /// else in the crate accepts it.
    pub fn single(index: usize, n: usize) -> Result<Self> {
        validate_indices(&[index], n)?;
        Ok(Self {
            indices: vec![index],
        })
    }

    /// The full batch `0..n`.
    pub fn full(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), n)
    }

    pub(crate) fn from_sorted_unchecked(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Indices in ascending order; the lexicographic batch identifier.
    pub fn sorted_key(&self) -> Vec<usize> {
        let mut key = self.indices.clone();
        key.sort_unstable();
        key
    }

    pub(crate) fn check_within(&self, n: usize) -> Result<()> {
        match self.indices.iter().find(|&&i| i >= n) {
            Some(&index) => Err(Error::IndexOutOfRange { index, n }),
            None => Ok(()),
        }
    }
}

fn validate_indices(indices: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if seen[i] {
            return Err(Error::DuplicateIndex(i));
        }
        seen[i] = true;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectionKind {
    /// Pairwise disjoint batches covering `0..N`.
    Partition,
    General,
}

/// A nonempty list of equal-size batches.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchCollection {
    batches: Vec<Batch>,
    kind: CollectionKind,
}

impl BatchCollection {
    pub fn general(batches: Vec<Batch>) -> Result<Self> {
        check_equal_sizes(&batches)?;
        Ok(Self {
            batches,
            kind: CollectionKind::General,
        })
    }

    /// Checks that `batches` are disjoint and cover `0..n`.
    pub fn partition(batches: Vec<Batch>, n: usize) -> Result<Self> {
        check_equal_sizes(&batches)?;
        let mut seen = vec![false; n];
        let mut covered = 0;
        for batch in &batches {
            for &i in batch.indices() {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, n });
                }
                if seen[i] {
                    return Err(Error::NotAPartition(n));
                }
                seen[i] = true;
                covered += 1;
            }
        }
        if covered != n {
            return Err(Error::NotAPartition(n));
        }
        Ok(Self {
            batches,
            kind: CollectionKind::Partition,
        })
    }

    /// Consecutive blocks `{0..b}, {b..2b}, ...`.
    pub fn consecutive_partition(n: usize, b: usize) -> Result<Self> {
        if b == 0 || !n.is_multiple_of(b) {
            return Err(Error::NotDivisible { n, divisor: b });
        }
        let batches = (0..n / b)
            .map(|c| Batch::new((c * b..(c + 1) * b).collect(), n))
            .collect::<Result<Vec<_>>>()?;
        Self::partition(batches, n)
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn kind(&self) -> CollectionKind {
        self.kind
    }

    pub fn is_partition(&self) -> bool {
        self.kind == CollectionKind::Partition
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// Common batch size.
    pub fn batch_size(&self) -> usize {
        self.batches[0].len()
    }

    pub fn into_batches(self) -> Vec<Batch> {
        self.batches
    }
}

fn check_equal_sizes(batches: &[Batch]) -> Result<()> {
    let first = batches.first().ok_or(Error::EmptyCollection)?;
    match batches.iter().find(|b| b.len() != first.len()) {
        Some(other) => Err(Error::UnequalBatchSizes(first.len(), other.len())),
        None => Ok(()),
    }
}

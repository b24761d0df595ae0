//! Spectral batch selection.
//!
//! Nodes are positive pairs and edge weights are the pairwise terms of the
//! Jensen lower bound of the batch loss, so batches that keep heavy edges
//! together are high-loss batches. The pipeline is
//! affinity -> Laplacian `D - A` -> `N/B` smallest eigenvectors ->
//! row normalization -> k-means -> balanced assignment of exactly `B`
//! nodes per center.

pub mod eigen;
pub mod hungarian;
pub mod kmeans;
pub mod mincut;

use nalgebra::DMatrix;

use crate::embedding::{Batch, BatchCollection, EmbeddingPair};
use crate::error::{Error, Result};
use crate::loss::{contrastive_loss, pair_weight};
use crate::rng;

pub use eigen::{jacobi_eigen, smallest_eigenpairs, EigenPairs};
pub use hungarian::min_cost_assignment;
pub use kmeans::{kmeans, KMeans};
pub use mincut::{brute_force_min_cut, cut_weight, total_edge_weight, within_batch_weight};

/// Symmetric, nonnegative edge weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph(DMatrix<f64>);

impl AffinityGraph {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::NotSquare {
                rows: n,
                cols: a.ncols(),
            });
        }
        for i in 0..n {
            if a[(i, i)] != 0.0 {
                return Err(Error::InvalidAffinity(format!("diagonal entry {i} is nonzero")));
            }
            for j in 0..n {
                let x = a[(i, j)];
                if !(x.is_finite() && x >= 0.0) {
                    return Err(Error::InvalidAffinity(format!("entry ({i}, {j}) = {x}")));
                }
                if x != a[(j, i)] {
                    return Err(Error::InvalidAffinity(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ"
                    )));
                }
            }
        }
        Ok(Self(a))
    }

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

/// `A_ij = w(i, j)` for `i != j`.
pub fn build_affinity(emb: &EmbeddingPair, b: usize) -> Result<AffinityGraph> {
    let n = emb.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("affinity needs N >= 2, got {n}")));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let w = pair_weight(emb, i, j, b)?;
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    AffinityGraph::new(a)
}

/// Unnormalized graph Laplacian `D - A`.
pub fn laplacian(a: &AffinityGraph) -> DMatrix<f64> {
    let m = a.matrix();
    let mut l = -m.clone();
    for i in 0..m.nrows() {
        l[(i, i)] = m.row(i).sum();
    }
    l
}

/// Spectral coordinates of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    /// Row `i` holds the coordinates of node `i`.
    pub rows: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
}

impl SpectralEmbedding {
    /// Scales every nonzero row to unit norm.
    pub fn normalize_rows(mut self) -> Self {
        for mut row in self.rows.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        self
    }
}

/// The `k` eigenvectors of `m` with the smallest eigenvalues, as rows.
pub fn symmetric_eigs(m: &DMatrix<f64>, k: usize) -> Result<SpectralEmbedding> {
    let pairs = smallest_eigenpairs(m, k)?;
    Ok(SpectralEmbedding {
        rows: pairs.vectors,
        eigenvalues: pairs.values,
    })
}

/// Assigns exactly `b` rows of `points` to each center, minimizing the total
/// Euclidean distance. Batch `c` collects the points given to center `c`.
pub fn balanced_assign(
    points: &DMatrix<f64>,
    centers: &DMatrix<f64>,
    b: usize,
) -> Result<BatchCollection> {
    let n = points.nrows();
    let k = centers.nrows();
    if b == 0 || !n.is_multiple_of(b) {
        return Err(Error::NotDivisible { n, divisor: b });
    }
    if n != k * b {
        return Err(Error::InvalidArgument(format!(
            "{n} points cannot fill {k} centers with {b} slots each"
        )));
    }
    if points.ncols() != centers.ncols() {
        return Err(Error::InvalidArgument(format!(
            "points have {} coordinates, centers {}",
            points.ncols(),
            centers.ncols()
        )));
    }
    let cost = DMatrix::from_fn(n, n, |i, slot| (points.row(i) - centers.row(slot / b)).norm());
    let (assignment, _) = min_cost_assignment(&cost)?;
    let mut groups = vec![Vec::with_capacity(b); k];
    for (i, &slot) in assignment.iter().enumerate() {
        groups[slot / b].push(i);
    }
    let batches = groups
        .into_iter()
        .map(|g| Batch::new(g, n))
        .collect::<Result<Vec<_>>>()?;
    BatchCollection::partition(batches, n)
}

/// Total point-to-center distance of a partition whose batch `c` belongs to
/// center `c`.
pub fn assignment_cost(points: &DMatrix<f64>, centers: &DMatrix<f64>, coll: &BatchCollection) -> f64 {
    coll.batches()
        .iter()
        .enumerate()
        .flat_map(|(c, b)| b.indices().iter().map(move |&i| (c, i)))
        .map(|(c, i)| (points.row(i) - centers.row(c)).norm())
        .sum()
}

/// Partitions the pairs of `emb` into `N/b` batches of size `b` by
/// balanced spectral clustering of the affinity graph.
pub fn sc_select(emb: &EmbeddingPair, b: usize, seed: u64) -> Result<BatchCollection> {
    let n = emb.len();
    if b < 2 || !n.is_multiple_of(b) {
        return Err(Error::NotDivisible { n, divisor: b });
    }
    let k = n / b;
    if k == 1 {
        return BatchCollection::partition(vec![Batch::full(n)?], n);
    }
    let a = build_affinity(emb, b)?;
    let spectral = symmetric_eigs(&laplacian(&a), k)?.normalize_rows();
    let clusters = kmeans(&spectral.rows, k, seed)?;
    balanced_assign(&spectral.rows, &clusters.centers, b)
}

/// Splits `0..N` at random into chunks of `chunk_k * b` pairs, runs
/// [`sc_select`] inside each chunk and concatenates the batches.
///
/// Chunk `c` uses seed `derive_seed(seed, c)`, except that chunk 0 uses
/// `seed` itself; chunk members are kept in ascending order, so a single
/// chunk reproduces `sc_select(emb, b, seed)`.
pub fn chunked_sc_select(
    emb: &EmbeddingPair,
    b: usize,
    chunk_k: usize,
    seed: u64,
) -> Result<BatchCollection> {
    let n = emb.len();
    let chunk = chunk_k * b;
    if chunk == 0 || !n.is_multiple_of(chunk) {
        return Err(Error::NotDivisible { n, divisor: chunk });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    if n > chunk {
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng::stream(seed, rng::STEP_STREAM));
    }
    let mut batches = Vec::with_capacity(n / b);
    for (c, members) in perm.chunks(chunk).enumerate() {
        let mut members = members.to_vec();
        members.sort_unstable();
        let chunk_seed = if c == 0 { seed } else { rng::derive_seed(seed, c as u64) };
        let local = sc_select(&emb.select(&members), b, chunk_seed)?;
        for batch in local.batches() {
            let global = batch.indices().iter().map(|&i| members[i]).collect();
            batches.push(Batch::new(global, n)?);
        }
    }
    BatchCollection::partition(batches, n)
}

/// Equal-width histogram of per-batch losses over `[min, max]`, as
/// `(lower edge, count)`. A degenerate range puts everything in the first bin.
pub fn batch_loss_histogram(
    emb: &EmbeddingPair,
    coll: &BatchCollection,
    bins: usize,
) -> Result<Vec<(f64, usize)>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let losses = coll
        .batches()
        .iter()
        .map(|b| contrastive_loss(emb, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(histogram(&losses, bins))
}

pub(crate) fn histogram(values: &[f64], bins: usize) -> Vec<(f64, usize)> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 0.0 };
    let mut counts = vec![0usize; bins];
    for &x in values {
        let slot = if width > 0.0 {
            (((x - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[slot] += 1;
    }
    let lo = if lo.is_finite() { lo } else { 0.0 };
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, c))
        .collect()
}

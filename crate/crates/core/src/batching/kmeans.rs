//! Lloyd's k-means with k-means++ seeding over the rows of a matrix.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    /// One center per row.
    pub centers: DMatrix<f64>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub objective_history: Vec<f64>,
}

impl KMeans {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (points.row(i) - centers.row(c)).norm_squared()
}

fn nearest(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.nrows() {
        let d = sq_dist(points, i, centers, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Within-cluster sum of squares of a labeling.
pub fn wcss(points: &DMatrix<f64>, labels: &[usize], centers: &DMatrix<f64>) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points, i, centers, c))
        .sum()
}

fn plus_plus_seeds<R: Rng>(points: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| (points.row(i) - points.row(chosen[0])).norm_squared())
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // Every point coincides with a chosen center.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min((points.row(i) - points.row(next)).norm_squared());
        }
    }
    points.select_rows(&chosen)
}

/// Clusters the rows of `points` into `k` groups.
///
/// Empty clusters are reseeded at the point farthest from its current
/// center. Iteration stops at a label fixpoint or after
/// [`MAX_ITERATIONS`].
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeans> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k-means needs 1 <= k <= N, got k = {k}, N = {n}"
        )));
    }
    let mut rng = rng::stream(seed, rng::STEP_STREAM);
    let mut centers = plus_plus_seeds(points, k, &mut rng);
    let mut labels: Vec<usize> = (0..n).map(|i| nearest(points, i, &centers).0).collect();
    let mut history = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        // Update step.
        let dim = points.ncols();
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += points.row(i);
            counts[c] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                centers.set_row(c, &(sums.row(c) / count as f64));
            }
        }
        let mut reseeded = Vec::new();
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .filter(|i| !reseeded.contains(i))
                .max_by(|&i, &j| {
                    sq_dist(points, i, &centers, labels[i])
                        .total_cmp(&sq_dist(points, j, &centers, labels[j]))
                        .then(j.cmp(&i))
                })
                .unwrap_or(0);
            centers.set_row(c, &points.row(far));
            labels[far] = c;
            reseeded.push(far);
        }
        history.push(wcss(points, &labels, &centers));

        // Assignment step.
        let next: Vec<usize> = (0..n).map(|i| nearest(points, i, &centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(KMeans {
        labels,
        centers,
        objective_history: history,
    })
}

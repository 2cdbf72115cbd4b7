//! Starting points for the orthonormal factor F.

use ndarray::{Array1, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qr_orthonormalize, random_matrix, truncated_svd, Matrix, RandomLaw};

pub const KMEANS_MAX_ITERS: usize = 50;
pub const KMEANS_RETRIES: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Svd,
    Kmeans,
    Random,
}

impl std::str::FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "svd" => Ok(Init::Svd),
            "kmeans" => Ok(Init::Kmeans),
            "random" => Ok(Init::Random),
            other => Err(format!("unknown init '{other}'")),
        }
    }
}

/// Orthonormal p×k starting point for the given strategy.
pub fn init_f(x: &Matrix, k: usize, init: Init, seed: u64) -> Result<Matrix> {
    match init {
        Init::Svd => init_f_svd(x, k),
        Init::Kmeans => init_f_kmeans(x, k, seed),
        Init::Random => {
            let (p, n) = x.dim();
            if k == 0 || k > p.min(n) {
                return Err(Error::RankOutOfRange { k, rows: p, cols: n });
            }
            random_matrix(p, k, RandomLaw::Orthonormal, seed)
        }
    }
}

/// Leading k left singular vectors of X.
pub fn init_f_svd(x: &Matrix, k: usize) -> Result<Matrix> {
    Ok(truncated_svd(x, k)?.u)
}

/// K-means centroids of the columns of X, orthonormalised by QR.
pub fn init_f_kmeans(x: &Matrix, k: usize, seed: u64) -> Result<Matrix> {
    let (p, n) = x.dim();
    if k == 0 || k > n || k > p {
        return Err(Error::RankOutOfRange { k, rows: p, cols: n });
    }
    let mut last_err = None;
    for attempt in 0..KMEANS_RETRIES {
        let clusters = kmeans_columns(x, k, seed.wrapping_add(attempt))?;
        match qr_orthonormalize(&clusters.centroids) {
            Ok(q) => return Ok(q),
            Err(e) => {
                log::debug!("k-means init attempt {attempt} produced degenerate centroids: {e}");
                last_err = Some(e);
            }
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Lloyd's algorithm over the columns of a p×n matrix.
#[derive(Debug, Clone)]
pub struct ColumnClusters {
    /// p×k, one centroid per column.
    pub centroids: Matrix,
    /// Cluster index of every column of X.
    pub assignments: Vec<usize>,
}

/// Seeded Lloyd's k-means on the columns of `x`, starting from k distinct
/// columns and running at most [`KMEANS_MAX_ITERS`] rounds. Empty clusters
/// keep their previous centroid.
pub fn kmeans_columns(x: &Matrix, k: usize, seed: u64) -> Result<ColumnClusters> {
    let (p, n) = x.dim();
    if k == 0 || k > n {
        return Err(Error::RankOutOfRange { k, rows: p, cols: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, n, k).into_vec();
    picks.sort_unstable();
    let mut centroids = x.select(Axis(1), &picks);
    let col_sq: Array1<f64> = x.columns().into_iter().map(|c| c.dot(&c)).collect();
    let mut assignments = vec![usize::MAX; n];

    for _ in 0..KMEANS_MAX_ITERS {
        let cross = x.t().dot(&centroids);
        let cen_sq: Vec<f64> = centroids.columns().into_iter().map(|c| c.dot(&c)).collect();
        let mut changed = false;
        for j in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = col_sq[j] - 2.0 * cross[[j, c]] + cen_sq[c];
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignments[j] != best {
                assignments[j] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros((p, k));
        let mut counts = vec![0usize; k];
        for (j, &c) in assignments.iter().enumerate() {
            sums.column_mut(c).scaled_add(1.0, &x.column(j));
            counts[c] += 1;
        }
        for (c, &count) in counts.iter().enumerate().filter(|(_, &n)| n > 0) {
            centroids.column_mut(c).assign(&sums.column(c).mapv(|v| v / count as f64));
        }
    }
    Ok(ColumnClusters { centroids, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthogonality_residual;
    use ndarray::{array, Array1};

    #[test]
    fn svd_init_is_orthonormal() {
        let f = init_f_svd(&Matrix::eye(4), 2).unwrap();
        assert!(orthogonality_residual(&f) < 1e-20);
    }

    #[test]
    fn svd_init_rank_one() {
        let u = array![1.0, 2.0, -2.0];
        let v = array![3.0, 0.5, 1.0, 2.0];
        let x = u.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
        let f = init_f_svd(&x, 1).unwrap();
        let unit: Array1<f64> = &u / 3.0;
        let col = f.column(0);
        let err = (&col - &unit).mapv(f64::abs).sum().min((&col + &unit).mapv(f64::abs).sum());
        assert!(err < 1e-12);
    }

    #[test]
    fn kmeans_recovers_repeated_columns() {
        let a = array![1.0, 0.0, 0.0, 2.0];
        let b = array![0.0, 3.0, 1.0, 0.0];
        let c = array![1.0, 1.0, 5.0, 1.0];
        let cols = [&a, &b, &c, &a, &b, &c, &a, &b, &c, &c];
        let mut x = Matrix::zeros((4, cols.len()));
        for (j, col) in cols.iter().enumerate() {
            x.column_mut(j).assign(col);
        }
        let clusters = kmeans_columns(&x, 3, 1).unwrap();
        for target in [&a, &b, &c] {
            let hit = clusters.centroids.columns().into_iter().any(|col| (&col - target).mapv(f64::abs).sum() < 1e-12);
            assert!(hit, "centroid {target} not recovered");
        }
        let f = init_f_kmeans(&x, 3, 1).unwrap();
        assert!(orthogonality_residual(&f) < 1e-20);
        // F spans the distinct columns.
        for target in [&a, &b, &c] {
            let proj = f.dot(&f.t().dot(target));
            assert!((&proj - target).mapv(f64::abs).sum() < 1e-10);
        }
    }

    #[test]
    fn kmeans_init_degenerate_data_errors() {
        // Only one distinct column: every retry yields duplicate centroids.
        let x = Matrix::from_elem((5, 6), 1.0);
        assert!(matches!(init_f_kmeans(&x, 2, 0), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn random_init_is_orthonormal_and_seeded() {
        let x = Matrix::zeros((20, 15));
        let a = init_f(&x, 5, Init::Random, 7).unwrap();
        assert!(orthogonality_residual(&a) < 1e-20);
        assert_eq!(a, init_f(&x, 5, Init::Random, 7).unwrap());
    }
}

//! Seeded k-means, exact silhouette scoring and the restart-averaged
//! silhouette `silh_k` used for model selection.

mod kmeans;
pub mod seed;
mod silhouette;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kmeans::{kmeans, Clustering, KMeansParams};
pub use seed::derive_seed;
pub use silhouette::{
    silhouette, silhouette_sampled, silhouette_samples, silhouette_with_distances, DistanceMatrix,
    SilhouetteMode,
};

/// Restarts per k used when none is configured.
pub const DEFAULT_RESTARTS: usize = 30;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("invalid cluster count k={k} for n={n} points")]
    InvalidK { k: usize, n: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("silhouette needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("silhouette needs at least 2 distinct clusters")]
    SingleCluster,
    #[error("{assignments} assignments for {points} points")]
    LengthMismatch { points: usize, assignments: usize },
    #[error("restart count must be at least 1")]
    NoRuns,
    #[error("silhouette sample size must be at least 1")]
    EmptySample,
    #[error("{0}")]
    Clusterer(String),
}

pub(crate) fn check_finite(points: ArrayView2<f64>) -> Result<(), ClusterError> {
    match points.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((row, col), _)) => Err(ClusterError::NonFinite { row, col }),
        None => Ok(()),
    }
}

/// Anything that partitions points into `k` groups from a seed.
pub trait Clusterer: Sync {
    fn cluster(&self, points: ArrayView2<f64>, k: usize, seed: u64) -> Result<Clustering, ClusterError>;
}

/// Lloyd k-means with k-means++ seeding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub params: KMeansParams,
}

impl Clusterer for KMeans {
    fn cluster(&self, points: ArrayView2<f64>, k: usize, seed: u64) -> Result<Clustering, ClusterError> {
        kmeans(points, k, seed, &self.params)
    }
}

/// Silhouette scores of `N` restarts at one `k`, and their mean `silh_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteSummary {
    pub k: usize,
    pub per_run_scores: Vec<f64>,
    pub mean_score: f64,
    pub seeds: Vec<u64>,
}

impl SilhouetteSummary {
    pub fn from_scores(k: usize, per_run_scores: Vec<f64>, seeds: Vec<u64>) -> Self {
        let mean_score = per_run_scores.iter().sum::<f64>() / per_run_scores.len() as f64;
        SilhouetteSummary {
            k,
            per_run_scores,
            mean_score,
            seeds,
        }
    }

    pub fn n_runs(&self) -> usize {
        self.per_run_scores.len()
    }
}

/// Restart-averaged silhouette over a fixed point set with cached distances.
pub struct RestartScorer<'a, C: Clusterer> {
    points: ArrayView2<'a, f64>,
    distances: DistanceMatrix,
    clusterer: C,
    n_runs: usize,
    mode: SilhouetteMode,
}

impl<'a, C: Clusterer> RestartScorer<'a, C> {
    pub fn new(
        points: ArrayView2<'a, f64>,
        clusterer: C,
        n_runs: usize,
        mode: SilhouetteMode,
    ) -> Result<Self, ClusterError> {
        if n_runs == 0 {
            return Err(ClusterError::NoRuns);
        }
        let distances = DistanceMatrix::new(points)?;
        Ok(RestartScorer {
            points,
            distances,
            clusterer,
            n_runs,
            mode,
        })
    }

    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    /// Runs restart `r` (1-based) with seed `derive_seed(base_seed, r)`.
    pub fn summary(&self, k: usize, base_seed: u64) -> Result<SilhouetteSummary, ClusterError> {
        let n = self.points.nrows();
        if k < 2 || k + 1 > n {
            return Err(ClusterError::InvalidK { k, n });
        }
        let seeds: Vec<u64> = (1..=self.n_runs as u64).map(|r| derive_seed(base_seed, r)).collect();
        let scores = seeds
            .par_iter()
            .map(|&seed| {
                let c = self.clusterer.cluster(self.points, k, seed)?;
                match silhouette::score(&self.distances, &c.assignments, self.mode) {
                    // a run that collapsed onto one label scores as all singletons-or-zero
                    Err(ClusterError::SingleCluster) => Ok(0.0),
                    other => other,
                }
            })
            .collect::<Result<Vec<f64>, ClusterError>>()?;
        Ok(SilhouetteSummary::from_scores(k, scores, seeds))
    }
}

/// `silh_k`: mean silhouette over `n_runs` seeded k-means restarts.
pub fn avg_silhouette(
    points: ArrayView2<f64>,
    k: usize,
    n_runs: usize,
    base_seed: u64,
    params: &KMeansParams,
) -> Result<SilhouetteSummary, ClusterError> {
    let n = points.nrows();
    if k < 2 || k + 1 > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    RestartScorer::new(points, KMeans { params: *params }, n_runs, SilhouetteMode::Exact)?.summary(k, base_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(k: usize, per: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((k * per, 3), |(i, j)| {
            let c = (i / per) as f64;
            let center = if j == 0 { 20.0 * c } else { 0.0 };
            center + rng.random::<f64>()
        })
    }

    #[test]
    fn single_run_mean_is_that_run() {
        let x = blobs(3, 10, 1);
        let s = avg_silhouette(x.view(), 3, 1, 5, &KMeansParams::default()).unwrap();
        assert_eq!(s.n_runs(), 1);
        assert_eq!(s.mean_score, s.per_run_scores[0]);
    }

    #[test]
    fn identical_partitions_give_identical_scores() {
        let x = blobs(2, 15, 2);
        let s = avg_silhouette(x.view(), 2, 30, 9, &KMeansParams::default()).unwrap();
        assert!(s.per_run_scores.iter().all(|&v| v == s.per_run_scores[0]));
        assert!((s.mean_score - s.per_run_scores[0]).abs() < 1e-12);
    }

    #[test]
    fn true_k_beats_neighbours() {
        let x = blobs(3, 20, 3);
        let p = KMeansParams::default();
        let at = |k| avg_silhouette(x.view(), k, 30, 4, &p).unwrap().mean_score;
        let s3 = at(3);
        assert!(s3 > at(2) && s3 > at(5));
    }

    #[test]
    fn rejects_out_of_range_k_and_zero_runs() {
        let x = blobs(2, 5, 4);
        let p = KMeansParams::default();
        assert!(matches!(avg_silhouette(x.view(), 1, 3, 0, &p), Err(ClusterError::InvalidK { .. })));
        assert!(matches!(avg_silhouette(x.view(), 10, 3, 0, &p), Err(ClusterError::InvalidK { .. })));
        assert_eq!(avg_silhouette(x.view(), 2, 0, 0, &p).unwrap_err(), ClusterError::NoRuns);
    }

    #[test]
    fn mean_is_arithmetic_mean() {
        let x = blobs(4, 8, 5);
        let s = avg_silhouette(x.view(), 6, 7, 1, &KMeansParams::default()).unwrap();
        let m = s.per_run_scores.iter().sum::<f64>() / 7.0;
        assert!((s.mean_score - m).abs() < 1e-12);
        assert!(s.per_run_scores.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

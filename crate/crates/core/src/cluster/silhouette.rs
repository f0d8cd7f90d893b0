use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_finite, ClusterError};

/// Dense symmetric matrix of pairwise Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(points: ArrayView2<f64>) -> Result<Self, ClusterError> {
        check_finite(points)?;
        let (n, d) = points.dim();
        let x = points.as_standard_layout();
        let data = x.as_slice().expect("standard layout");
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, out)| {
            let xi = &data[i * d..(i + 1) * d];
            for (j, slot) in out.iter_mut().enumerate() {
                let xj = &data[j * d..(j + 1) * d];
                *slot = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            }
        });
        Ok(DistanceMatrix { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// How the silhouette of one clustering is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SilhouetteMode {
    /// Mean of s(i) over every point.
    #[default]
    Exact,
    /// Mean of s(i) over a seeded uniform subsample of `size` points
    /// (a(i) and b(i) still use all points).
    Sampled { size: usize, seed: u64 },
}

/// Maps arbitrary labels to `0..m` in order of first appearance of each sorted label.
fn dense_labels(assignments: &[usize]) -> (Vec<usize>, usize) {
    let mut uniq: Vec<usize> = assignments.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let dense = assignments
        .iter()
        .map(|a| uniq.binary_search(a).expect("label present"))
        .collect();
    (dense, uniq.len())
}

fn validate(n: usize, assignments: &[usize]) -> Result<(Vec<usize>, usize), ClusterError> {
    if assignments.len() != n {
        return Err(ClusterError::LengthMismatch {
            points: n,
            assignments: assignments.len(),
        });
    }
    if n < 3 {
        return Err(ClusterError::TooFewPoints(n));
    }
    let (labels, m) = dense_labels(assignments);
    if m < 2 {
        return Err(ClusterError::SingleCluster);
    }
    Ok((labels, m))
}

fn point_score(row: &[f64], i: usize, labels: &[usize], sizes: &[usize], sums: &mut [f64]) -> f64 {
    sums.iter_mut().for_each(|s| *s = 0.0);
    for (j, (&dij, &lj)) in row.iter().zip(labels).enumerate() {
        if j != i {
            sums[lj] += dij;
        }
    }
    let own = labels[i];
    if sizes[own] <= 1 {
        return 0.0;
    }
    let a = sums[own] / (sizes[own] - 1) as f64;
    let b = sums
        .iter()
        .zip(sizes)
        .enumerate()
        .filter(|&(c, (_, &size))| c != own && size > 0)
        .map(|(_, (&s, &size))| s / size as f64)
        .fold(f64::INFINITY, f64::min);
    let denom = a.max(b);
    if denom > 0.0 {
        (b - a) / denom
    } else {
        0.0
    }
}

/// Per-point silhouette values s(i). Singletons and a = b = 0 give 0.
pub fn silhouette_samples(distances: &DistanceMatrix, assignments: &[usize]) -> Result<Vec<f64>, ClusterError> {
    let (labels, m) = validate(distances.len(), assignments)?;
    let mut sizes = vec![0usize; m];
    labels.iter().for_each(|&l| sizes[l] += 1);
    Ok((0..distances.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; m],
            |sums, i| point_score(distances.row(i), i, &labels, &sizes, sums),
        )
        .collect())
}

/// Mean silhouette from precomputed distances. The per-point values are summed
/// in index order so the result does not depend on the thread count.
pub fn silhouette_with_distances(distances: &DistanceMatrix, assignments: &[usize]) -> Result<f64, ClusterError> {
    let s = silhouette_samples(distances, assignments)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Mean silhouette over a seeded subsample of points.
pub fn silhouette_sampled(
    distances: &DistanceMatrix,
    assignments: &[usize],
    size: usize,
    seed: u64,
) -> Result<f64, ClusterError> {
    let n = distances.len();
    let (labels, m) = validate(n, assignments)?;
    if size == 0 {
        return Err(ClusterError::EmptySample);
    }
    if size >= n {
        return silhouette_with_distances(distances, assignments);
    }
    let mut sizes = vec![0usize; m];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, size).into_vec();
    picked.sort_unstable();
    let scores: Vec<f64> = picked
        .par_iter()
        .map_init(
            || vec![0.0; m],
            |sums, &i| point_score(distances.row(i), i, &labels, &sizes, sums),
        )
        .collect();
    Ok(scores.iter().sum::<f64>() / size as f64)
}

/// Mean silhouette of a labelled point set (Euclidean metric).
pub fn silhouette(points: ArrayView2<f64>, assignments: &[usize]) -> Result<f64, ClusterError> {
    validate(points.nrows(), assignments)?;
    let distances = DistanceMatrix::new(points)?;
    silhouette_with_distances(&distances, assignments)
}

pub(crate) fn score(distances: &DistanceMatrix, assignments: &[usize], mode: SilhouetteMode) -> Result<f64, ClusterError> {
    match mode {
        SilhouetteMode::Exact => silhouette_with_distances(distances, assignments),
        SilhouetteMode::Sampled { size, seed } => silhouette_sampled(distances, assignments, size, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn coincident_pairs_score_one() {
        let x = array![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        assert_eq!(silhouette(x.view(), &[0, 0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn one_dimensional_hand_example() {
        // hand oracle: every point has a = 0.1 and b = mean distance to the
        // other pair; s = 1 - a / b
        let x = array![[0.0], [0.1], [10.0], [10.1]];
        let s = silhouette(x.view(), &[0, 0, 1, 1]).unwrap();
        let per_point = [
            1.0 - 0.1 / ((10.0 + 10.1) / 2.0),
            1.0 - 0.1 / ((9.9 + 10.0) / 2.0),
            1.0 - 0.1 / ((10.0 + 9.9) / 2.0),
            1.0 - 0.1 / ((10.1 + 10.0) / 2.0),
        ];
        let expected = per_point.iter().sum::<f64>() / 4.0;
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.99).abs() < 1e-6);
    }

    #[test]
    fn identical_points_score_zero() {
        let x = array![[2.0], [2.0], [2.0], [2.0]];
        assert_eq!(silhouette(x.view(), &[0, 1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn singleton_contributes_zero() {
        let x = array![[0.0], [0.0], [5.0]];
        let s = silhouette_samples(&DistanceMatrix::new(x.view()).unwrap(), &[0, 0, 1]).unwrap();
        assert_eq!(s, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn arbitrary_labels_and_relabeling() {
        let x = array![[0.0], [0.4], [3.0], [3.3], [9.0], [9.5]];
        let a = silhouette(x.view(), &[0, 0, 1, 1, 2, 2]).unwrap();
        let b = silhouette(x.view(), &[70, 70, 5, 5, 900, 900]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        let x = array![[0.0], [1.0], [2.0]];
        assert_eq!(silhouette(x.view(), &[0, 0, 0]).unwrap_err(), ClusterError::SingleCluster);
        assert_eq!(silhouette(x.view(), &[0, 1]).unwrap_err(), ClusterError::LengthMismatch { points: 3, assignments: 2 });
        let y = array![[0.0], [1.0]];
        assert_eq!(silhouette(y.view(), &[0, 1]).unwrap_err(), ClusterError::TooFewPoints(2));
    }

    #[test]
    fn sampled_with_full_size_equals_exact() {
        let x = array![[0.0], [0.4], [3.0], [3.3], [9.0], [9.5]];
        let dm = DistanceMatrix::new(x.view()).unwrap();
        let labels = [0, 0, 1, 1, 2, 2];
        let exact = silhouette_with_distances(&dm, &labels).unwrap();
        assert_eq!(silhouette_sampled(&dm, &labels, 6, 1).unwrap(), exact);
        let est = silhouette_sampled(&dm, &labels, 3, 1).unwrap();
        assert!((-1.0..=1.0).contains(&est));
    }
}

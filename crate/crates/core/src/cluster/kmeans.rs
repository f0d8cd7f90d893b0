use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_finite, ClusterError};

/// Lloyd iteration limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub max_iters: usize,
    /// Convergence threshold on total squared centroid movement, relative to
    /// the mean per-feature variance of the data.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

/// Output of one k-means run. Every cluster in `0..k` is non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means: k-means++ start followed by Lloyd iterations.
///
/// The result is a deterministic function of `(points, k, seed, params)`.
pub fn kmeans(
    points: ArrayView2<f64>,
    k: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<Clustering, ClusterError> {
    let (n, d) = points.dim();
    if k == 0 || k > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    check_finite(points)?;
    let x = points.as_standard_layout();
    let data = x.as_slice().expect("standard layout");
    let row = |i: usize| &data[i * d..(i + 1) * d];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(data, n, d, k, &mut rng);
    let threshold = params.tol * mean_feature_variance(data, n, d);

    let mut assignments = vec![0usize; n];
    let mut nearest = vec![0.0f64; n];
    let mut counts = vec![0usize; k];
    let mut next = vec![0.0f64; k * d];
    let mut iterations = 0;
    let mut converged = false;
    let mut inertia = f64::INFINITY;

    loop {
        iterations += 1;

        counts.iter_mut().for_each(|c| *c = 0);
        for i in 0..n {
            let xi = row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dc = sq_dist(xi, &centroids[c * d..(c + 1) * d]);
                if dc < best_d {
                    best_d = dc;
                    best = c;
                }
            }
            assignments[i] = best;
            nearest[i] = best_d;
            counts[best] += 1;
        }

        // empty-cluster repair: take the point farthest from its centroid,
        // among clusters that can spare one
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut donor = None;
            let mut far = -1.0;
            for i in 0..n {
                if counts[assignments[i]] > 1 && nearest[i] > far {
                    far = nearest[i];
                    donor = Some(i);
                }
            }
            let i = donor.expect("k <= n guarantees a cluster with more than one point");
            counts[assignments[i]] -= 1;
            assignments[i] = c;
            counts[c] = 1;
            nearest[i] = 0.0;
            centroids[c * d..(c + 1) * d].copy_from_slice(row(i));
        }

        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let c = assignments[i];
            for (acc, v) in next[c * d..(c + 1) * d].iter_mut().zip(row(i)) {
                *acc += v;
            }
        }
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            next[c * d..(c + 1) * d].iter_mut().for_each(|v| *v *= inv);
        }
        let shift = sq_dist(&next, &centroids);
        std::mem::swap(&mut centroids, &mut next);

        let current: f64 = (0..n)
            .map(|i| sq_dist(row(i), &centroids[assignments[i] * d..(assignments[i] + 1) * d]))
            .sum();
        debug_assert!(
            current <= inertia * (1.0 + 1e-9) + 1e-12,
            "inertia increased: {inertia} -> {current}"
        );
        inertia = current;

        if shift <= threshold {
            converged = true;
            break;
        }
        if iterations >= params.max_iters {
            break;
        }
    }

    Ok(Clustering {
        k,
        assignments,
        centroids: Array2::from_shape_vec((k, d), centroids).expect("k*d centroids"),
        inertia,
        iterations,
        converged,
        seed,
    })
}

fn mean_feature_variance(data: &[f64], n: usize, d: usize) -> f64 {
    if n < 2 || d == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 0..d {
        let mean = (0..n).map(|i| data[i * d + j]).sum::<f64>() / n as f64;
        total += (0..n).map(|i| (data[i * d + j] - mean).powi(2)).sum::<f64>() / n as f64;
    }
    total / d as f64
}

/// D²-weighted seeding. Returns `k * d` centroid coordinates.
fn plus_plus_init(data: &[f64], n: usize, d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let row = |i: usize| &data[i * d..(i + 1) * d];
    let mut centroids = Vec::with_capacity(k * d);
    let mut chosen = vec![false; n];

    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(row(first));
    let mut weight: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();

    for _ in 1..k {
        let total: f64 = weight.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = 0;
            for (i, &w) in weight.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                last_positive = i;
                acc += w;
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or(last_positive)
        } else {
            // remaining points coincide with chosen centers
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let center = row(pick);
        centroids.extend_from_slice(center);
        for (i, w) in weight.iter_mut().enumerate() {
            let dc = sq_dist(row(i), center);
            if dc < *w {
                *w = dc;
            }
        }
        weight[pick] = 0.0;
    }
    centroids
}

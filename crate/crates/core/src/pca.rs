//! Principal component analysis of stacked patch embeddings.
//!
//! Points are centered (not standardized) and decomposed with a thin SVD of the
//! centered matrix. Component `i` is the right singular vector for the `i`-th
//! largest singular value, i.e. an eigenvector of the sample covariance with
//! eigenvalue `s_i^2 / (n - 1)`.

use faer::Mat;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of retained components used by the scoring pipeline.
pub const DEFAULT_COMPONENTS: usize = 100;

/// Total variance at or below this fraction of the squared mean norm counts as
/// zero-variance input.
pub const DEGENERATE_VARIANCE_REL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("need at least 2 rows to fit PCA, got {0}")]
    TooFewRows(usize),
    #[error("requested 0 principal components")]
    NoComponents,
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("input has zero variance (all rows identical); likely an extraction bug upstream")]
    ZeroVariance,
    #[error("singular value decomposition did not converge")]
    NoConvergence,
    #[error("expected {expected} columns, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// A fitted PCA basis. Immutable after [`fit_pca`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    mean: Array1<f64>,
    /// Shape `(L_eff, D)`, orthonormal rows.
    components: Array2<f64>,
    explained_variance: Array1<f64>,
    explained_variance_ratio: Array1<f64>,
    total_variance: f64,
    n_samples: usize,
}

impl PcaModel {
    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn components(&self) -> &Array2<f64> {
        &self.components
    }

    /// Covariance eigenvalues of the retained components.
    pub fn explained_variance(&self) -> &Array1<f64> {
        &self.explained_variance
    }

    pub fn explained_variance_ratio(&self) -> &Array1<f64> {
        &self.explained_variance_ratio
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Projects rows onto the retained components: `components · (x − mean)`.
    pub fn transform(&self, points: ArrayView2<f64>) -> Result<Array2<f64>, PcaError> {
        if points.ncols() != self.dim() {
            return Err(PcaError::DimensionMismatch {
                expected: self.dim(),
                found: points.ncols(),
            });
        }
        let centered = &points - &self.mean.view().insert_axis(Axis(0));
        Ok(centered.dot(&self.components.t()))
    }

    /// Maps projected rows back into the original space.
    pub fn inverse_transform(&self, projected: ArrayView2<f64>) -> Result<Array2<f64>, PcaError> {
        if projected.ncols() != self.n_components() {
            return Err(PcaError::DimensionMismatch {
                expected: self.n_components(),
                found: projected.ncols(),
            });
        }
        Ok(projected.dot(&self.components) + self.mean.view().insert_axis(Axis(0)))
    }

    /// Cumulative explained-variance curve.
    pub fn variance_report(&self) -> Vec<f64> {
        cumulative(self.explained_variance_ratio.as_slice().expect("contiguous"))
    }

    /// Cumulative explained variance of the first `l` components (clamped to `L_eff`).
    /// Clamped to 1 against rounding when all variance is retained.
    pub fn cumulative_variance_at(&self, l: usize) -> f64 {
        self.explained_variance_ratio.iter().take(l).sum::<f64>().min(1.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("PcaModel serializes")
    }
}

pub(crate) fn cumulative(ratios: &[f64]) -> Vec<f64> {
    ratios
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r;
            Some(f64::min(*acc, 1.0))
        })
        .collect()
}

/// Fits PCA keeping `L_eff = min(n_components, n − 1, D)` components.
pub fn fit_pca(points: ArrayView2<f64>, n_components: usize) -> Result<PcaModel, PcaError> {
    let (n, d) = points.dim();
    if n < 2 {
        return Err(PcaError::TooFewRows(n));
    }
    if n_components == 0 {
        return Err(PcaError::NoComponents);
    }
    if let Some(((row, col), _)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(PcaError::NonFinite { row, col });
    }

    let mean = points.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &points - &mean.view().insert_axis(Axis(0));
    let denom = (n - 1) as f64;
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / denom;
    let mean_sq = mean.iter().map(|v| v * v).sum::<f64>();
    if total_variance == 0.0 || total_variance <= DEGENERATE_VARIANCE_REL * mean_sq {
        return Err(PcaError::ZeroVariance);
    }

    let matrix = Mat::<f64>::from_fn(n, d, |i, j| centered[(i, j)]);
    let svd = matrix.thin_svd().map_err(|_| PcaError::NoConvergence)?;
    let singular = svd.S().column_vector();
    let v = svd.V();

    let mut order: Vec<usize> = (0..singular.nrows()).collect();
    order.sort_by(|&a, &b| singular[b].total_cmp(&singular[a]));

    let l_eff = n_components.min(n - 1).min(d);
    let mut components = Array2::<f64>::zeros((l_eff, d));
    let mut explained_variance = Array1::<f64>::zeros(l_eff);
    for (slot, &src) in order.iter().take(l_eff).enumerate() {
        let s = singular[src];
        explained_variance[slot] = s * s / denom;
        let mut row = components.row_mut(slot);
        for j in 0..d {
            row[j] = v[(j, src)];
        }
        // sign convention: largest-magnitude entry positive
        let pivot = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(j, _)| j)
            .unwrap_or(0);
        if row[pivot] < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }
    let explained_variance_ratio = explained_variance.mapv(|v| v / total_variance);

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
        total_variance,
        n_samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn rank_two(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Array2::from_shape_fn((2, d), |_| rng.random::<f64>() - 0.5);
        let offset = Array1::from_shape_fn(d, |_| rng.random::<f64>() * 3.0);
        let coef = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>() * 4.0 - 2.0);
        coef.dot(&u) + &offset.insert_axis(Axis(0))
    }

    #[test]
    fn rank_two_subspace_captures_everything() {
        let x = rank_two(50, 10, 1);
        let model = fit_pca(x.view(), 100).unwrap();
        assert_eq!(model.n_components(), 10);
        let r = model.explained_variance_ratio();
        assert!((r[0] + r[1] - 1.0).abs() < 1e-10);
        let curve = model.variance_report();
        assert!((curve[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn identical_rows_are_an_error() {
        let x = Array2::from_elem((10, 4), 3.25);
        assert_eq!(fit_pca(x.view(), 2).unwrap_err(), PcaError::ZeroVariance);
        let x = Array2::<f64>::zeros((5, 3));
        assert_eq!(fit_pca(x.view(), 2).unwrap_err(), PcaError::ZeroVariance);
    }

    #[test]
    fn input_errors() {
        assert_eq!(fit_pca(array![[1.0, 2.0]].view(), 1).unwrap_err(), PcaError::TooFewRows(1));
        assert_eq!(
            fit_pca(array![[1.0, f64::INFINITY], [0.0, 0.0]].view(), 1).unwrap_err(),
            PcaError::NonFinite { row: 0, col: 1 }
        );
        let model = fit_pca(random(10, 3, 0).view(), 2).unwrap();
        assert!(matches!(
            model.transform(Array2::zeros((2, 4)).view()),
            Err(PcaError::DimensionMismatch { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn l_eff_is_bounded_by_rows_and_dim() {
        assert_eq!(fit_pca(random(5, 20, 2).view(), 100).unwrap().n_components(), 4);
        assert_eq!(fit_pca(random(40, 6, 3).view(), 100).unwrap().n_components(), 6);
        assert_eq!(fit_pca(random(40, 6, 3).view(), 2).unwrap().n_components(), 2);
    }

    #[test]
    fn components_orthonormal_and_ratios_sorted() {
        let model = fit_pca(random(60, 12, 4).view(), 100).unwrap();
        let c = model.components();
        let gram = c.dot(&c.t());
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - target).abs() < 1e-8);
            }
        }
        let r = model.explained_variance_ratio();
        assert!(r.windows(2).into_iter().all(|w| w[0] >= w[1]));
        assert!(r.sum() <= 1.0 + 1e-10);
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let model = fit_pca(random(30, 8, 5).view(), 8).unwrap();
        for row in model.components().rows() {
            let max = row.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(max > 0.0);
        }
    }

    #[test]
    fn transform_of_mean_is_zero_and_empty_input_ok() {
        let x = random(25, 5, 6);
        let model = fit_pca(x.view(), 3).unwrap();
        let m = model.mean().clone().insert_axis(Axis(0));
        let z = model.transform(m.view()).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let empty = model.transform(Array2::<f64>::zeros((0, 5)).view()).unwrap();
        assert_eq!(empty.dim(), (0, 3));
    }

    #[test]
    fn projected_variances_equal_eigenvalues() {
        let x = random(80, 7, 7);
        let model = fit_pca(x.view(), 7).unwrap();
        let z = model.transform(x.view()).unwrap();
        for (j, col) in z.columns().into_iter().enumerate() {
            let var = col.iter().map(|v| v * v).sum::<f64>() / 79.0;
            assert!((var - model.explained_variance()[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn full_rank_reconstruction() {
        let x = random(20, 6, 8);
        let model = fit_pca(x.view(), 100).unwrap();
        let back = model.inverse_transform(model.transform(x.view()).unwrap().view()).unwrap();
        let err = (&back - &x).iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-6);
    }

    #[test]
    fn cumulative_arithmetic() {
        let c = cumulative(&[0.5, 0.3, 0.2]);
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15 && (c[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_dump_roundtrips() {
        let model = fit_pca(random(10, 3, 9).view(), 2).unwrap();
        let back: PcaModel = serde_json::from_str(&model.to_json()).unwrap();
        assert_eq!(back, model);
    }
}

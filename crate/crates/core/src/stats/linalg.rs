use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use ndarray::{Array1, Array2, ArrayView2};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::{ModelKind, StatsError};

/// Squared Cholesky pivot (on the unit-diagonal scaled Gram matrix) below
/// which a column counts as collinear with its predecessors.
pub(crate) const COLLINEAR_PIVOT: f64 = 1e-10;

/// Inverse of a symmetric positive definite Gram matrix.
///
/// The matrix is scaled to unit diagonal before factoring, so the Cholesky
/// pivot of column `j` is `1 − R²` of that column regressed on columns
/// `0..j`; a tiny pivot names the offending column.
pub(crate) fn spd_inverse(gram: &Array2<f64>, names: &[String]) -> Result<Array2<f64>, StatsError> {
    let p = gram.nrows();
    let mut scale = vec![0.0; p];
    for j in 0..p {
        let d = gram[(j, j)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(rank_error(names, j));
        }
        scale[j] = 1.0 / d.sqrt();
    }
    let scaled = Mat::<f64>::from_fn(p, p, |i, j| gram[(i, j)] * scale[i] * scale[j]);
    let llt = scaled.llt(Side::Lower).map_err(|e| match e {
        faer::linalg::solvers::LltError::NonPositivePivot { index } => rank_error(names, index),
    })?;
    let l = llt.L();
    if let Some(j) = (0..p).find(|&j| l[(j, j)] * l[(j, j)] < COLLINEAR_PIVOT) {
        return Err(rank_error(names, j));
    }
    let inv = llt.inverse();
    Ok(Array2::from_shape_fn((p, p), |(i, j)| inv[(i, j)] * scale[i] * scale[j]))
}

fn rank_error(names: &[String], j: usize) -> StatsError {
    StatsError::RankDeficient {
        column: names.get(j).cloned().unwrap_or_else(|| format!("#{j}")),
    }
}

/// `XᵀWX` for per-row weights `w` (all ones when `None`).
pub(crate) fn weighted_gram(x: ArrayView2<f64>, w: Option<&Array1<f64>>) -> Array2<f64> {
    match w {
        None => x.t().dot(&x),
        Some(w) => {
            let wx = &x * &w.view().insert_axis(ndarray::Axis(1));
            x.t().dot(&wx)
        }
    }
}

/// Sandwich "meat" `Σ_g u_g u_gᵀ` where `u_g` sums `x_i · r_i` within group
/// `g`; with `groups == None` every row is its own group.
pub(crate) fn score_outer(x: ArrayView2<f64>, r: &Array1<f64>, groups: Option<&[usize]>) -> Array2<f64> {
    let p = x.ncols();
    let mut meat = Array2::<f64>::zeros((p, p));
    let mut add = |u: &Array1<f64>| {
        for a in 0..p {
            for b in 0..p {
                meat[(a, b)] += u[a] * u[b];
            }
        }
    };
    match groups {
        None => {
            for (row, ri) in x.rows().into_iter().zip(r) {
                add(&(&row * *ri));
            }
        }
        Some(g) => {
            let n_groups = g.iter().max().map_or(0, |m| m + 1);
            let mut sums = Array2::<f64>::zeros((n_groups, p));
            for (i, (row, ri)) in x.rows().into_iter().zip(r).enumerate() {
                sums.row_mut(g[i]).scaled_add(*ri, &row);
            }
            for u in sums.rows() {
                add(&u.to_owned());
            }
        }
    }
    meat
}

/// Dense integer codes for string labels, in first-seen order.
pub(crate) fn encode_groups(labels: &[String]) -> (Vec<usize>, usize) {
    let mut index = std::collections::HashMap::new();
    let codes = labels
        .iter()
        .map(|l| {
            let next = index.len();
            *index.entry(l.as_str()).or_insert(next)
        })
        .collect();
    (codes, index.len())
}

/// Two-sided p-value: normal reference for logit, Student-t otherwise.
pub(crate) fn p_value(kind: ModelKind, df: Option<f64>, statistic: f64) -> f64 {
    if !statistic.is_finite() {
        return f64::NAN;
    }
    let tail = match (kind, df) {
        (ModelKind::Ols, Some(df)) => StudentsT::new(0.0, 1.0, df).expect("positive df").sf(statistic.abs()),
        _ => Normal::standard().sf(statistic.abs()),
    };
    (2.0 * tail).min(1.0)
}

pub(crate) fn critical_value(kind: ModelKind, df: Option<f64>, alpha: f64) -> f64 {
    let q = 1.0 - alpha / 2.0;
    match (kind, df) {
        (ModelKind::Ols, Some(df)) => StudentsT::new(0.0, 1.0, df).expect("positive df").inverse_cdf(q),
        _ => Normal::standard().inverse_cdf(q),
    }
}

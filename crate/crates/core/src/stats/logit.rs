use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::linalg::{encode_groups, p_value, score_outer, spd_inverse, weighted_gram};
use super::{Coefficient, Design, ModelFit, ModelKind, SeKind, StatsError};

/// Fitted probabilities this close to the observed 0/1 outcomes on every row
/// (or a linear predictor this large) mean the likelihood has no maximum.
const SEPARATION_PROB: f64 = 1e-8;
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogitOptions {
    pub max_iters: usize,
    /// Convergence threshold on the max-norm of the score vector.
    pub gradient_tol: f64,
    pub se: SeKind,
}

impl Default for LogitOptions {
    fn default() -> Self {
        LogitOptions {
            max_iters: 100,
            gradient_tol: 1e-10,
            se: SeKind::Classical,
        }
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^η)` without overflow.
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn log_likelihood(eta: &Array1<f64>, y: &Array1<f64>) -> f64 {
    eta.iter().zip(y).map(|(&e, &yi)| yi * e - softplus(e)).sum()
}

fn max_abs(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximum-likelihood logistic regression by Newton–Raphson with step halving.
pub fn fit_logit(design: &Design, options: &LogitOptions) -> Result<ModelFit, StatsError> {
    let (x, y) = (&design.x, &design.y);
    let n = x.nrows();
    let p = x.ncols();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(StatsError::InvalidRow {
            row: i,
            message: format!("outcome must be 0 or 1, got {}", y[i]),
        });
    }
    // surfaces collinearity with a column name before any iteration
    spd_inverse(&weighted_gram(x.view(), None), &design.names)?;
    let n1 = y.sum();
    if n1 == 0.0 || n1 == n as f64 {
        return Err(StatsError::Separation);
    }

    let mut beta = Array1::<f64>::zeros(p);
    let mut eta = x.dot(&beta);
    let mut ll = log_likelihood(&eta, y);
    let mut iterations = 0;
    let mut converged = false;
    let mut gradient;
    loop {
        let prob = eta.mapv(sigmoid);
        gradient = max_abs(&x.t().dot(&(y - &prob)));
        if gradient < options.gradient_tol {
            converged = true;
            break;
        }
        if iterations >= options.max_iters {
            break;
        }
        if perfectly_predicted(&prob, y) {
            return Err(StatsError::Separation);
        }
        let w = prob.mapv(|q| q * (1.0 - q));
        let info = weighted_gram(x.view(), Some(&w));
        let inv = match spd_inverse(&info, &design.names) {
            Ok(inv) => inv,
            // information collapsed although X has full rank: weights vanished
            Err(StatsError::RankDeficient { .. }) => return Err(StatsError::Separation),
            Err(e) => return Err(e),
        };
        let step = inv.dot(&x.t().dot(&(y - &prob)));
        let mut t = 1.0;
        loop {
            let candidate = &beta + &(&step * t);
            let eta_c = x.dot(&candidate);
            let ll_c = log_likelihood(&eta_c, y);
            if ll_c >= ll - 1e-12 * ll.abs() {
                beta = candidate;
                eta = eta_c;
                ll = ll_c;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                break;
            }
        }
        iterations += 1;
    }
    let prob = eta.mapv(sigmoid);
    // a vanishing gradient can also come from coefficients running off to infinity
    if separated(&eta, &prob, y) {
        return Err(StatsError::Separation);
    }
    if !converged {
        return Err(StatsError::NonConvergence { iterations, gradient });
    }
    let w = prob.mapv(|q| q * (1.0 - q));
    let bread = spd_inverse(&weighted_gram(x.view(), Some(&w)), &design.names)?;
    let cov = match options.se {
        SeKind::Classical => bread,
        SeKind::Robust => sandwich(&bread, &score_outer(x.view(), &(y - &prob), None), 1.0),
        SeKind::Clustered => {
            let labels = design.groups.as_ref().ok_or(StatsError::MissingGroups)?;
            let (codes, g) = encode_groups(labels);
            if g < 2 {
                return Err(StatsError::MissingGroups);
            }
            let meat = score_outer(x.view(), &(y - &prob), Some(&codes));
            sandwich(&bread, &meat, g as f64 / (g as f64 - 1.0))
        }
    };

    let ybar = n1 / n as f64;
    let ll0 = n1 * ybar.ln() + (n as f64 - n1) * (1.0 - ybar).ln();
    let pseudo_r2 = if design.is_intercept_only() { 0.0 } else { 1.0 - ll / ll0 };
    let coefficients = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = cov[(j, j)].sqrt();
            let z = beta[j] / se;
            Coefficient {
                name: name.clone(),
                estimate: beta[j],
                std_error: se,
                statistic: z,
                p_value: p_value(ModelKind::Logit, None, z),
            }
        })
        .collect();
    Ok(ModelFit {
        kind: ModelKind::Logit,
        outcome: "y".into(),
        coefficients,
        n_obs: n,
        fit_statistic: pseudo_r2,
        se_kind: options.se,
        log_likelihood: Some(ll),
        null_log_likelihood: Some(ll0),
        iterations,
        converged,
        gradient_max_norm: Some(gradient),
        df_resid: None,
        controls: design.controls,
        brand_fe: false,
        user_fe: false,
        dropped_rows: design.dropped_rows,
    })
}

fn perfectly_predicted(prob: &Array1<f64>, y: &Array1<f64>) -> bool {
    prob.iter().zip(y).all(|(q, yi)| (q - yi).abs() < SEPARATION_PROB)
}

fn separated(eta: &Array1<f64>, prob: &Array1<f64>, y: &Array1<f64>) -> bool {
    perfectly_predicted(prob, y) || max_abs(eta) > SEPARATION_ETA
}

pub(crate) fn sandwich(bread: &Array2<f64>, meat: &Array2<f64>, factor: f64) -> Array2<f64> {
    bread.dot(meat).dot(bread) * factor
}

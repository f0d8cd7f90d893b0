use std::collections::BTreeSet;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::linalg::{encode_groups, p_value, score_outer, spd_inverse, weighted_gram};
use super::logit::sandwich;
use super::{Coefficient, ModelFit, ModelKind, PanelRow, SeKind, StatsError};

/// Divisor applied to `k` before it enters the regression.
pub const K_SCALE: f64 = 1000.0;
/// Divisor applied to price before it enters the regression.
pub const PRICE_SCALE: f64 = 1000.0;

pub const K_COLUMN: &str = "k/1000";
pub const PRICE_COLUMN: &str = "price/1000";
pub const N_IMAGES_COLUMN: &str = "n_images";
pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Purchase,
    DecisionTime,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Purchase => "purchase",
            Outcome::DecisionTime => "decision_time",
        }
    }

    fn value(self, row: &PanelRow) -> f64 {
        match self {
            Outcome::Purchase => f64::from(row.purchase),
            Outcome::DecisionTime => row.decision_time,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeSpec {
    /// Indicator per brand, first brand (sorted) as reference.
    pub brand_fe: bool,
    /// Participant effects absorbed by within-participant demeaning.
    pub user_fe: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OlsOptions {
    pub se: SeKind,
}

/// Column names and the undemeaned design for `rows`.
fn raw_design(rows: &[PanelRow], spec: FeSpec) -> (Vec<String>, Array2<f64>) {
    let mut names = Vec::new();
    if !spec.user_fe {
        names.push(INTERCEPT.to_string());
    }
    names.extend([K_COLUMN, PRICE_COLUMN, N_IMAGES_COLUMN].map(String::from));
    let brands: Vec<&str> = if spec.brand_fe {
        let set: BTreeSet<&str> = rows.iter().map(|r| r.brand_id.as_str()).collect();
        set.into_iter().skip(1).collect()
    } else {
        Vec::new()
    };
    names.extend(brands.iter().map(|b| format!("brand[{b}]")));
    let offset = usize::from(!spec.user_fe);
    let x = Array2::from_shape_fn((rows.len(), names.len()), |(i, j)| {
        let r = &rows[i];
        match j.checked_sub(offset) {
            None => 1.0,
            Some(0) => r.k / K_SCALE,
            Some(1) => r.price / PRICE_SCALE,
            Some(2) => f64::from(r.n_images),
            Some(b) => f64::from(u8::from(r.brand_id == brands[b - 3])),
        }
    });
    (names, x)
}

/// Subtracts group means from every column of `m` in place.
fn demean(m: &mut Array2<f64>, groups: &[usize], n_groups: usize) {
    let mut sums = Array2::<f64>::zeros((n_groups, m.ncols()));
    let mut counts = vec![0.0; n_groups];
    for (row, &g) in m.rows().into_iter().zip(groups) {
        sums.row_mut(g).scaled_add(1.0, &row);
        counts[g] += 1.0;
    }
    for (mut row, &g) in m.rows_mut().into_iter().zip(groups) {
        row.scaled_add(-1.0 / counts[g], &sums.row(g));
    }
}

/// OLS of `outcome` on `k/1000`, `price/1000` and `n_images`, with optional
/// brand indicators and participant fixed effects.
///
/// With participant effects the model has no global intercept and the
/// residual degrees of freedom are `n − p − G` for `G` participants.
pub fn fit_fe_ols(rows: &[PanelRow], outcome: Outcome, spec: FeSpec, options: &OlsOptions) -> Result<ModelFit, StatsError> {
    if rows.is_empty() {
        return Err(StatsError::Empty);
    }
    for (i, r) in rows.iter().enumerate() {
        r.validate().map_err(|message| StatsError::InvalidRow { row: i, message })?;
    }
    let n = rows.len();
    let (names, mut x) = raw_design(rows, spec);
    let y_raw: Array1<f64> = rows.iter().map(|r| outcome.value(r)).collect();
    let mut y = y_raw.clone().insert_axis(Axis(1));
    let participants: Vec<String> = rows.iter().map(|r| r.participant_id.clone()).collect();
    let (codes, n_groups) = encode_groups(&participants);
    if spec.user_fe {
        demean(&mut x, &codes, n_groups);
        demean(&mut y, &codes, n_groups);
    }
    let y = y.remove_axis(Axis(1));
    let p = x.ncols();
    let absorbed = if spec.user_fe { n_groups } else { 0 };
    if n <= p + absorbed {
        return Err(StatsError::NoDegreesOfFreedom {
            n_obs: n,
            params: p + absorbed,
        });
    }
    let df = (n - p - absorbed) as f64;

    let xtx_inv = spd_inverse(&weighted_gram(x.view(), None), &names)?;
    let beta = xtx_inv.dot(&x.t().dot(&y));
    let resid = &y - &x.dot(&beta);
    let ssr = resid.dot(&resid);
    let cov = match options.se {
        SeKind::Classical => &xtx_inv * (ssr / df),
        SeKind::Robust => sandwich(&xtx_inv, &score_outer(x.view(), &resid, None), n as f64 / df),
        SeKind::Clustered => {
            if n_groups < 2 {
                return Err(StatsError::MissingGroups);
            }
            let g = n_groups as f64;
            let factor = g / (g - 1.0) * (n as f64 - 1.0) / (n - p) as f64;
            sandwich(&xtx_inv, &score_outer(x.view(), &resid, Some(&codes)), factor)
        }
    };
    let mean = y_raw.mean().unwrap_or(0.0);
    let sst = y_raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN };

    let coefficients = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = cov[(j, j)].sqrt();
            let t = beta[j] / se;
            Coefficient {
                name: name.clone(),
                estimate: beta[j],
                std_error: se,
                statistic: t,
                p_value: p_value(ModelKind::Ols, Some(df), t),
            }
        })
        .collect();
    Ok(ModelFit {
        kind: ModelKind::Ols,
        outcome: outcome.name().into(),
        coefficients,
        n_obs: n,
        fit_statistic: r2,
        se_kind: options.se,
        log_likelihood: None,
        null_log_likelihood: None,
        iterations: 0,
        converged: true,
        gradient_max_norm: None,
        df_resid: Some(df),
        controls: false,
        brand_fe: spec.brand_fe,
        user_fe: spec.user_fe,
        dropped_rows: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(user: &str, brand: &str, k: f64, price: f64, n_images: u32, t: f64) -> PanelRow {
        PanelRow {
            participant_id: user.into(),
            product_id: "p".into(),
            brand_id: brand.into(),
            set_id: "s".into(),
            purchase: 0,
            decision_time: t,
            k,
            price,
            n_images,
        }
    }

    fn panel() -> Vec<PanelRow> {
        let mut rows = Vec::new();
        for u in 0..6 {
            for j in 0..4 {
                let k = 50.0 + 37.0 * ((u * 4 + j) % 7) as f64;
                let price = 100.0 + 91.0 * ((u * 3 + j * 5) % 11) as f64;
                let n = 1 + ((u + 2 * j) % 5) as u32;
                let brand = ["a", "b", "c"][(u + j) % 3];
                let t = 20.0 + 3.0 * k / 1000.0 - 2.0 * price / 1000.0 + 0.5 * n as f64 + u as f64 + ((u * j) % 3) as f64 * 0.1;
                rows.push(row(&format!("u{u}"), brand, k, price, n, t));
            }
        }
        rows
    }

    #[test]
    fn coefficient_names_and_df() {
        let rows = panel();
        let opts = OlsOptions::default();
        let pooled = fit_fe_ols(&rows, Outcome::DecisionTime, FeSpec::default(), &opts).unwrap();
        let names: Vec<_> = pooled.coefficients.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["(Intercept)", "k/1000", "price/1000", "n_images"]);
        let fe = fit_fe_ols(&rows, Outcome::DecisionTime, FeSpec { brand_fe: true, user_fe: true }, &opts).unwrap();
        let names: Vec<_> = fe.coefficients.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["k/1000", "price/1000", "n_images", "brand[b]", "brand[c]"]);
        assert_eq!(fe.df_resid, Some((24 - 5 - 6) as f64));
    }

    #[test]
    fn noiseless_panel_is_recovered() {
        let mut rows = panel();
        for r in &mut rows {
            r.decision_time = 10.0 + 2.0 * r.k / 1000.0 - 1.0 * r.price / 1000.0 + 0.25 * f64::from(r.n_images);
        }
        let fit = fit_fe_ols(&rows, Outcome::DecisionTime, FeSpec::default(), &OlsOptions::default()).unwrap();
        for (name, v) in [("(Intercept)", 10.0), ("k/1000", 2.0), ("price/1000", -1.0), ("n_images", 0.25)] {
            assert!((fit.coefficient(name).unwrap().estimate - v).abs() < 1e-8, "{name}");
        }
        assert!((fit.fit_statistic - 1.0).abs() < 1e-12);
    }

    #[test]
    fn participant_shift_is_absorbed() {
        let rows = panel();
        let spec = FeSpec { brand_fe: true, user_fe: true };
        let opts = OlsOptions::default();
        let base = fit_fe_ols(&rows, Outcome::DecisionTime, spec, &opts).unwrap();
        let mut shifted = rows.clone();
        for r in shifted.iter_mut().filter(|r| r.participant_id == "u2") {
            r.decision_time += 5.0;
        }
        let moved = fit_fe_ols(&shifted, Outcome::DecisionTime, spec, &opts).unwrap();
        for (a, b) in base.coefficients.iter().zip(&moved.coefficients) {
            assert!((a.estimate - b.estimate).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_within_participant_is_rank_deficient() {
        let mut rows = panel();
        for r in &mut rows {
            let u: u32 = r.participant_id[1..].parse().unwrap();
            r.n_images = 1 + u % 5;
        }
        let err = fit_fe_ols(
            &rows,
            Outcome::DecisionTime,
            FeSpec { brand_fe: false, user_fe: true },
            &OlsOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, StatsError::RankDeficient { column: "n_images".into() });
    }

    #[test]
    fn too_few_rows_has_no_degrees_of_freedom() {
        let rows = &panel()[..4];
        assert!(matches!(
            fit_fe_ols(rows, Outcome::DecisionTime, FeSpec::default(), &OlsOptions::default()),
            Err(StatsError::NoDegreesOfFreedom { .. })
        ));
    }
}

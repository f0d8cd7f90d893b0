//! Regression analyses linking k-values to consumer responses.
//!
//! * Pairwise choice data (one row per participant × comparison) is fit with a
//!   logistic regression of "set 1 judged more informative" on either the
//!   k-value difference `k1 − k2` or the share `k1 / (k1 + k2)`, optionally
//!   controlling for differences in image-quality covariates.
//! * Purchase panels (one row per participant × product) are fit by OLS with
//!   optional brand indicators and participant fixed effects, the latter
//!   absorbed by the within transformation. `k` and price enter divided by
//!   1000.

mod design;
pub mod io;
mod linalg;
mod logit;
mod ols;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use design::{build_exp1_design, Design, KTerm};
pub use logit::{fit_logit, LogitOptions};
pub use ols::{fit_fe_ols, FeSpec, OlsOptions, Outcome, K_SCALE, PRICE_SCALE};
pub use report::{render_csv, render_text, report_table, Report, ReportStyle};

/// Image-quality covariates, in column order, each averaged over a set's images.
pub const COVARIATES: [&str; 9] = [
    "brightness",
    "contrast",
    "blur",
    "saturation",
    "colorfulness",
    "clarity",
    "aesthetic",
    "black_white",
    "purity",
];

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no usable rows")]
    Empty,
    #[error("invalid row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("design is rank deficient: column {column:?} is collinear with earlier columns")]
    RankDeficient { column: String },
    #[error("complete or quasi-complete separation detected; maximum-likelihood estimates diverge")]
    Separation,
    #[error("logit did not converge in {iterations} iterations (gradient max-norm {gradient:e})")]
    NonConvergence { iterations: usize, gradient: f64 },
    #[error("no residual degrees of freedom ({n_obs} rows, {params} parameters)")]
    NoDegreesOfFreedom { n_obs: usize, params: usize },
    #[error("clustered standard errors need group labels and at least 2 groups")]
    MissingGroups,
    #[error("cannot mix report styles: {0}")]
    MixedStyles(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// One pairwise comparison judged by one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRow {
    pub participant_id: String,
    pub product_id: String,
    /// 1 when set 1 was judged more informative.
    pub y: u8,
    pub k1: f64,
    pub k2: f64,
    /// Set-averaged covariates of set 1, ordered as [`COVARIATES`].
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

impl ChoiceRow {
    pub fn validate(&self) -> Result<(), String> {
        if self.y > 1 {
            return Err(format!("y must be 0 or 1, got {}", self.y));
        }
        if !(self.k1 >= 2.0 && self.k2 >= 2.0) {
            return Err(format!("k-values must be >= 2, got ({}, {})", self.k1, self.k2));
        }
        if self.x1.len() != self.x2.len() {
            return Err("covariate vectors differ in length".into());
        }
        if self.x1.iter().chain(&self.x2).any(|v| !v.is_finite()) {
            return Err("non-finite covariate".into());
        }
        Ok(())
    }
}

/// One participant × product observation of the purchase experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub participant_id: String,
    pub product_id: String,
    pub brand_id: String,
    pub set_id: String,
    pub purchase: u8,
    pub decision_time: f64,
    /// k-value of the displayed image set.
    pub k: f64,
    /// Price in yuan.
    pub price: f64,
    pub n_images: u32,
}

impl PanelRow {
    pub fn validate(&self) -> Result<(), String> {
        if self.purchase > 1 {
            return Err(format!("purchase must be 0 or 1, got {}", self.purchase));
        }
        if !(self.decision_time > 0.0 && self.decision_time.is_finite()) {
            return Err(format!("decision_time must be positive, got {}", self.decision_time));
        }
        if self.n_images < 1 {
            return Err("n_images must be >= 1".into());
        }
        if !self.k.is_finite() || !self.price.is_finite() {
            return Err("non-finite k or price".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logit,
    Ols,
}

/// Variance estimator behind the reported standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SeKind {
    /// Inverse information (logit) or σ²(X'X)⁻¹ (OLS).
    #[default]
    Classical,
    /// Heteroskedasticity-robust sandwich (HC1 scaling for OLS).
    Robust,
    /// Clustered by participant.
    Clustered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// z for logit, t for OLS.
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub kind: ModelKind,
    pub outcome: String,
    pub coefficients: Vec<Coefficient>,
    pub n_obs: usize,
    /// McFadden pseudo-R² for logit, R² on the untransformed outcome for OLS.
    pub fit_statistic: f64,
    pub se_kind: SeKind,
    pub log_likelihood: Option<f64>,
    pub null_log_likelihood: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_max_norm: Option<f64>,
    pub df_resid: Option<f64>,
    /// Covariate-difference controls included (choice model).
    pub controls: bool,
    pub brand_fe: bool,
    pub user_fe: bool,
    /// Rows dropped for missing values before fitting.
    pub dropped_rows: usize,
}

impl ModelFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Two-sided confidence interval at level `1 − alpha`.
    pub fn confidence_interval(&self, name: &str, alpha: f64) -> Option<(f64, f64)> {
        let c = self.coefficient(name)?;
        let q = linalg::critical_value(self.kind, self.df_resid, alpha);
        Some((c.estimate - q * c.std_error, c.estimate + q * c.std_error))
    }
}

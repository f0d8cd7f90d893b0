use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{ChoiceRow, StatsError, COVARIATES};

/// How the two k-values of a comparison enter the choice model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KTerm {
    /// `k1 − k2`.
    #[default]
    Diff,
    /// `k1 / (k1 + k2)`.
    Ratio,
}

impl KTerm {
    pub fn column_name(self) -> &'static str {
        match self {
            KTerm::Diff => "k1-k2",
            KTerm::Ratio => "k1/(k1+k2)",
        }
    }

    pub fn value(self, k1: f64, k2: f64) -> f64 {
        match self {
            KTerm::Diff => k1 - k2,
            KTerm::Ratio => k1 / (k1 + k2),
        }
    }
}

/// Dense regression design with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    /// Cluster labels (participant ids), one per row.
    pub groups: Option<Vec<String>>,
    pub controls: bool,
    pub dropped_rows: usize,
}

impl Design {
    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    /// True when the only column is a constant.
    pub fn is_intercept_only(&self) -> bool {
        self.x.ncols() == 1 && self.x.column(0).iter().all(|&v| v == self.x[(0, 0)])
    }
}

/// Intercept, the k-term and, with `controls`, the nine covariate
/// differences `x1_j − x2_j` named `<covariate>_diff`.
pub fn build_exp1_design(rows: &[ChoiceRow], term: KTerm, controls: bool) -> Result<Design, StatsError> {
    if rows.is_empty() {
        return Err(StatsError::Empty);
    }
    let n_cov = if controls { COVARIATES.len() } else { 0 };
    for (i, r) in rows.iter().enumerate() {
        r.validate().map_err(|message| StatsError::InvalidRow { row: i, message })?;
        if controls && r.x1.len() != COVARIATES.len() {
            return Err(StatsError::InvalidRow {
                row: i,
                message: format!("expected {} covariates, got {}", COVARIATES.len(), r.x1.len()),
            });
        }
    }
    let mut names = vec!["(Intercept)".to_string(), term.column_name().to_string()];
    names.extend(COVARIATES.iter().take(n_cov).map(|c| format!("{c}_diff")));
    let x = Array2::from_shape_fn((rows.len(), 2 + n_cov), |(i, j)| {
        let r = &rows[i];
        match j {
            0 => 1.0,
            1 => term.value(r.k1, r.k2),
            _ => r.x1[j - 2] - r.x2[j - 2],
        }
    });
    Ok(Design {
        names,
        x,
        y: rows.iter().map(|r| f64::from(r.y)).collect(),
        groups: Some(rows.iter().map(|r| r.participant_id.clone()).collect()),
        controls,
        dropped_rows: 0,
    })
}

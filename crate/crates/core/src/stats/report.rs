use serde::{Deserialize, Serialize};

use super::ols::{INTERCEPT, K_COLUMN, N_IMAGES_COLUMN, PRICE_COLUMN};
use super::{ModelFit, ModelKind, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportStyle {
    /// Choice logits: k-term rows, a controls row, observations, pseudo-R².
    Exp1,
    /// Fixed-effects OLS: one panel per outcome, FE rows, observations, R².
    Exp2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub csv: String,
}

/// `***`, `**` or `*` for p below 0.01, 0.05 or 0.1.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn check_style(fits: &[ModelFit], style: ReportStyle) -> Result<(), StatsError> {
    let want = match style {
        ReportStyle::Exp1 => ModelKind::Logit,
        ReportStyle::Exp2 => ModelKind::Ols,
    };
    match fits.iter().find(|f| f.kind != want) {
        Some(f) => Err(StatsError::MixedStyles(format!(
            "{:?} report given a {:?} fit of {:?}",
            style, f.kind, f.outcome
        ))),
        None if fits.is_empty() => Err(StatsError::Empty),
        None => Ok(()),
    }
}

fn shown_terms(fits: &[&ModelFit], style: ReportStyle) -> Vec<String> {
    let mut terms: Vec<String> = Vec::new();
    for f in fits {
        for c in &f.coefficients {
            let keep = match style {
                ReportStyle::Exp1 => c.name != INTERCEPT && !c.name.ends_with("_diff"),
                ReportStyle::Exp2 => [K_COLUMN, PRICE_COLUMN, N_IMAGES_COLUMN].contains(&c.name.as_str()),
            };
            if keep && !terms.contains(&c.name) {
                terms.push(c.name.clone());
            }
        }
    }
    terms
}

/// Groups fits into panels by outcome, preserving first-seen order.
fn panels(fits: &[ModelFit]) -> Vec<(String, Vec<&ModelFit>)> {
    let mut out: Vec<(String, Vec<&ModelFit>)> = Vec::new();
    for f in fits {
        match out.iter_mut().find(|(o, _)| *o == f.outcome) {
            Some((_, v)) => v.push(f),
            None => out.push((f.outcome.clone(), vec![f])),
        }
    }
    out
}

fn block(title: Option<String>, fits: &[&ModelFit], style: ReportStyle) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let blank = || vec![String::new(); fits.len() + 1];
    if let Some(t) = title {
        let mut r = blank();
        r[0] = t;
        rows.push(r);
    }
    let mut header = blank();
    for (j, cell) in header.iter_mut().skip(1).enumerate() {
        *cell = format!("({})", j + 1);
    }
    rows.push(header);
    for term in shown_terms(fits, style) {
        let mut est = blank();
        let mut se = blank();
        est[0] = term.clone();
        for (j, f) in fits.iter().enumerate() {
            if let Some(c) = f.coefficient(&term) {
                est[j + 1] = format!("{:.4}{}", c.estimate, stars(c.p_value));
                se[j + 1] = format!("({:.4})", c.std_error);
            }
        }
        rows.push(est);
        rows.push(se);
    }
    let yes = |b: bool| if b { "Yes".to_string() } else { String::new() };
    let mut flag_row = |label: &str, get: &dyn Fn(&ModelFit) -> bool| {
        let mut r = blank();
        r[0] = label.into();
        for (j, f) in fits.iter().enumerate() {
            r[j + 1] = yes(get(f));
        }
        rows.push(r);
    };
    match style {
        ReportStyle::Exp1 => flag_row("X1-X2 controls", &|f| f.controls),
        ReportStyle::Exp2 => {
            flag_row("Brand FE", &|f| f.brand_fe);
            flag_row("User FE", &|f| f.user_fe);
        }
    }
    let mut obs = blank();
    let mut fit_row = blank();
    obs[0] = "Num. Obs.".into();
    fit_row[0] = match style {
        ReportStyle::Exp1 => "pseudo-R2".into(),
        ReportStyle::Exp2 => "R2".into(),
    };
    for (j, f) in fits.iter().enumerate() {
        obs[j + 1] = f.n_obs.to_string();
        fit_row[j + 1] = format!("{:.3}", f.fit_statistic);
    }
    rows.push(obs);
    rows.push(fit_row);
    rows
}

/// Plain-text table with standard errors in parentheses under each estimate.
pub fn render_text(fits: &[ModelFit], style: ReportStyle) -> Result<String, StatsError> {
    check_style(fits, style)?;
    let mut blocks = Vec::new();
    match style {
        ReportStyle::Exp1 => blocks.push(block(None, &fits.iter().collect::<Vec<_>>(), style)),
        ReportStyle::Exp2 => {
            for (i, (outcome, group)) in panels(fits).into_iter().enumerate() {
                let letter = (b'A' + i as u8) as char;
                blocks.push(block(Some(format!("Panel {letter}: {outcome}")), &group, style));
            }
        }
    }
    let label_w = blocks.iter().flatten().map(|r| r[0].len()).max().unwrap_or(0);
    let cell_w = blocks
        .iter()
        .flatten()
        .flat_map(|r| r[1..].iter().map(String::len))
        .max()
        .unwrap_or(0)
        .max(8);
    let mut out = String::new();
    for (b, rows) in blocks.iter().enumerate() {
        if b > 0 {
            out.push('\n');
        }
        for r in rows {
            let mut line = format!("{:<label_w$}", r[0]);
            for cell in &r[1..] {
                line.push_str(&format!("  {cell:>cell_w$}"));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
    }
    out.push('\n');
    if style == ReportStyle::Exp1 {
        out.push_str("Intercept and control coefficients omitted.\n");
    }
    out.push_str("Standard errors in parentheses. * p<0.1, ** p<0.05, *** p<0.01.\n");
    if style == ReportStyle::Exp2 {
        out.push_str("k and price divided by 1000.\n");
    }
    let dropped: usize = fits.iter().map(|f| f.dropped_rows).max().unwrap_or(0);
    if dropped > 0 {
        out.push_str(&format!("{dropped} rows dropped for missing values.\n"));
    }
    Ok(out)
}

/// One CSV row per coefficient (including intercepts and controls).
pub fn render_csv(fits: &[ModelFit], style: ReportStyle) -> Result<String, StatsError> {
    check_style(fits, style)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| StatsError::Io {
        path: "<report>".into(),
        message: e.to_string(),
    };
    w.write_record([
        "outcome", "column", "term", "estimate", "std_error", "statistic", "p_value", "n_obs", "fit_statistic",
        "controls", "brand_fe", "user_fe",
    ])
    .map_err(io)?;
    for (outcome, group) in panels(fits) {
        for (j, f) in group.iter().enumerate() {
            for c in &f.coefficients {
                w.write_record([
                    outcome.clone(),
                    (j + 1).to_string(),
                    c.name.clone(),
                    format!("{:?}", c.estimate),
                    format!("{:?}", c.std_error),
                    format!("{:?}", c.statistic),
                    format!("{:?}", c.p_value),
                    f.n_obs.to_string(),
                    format!("{:?}", f.fit_statistic),
                    f.controls.to_string(),
                    f.brand_fe.to_string(),
                    f.user_fe.to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| StatsError::Io {
        path: "<report>".into(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn report_table(fits: &[ModelFit], style: ReportStyle) -> Result<Report, StatsError> {
    Ok(Report {
        text: render_text(fits, style)?,
        csv: render_csv(fits, style)?,
    })
}

//! Purchase and decision-time panels with brand and participant fixed
//! effects, in the three-column layout.
//!
//! ```bash
//! cargo run --example fixed_effects_exp2
//! ```

use imgk::stats::{fit_fe_ols, report_table, FeSpec, OlsOptions, Outcome, ReportStyle};
use imgk::synth::{gen_panel, PanelSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 996 participants x 10 products
    let panel = gen_panel(&PanelSpec { seed: 12, ..Default::default() })?;
    println!("{} rows, true slopes {:?}\n", panel.rows.len(), PanelSpec::default().beta);

    let specs = [
        FeSpec::default(),
        FeSpec { brand_fe: true, user_fe: false },
        FeSpec { brand_fe: true, user_fe: true },
    ];
    let mut fits = Vec::new();
    for outcome in [Outcome::Purchase, Outcome::DecisionTime] {
        for spec in specs {
            fits.push(fit_fe_ols(&panel.rows, outcome, spec, &OlsOptions::default())?);
        }
    }
    print!("{}", report_table(&fits, ReportStyle::Exp2)?.text);

    let full = &fits[2];
    println!("\ncolumn (3) purchase: df={:?}, coefficients {:?}", full.df_resid, full.coefficients.iter().map(|c| &c.name).collect::<Vec<_>>());
    Ok(())
}

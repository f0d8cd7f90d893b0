//! Self-contained acceptance checks: each regenerates its synthetic inputs
//! from seeds, compares against an oracle or known truth, and reports
//! pass/fail with a one-line detail.

pub mod oracle;

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{avg_silhouette, derive_seed, silhouette, ClusterError, KMeansParams, SilhouetteSummary};
use crate::embedding::PatchEmbeddings;
use crate::ksearch::{find_k_star, search_with, SearchConfig};
use crate::pca::fit_pca;
use crate::pipeline::{score_set, PipelineConfig};
use crate::stats::{build_exp1_design, fit_fe_ols, fit_logit, FeSpec, KTerm, LogitOptions, OlsOptions, Outcome, PanelRow};
use crate::synth::{gen_choice_data, gen_image_set, gen_mixture, gen_panel, ChoiceSpec, MixtureSpec, PanelSpec, SyntheticSet};

/// Silhouette implementation under test: points and labels to the mean score.
pub type SilhouetteFn = dyn Fn(ArrayView2<f64>, &[usize]) -> Result<f64, ClusterError> + Sync;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:<24} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(name: &str, f: impl FnOnce() -> (bool, String)) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f();
    CheckResult {
        name: name.into(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Replication counts for the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub k_recovery_trials: usize,
    pub silhouette_instances: usize,
    pub pca_instances: usize,
    pub logit_replications: usize,
    pub lsdv_panels: usize,
    pub panel_replications: usize,
}

impl Scale {
    pub fn full() -> Self {
        Scale {
            k_recovery_trials: 20,
            silhouette_instances: 200,
            pca_instances: 20,
            logit_replications: 50,
            lsdv_panels: 100,
            panel_replications: 50,
        }
    }

    pub fn quick() -> Self {
        Scale {
            k_recovery_trials: 5,
            silhouette_instances: 50,
            pca_instances: 5,
            logit_replications: 10,
            lsdv_panels: 25,
            panel_replications: 10,
        }
    }
}

/// Successes needed out of `n` for a required rate such as 19/20.
fn needed(n: usize, num: usize, den: usize) -> usize {
    (n * num).div_ceil(den)
}

pub const K_RECOVERY_TRUE_KS: [usize; 4] = [2, 5, 8, 11];
pub const K_RECOVERY_DIM: usize = 100;
pub const K_RECOVERY_POINTS: usize = 30;
/// `center_scale / within_std` of the k-recovery mixtures.
pub const K_RECOVERY_SEPARATION: f64 = 8.0;
/// Patience used by the k-recovery searches; the peak sits at most a few grid
/// points in, so a short patience keeps the check fast without changing k*.
pub const K_RECOVERY_PATIENCE: usize = 10;

pub fn k_recovery_config(seed: u64) -> SearchConfig {
    SearchConfig {
        patience: K_RECOVERY_PATIENCE,
        base_seed: seed,
        ..Default::default()
    }
}

/// find_k_star returns `k_true` in at least 19 of 20 trials for each k_true.
pub fn check_k_recovery(trials: usize, base_seed: u64) -> CheckResult {
    timed("k-recovery", || {
        let mut hits = Vec::new();
        for &k in &K_RECOVERY_TRUE_KS {
            let found: Vec<usize> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(base_seed, (k * 1000 + t) as u64);
                    let spec = MixtureSpec {
                        k_true: k,
                        points_per_component: K_RECOVERY_POINTS,
                        dim: K_RECOVERY_DIM,
                        center_scale: K_RECOVERY_SEPARATION,
                        within_std: 1.0,
                        seed,
                    };
                    let mix = gen_mixture(&spec).expect("feasible mixture");
                    find_k_star(mix.points.view(), &k_recovery_config(seed)).map_or(0, |r| r.k_star)
                })
                .collect();
            hits.push((k, found.iter().filter(|&&f| f == k).count()));
        }
        let need = needed(trials, 19, 20);
        let passed = hits.iter().all(|&(_, h)| h >= need);
        let detail = hits
            .iter()
            .map(|(k, h)| format!("k={k}: {h}/{trials}"))
            .collect::<Vec<_>>()
            .join(", ");
        (passed, format!("{detail} (need {need})"))
    })
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    loop {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        if labels.iter().collect::<BTreeSet<_>>().len() >= 2 {
            return labels;
        }
    }
}

/// Fast silhouette equals the naive all-pairs oracle to 1e-10.
pub fn check_silhouette_oracle(instances: usize, base_seed: u64, fast: &SilhouetteFn) -> CheckResult {
    timed("silhouette-oracle", || {
        let mut worst = 0.0f64;
        let mut failures = 0;
        for i in 0..instances {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, i as u64));
            let n = rng.random_range(3..=50);
            let k = rng.random_range(2..=5usize);
            let dim = rng.random_range(1..=6);
            let points = Array2::from_shape_fn((n, dim), |_| rng.random_range(-5.0..5.0));
            let labels = random_labels(&mut rng, n, k);
            let want = oracle::naive_silhouette(points.view(), &labels);
            match fast(points.view(), &labels) {
                Ok(got) => {
                    let err = (got - want).abs();
                    worst = worst.max(err);
                    if !(err <= 1e-10) {
                        failures += 1;
                    }
                }
                Err(_) => failures += 1,
            }
        }
        (
            failures == 0,
            format!("{} of {instances} instances agree, max abs diff {worst:.1e}", instances - failures),
        )
    })
}

/// Explained-variance ratios and projectors match a covariance eigensolve to 1e-8.
pub fn check_pca_oracle(instances: usize, base_seed: u64) -> CheckResult {
    timed("pca-oracle", || {
        let (n, d, l) = (200, 50, 10);
        let mut worst_ratio = 0.0f64;
        let mut worst_proj = 0.0f64;
        for i in 0..instances {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, i as u64));
            // column scales spread the spectrum so the top-l subspace is well defined
            let scales: Vec<f64> = (0..d).map(|j| 1.0 + 0.2 * j as f64).collect();
            let x = Array2::from_shape_fn((n, d), |(_, j)| scales[j] * rng.random_range(-1.0..1.0) + 3.0);
            let model = match fit_pca(x.view(), l) {
                Ok(m) => m,
                Err(e) => return (false, format!("instance {i}: {e}")),
            };
            let (values, vectors) = oracle::symmetric_eigen(oracle::naive_covariance(x.view()).view());
            let total: f64 = values.sum();
            for j in 0..l {
                worst_ratio = worst_ratio.max((model.explained_variance_ratio()[j] - values[j] / total).abs());
            }
            let v_fast = model.components();
            let p_fast = v_fast.t().dot(v_fast);
            let v_oracle = vectors.slice(ndarray::s![.., ..l]).to_owned();
            let p_oracle = v_oracle.dot(&v_oracle.t());
            let frob = (&p_fast - &p_oracle).mapv(|v| v * v).sum().sqrt();
            worst_proj = worst_proj.max(frob);
        }
        (
            worst_ratio <= 1e-8 && worst_proj <= 1e-8,
            format!("{instances} instances, max ratio diff {worst_ratio:.1e}, max projector distance {worst_proj:.1e}"),
        )
    })
}

fn bits(s: &SilhouetteSummary) -> (usize, Vec<u64>, u64, Vec<u64>) {
    (
        s.k,
        s.per_run_scores.iter().map(|v| v.to_bits()).collect(),
        s.mean_score.to_bits(),
        s.seeds.clone(),
    )
}

/// `avg_silhouette` with 30 restarts is bitwise identical on 1, 4 and 8 threads.
pub fn check_determinism(base_seed: u64) -> CheckResult {
    timed("determinism", || {
        let spec = MixtureSpec {
            k_true: 4,
            points_per_component: 40,
            dim: 8,
            center_scale: 6.0,
            within_std: 1.0,
            seed: base_seed,
        };
        let mix = gen_mixture(&spec).expect("feasible mixture");
        let runs: Vec<_> = [1, 4, 8]
            .iter()
            .map(|&t| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().expect("thread pool");
                pool.install(|| avg_silhouette(mix.points.view(), 5, 30, base_seed, &KMeansParams::default()))
                    .map(|s| bits(&s))
            })
            .collect();
        let ok = runs.iter().all(|r| r.is_ok()) && runs.windows(2).all(|w| w[0] == w[1]);
        let detail = match &runs[0] {
            Ok(r) => format!("threads 1/4/8, 30 restarts, silh bits {:#018x}", r.2),
            Err(e) => e.to_string(),
        };
        (ok, detail)
    })
}

/// Injected curve peaking at the 3rd grid point: exactly 3 + patience evaluations.
pub fn check_stopping_rule() -> CheckResult {
    timed("stopping-rule", || {
        let config = SearchConfig::default();
        let grid: Vec<usize> = (0..).map(|i| config.k_min + i * config.step).take(3).collect();
        let peak = grid[2];
        let curve = |k: usize| {
            let s = 1.0 - (k as f64 - peak as f64).abs() / 1000.0;
            Ok(SilhouetteSummary::from_scores(k, vec![s], vec![0]))
        };
        match search_with(curve, 10_000, &config) {
            Ok(r) => {
                let ok = r.trace.len() == 3 + config.patience && r.k_star == peak;
                (
                    ok,
                    format!(
                        "{} evaluations (want {}), k*={} (want {peak})",
                        r.trace.len(),
                        3 + config.patience,
                        r.k_star
                    ),
                )
            }
            Err(e) => (false, e.to_string()),
        }
    })
}

pub const LOGIT_N: usize = 5000;
pub const LOGIT_BETA: [f64; 2] = [0.0, 1.0];

/// Ratio-spec slope covered by its 95% CI in at least 90% of replications,
/// gradient below 1e-10 at every solution.
pub fn check_logit_recovery(reps: usize, base_seed: u64) -> CheckResult {
    timed("logit-recovery", || {
        let outcomes: Vec<Result<(bool, f64), String>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let rows = gen_choice_data(&ChoiceSpec {
                    beta: LOGIT_BETA.to_vec(),
                    n: LOGIT_N,
                    term: KTerm::Ratio,
                    seed: derive_seed(base_seed, r as u64),
                    ..Default::default()
                })
                .map_err(|e| e.to_string())?;
                let design = build_exp1_design(&rows, KTerm::Ratio, false).map_err(|e| e.to_string())?;
                let fit = fit_logit(&design, &LogitOptions::default()).map_err(|e| e.to_string())?;
                let (lo, hi) = fit.confidence_interval(KTerm::Ratio.column_name(), 0.05).expect("k-term present");
                Ok(((lo..=hi).contains(&LOGIT_BETA[1]), fit.gradient_max_norm.unwrap_or(f64::INFINITY)))
            })
            .collect();
        if let Some(Err(e)) = outcomes.iter().find(|o| o.is_err()) {
            return (false, e.clone());
        }
        let ok: Vec<(bool, f64)> = outcomes.into_iter().map(Result::unwrap).collect();
        let covered = ok.iter().filter(|o| o.0).count();
        let max_grad = ok.iter().map(|o| o.1).fold(0.0, f64::max);
        let need = needed(reps, 9, 10);
        (
            covered >= need && max_grad < 1e-10,
            format!("covered {covered}/{reps} (need {need}), max gradient {max_grad:.1e}"),
        )
    })
}

fn random_panel(rng: &mut ChaCha8Rng) -> Vec<PanelRow> {
    let groups = rng.random_range(3..=15);
    let mut rows = Vec::new();
    for g in 0..groups {
        let size = rng.random_range(2..=13);
        let gamma: f64 = rng.random_range(-2.0..2.0);
        for j in 0..size {
            let k = rng.random_range(50.0..500.0);
            let price = rng.random_range(50.0..1000.0);
            let n_images = rng.random_range(1..=5u32);
            let brand = rng.random_range(0..4usize);
            let t = 30.0 + 2.0 * k / 1000.0 - 1.5 * price / 1000.0 + 0.4 * f64::from(n_images)
                + gamma
                + 0.3 * brand as f64
                + rng.random_range(-1.0..1.0);
            rows.push(PanelRow {
                participant_id: format!("u{g}"),
                product_id: format!("p{j}"),
                brand_id: format!("b{brand}"),
                set_id: format!("p{j}-s0"),
                purchase: u8::from(rng.random::<bool>()),
                decision_time: t,
                k,
                price,
                n_images,
            });
        }
    }
    rows
}

/// Least-squares dummy-variable fit: one indicator per participant, brand
/// indicators minus the first level, and the three regressors.
pub fn lsdv_coefficients(rows: &[PanelRow]) -> Vec<(String, f64)> {
    let users: Vec<&str> = rows.iter().map(|r| r.participant_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let brands: Vec<&str> = rows.iter().map(|r| r.brand_id.as_str()).collect::<BTreeSet<_>>().into_iter().skip(1).collect();
    let mut names: Vec<String> = ["k/1000", "price/1000", "n_images"].map(String::from).to_vec();
    names.extend(brands.iter().map(|b| format!("brand[{b}]")));
    let p = names.len() + users.len();
    let x = Array2::from_shape_fn((rows.len(), p), |(i, j)| {
        let r = &rows[i];
        match j {
            0 => r.k / 1000.0,
            1 => r.price / 1000.0,
            2 => f64::from(r.n_images),
            _ if j < names.len() => f64::from(u8::from(r.brand_id == brands[j - 3])),
            _ => f64::from(u8::from(r.participant_id == users[j - names.len()])),
        }
    });
    let y: Vec<f64> = rows.iter().map(|r| r.decision_time).collect();
    let beta = oracle::qr_least_squares(x.view(), &y);
    names.into_iter().zip(beta).collect()
}

/// Within-transform estimates equal LSDV on random unbalanced panels, and
/// slopes on 9960-row generated panels are covered by their 95% CIs.
pub fn check_fe_ols(panels: usize, reps: usize, base_seed: u64) -> CheckResult {
    timed("fe-ols", || {
        let spec = FeSpec {
            brand_fe: true,
            user_fe: true,
        };
        let mut worst = 0.0f64;
        let mut compared = 0;
        let mut attempt = 0u64;
        while compared < panels {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, attempt));
            attempt += 1;
            let rows = random_panel(&mut rng);
            // a draw where some brand never varies within a participant is not identified
            let Ok(fit) = fit_fe_ols(&rows, Outcome::DecisionTime, spec, &OlsOptions::default()) else {
                continue;
            };
            for (name, b) in lsdv_coefficients(&rows) {
                let c = fit.coefficient(&name).expect("same columns");
                worst = worst.max((c.estimate - b).abs());
            }
            compared += 1;
        }
        let lsdv_ok = worst <= 1e-8;

        let truth = PanelSpec::default().beta;
        let covered: Vec<[bool; 3]> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let panel = gen_panel(&PanelSpec {
                    seed: derive_seed(base_seed ^ 0x5eed, r as u64),
                    ..Default::default()
                })
                .expect("valid panel spec");
                let fit = fit_fe_ols(&panel.rows, Outcome::Purchase, spec, &OlsOptions::default()).expect("identified panel");
                let mut out = [false; 3];
                for (j, name) in ["k/1000", "price/1000", "n_images"].iter().enumerate() {
                    let (lo, hi) = fit.confidence_interval(name, 0.05).expect("slope present");
                    out[j] = (lo..=hi).contains(&truth[j]);
                }
                out
            })
            .collect();
        let counts: Vec<usize> = (0..3).map(|j| covered.iter().filter(|c| c[j]).count()).collect();
        let need = needed(reps, 9, 10);
        let recovery_ok = counts.iter().all(|&c| c >= need);
        (
            lsdv_ok && recovery_ok,
            format!(
                "{panels} panels max |within - LSDV| {worst:.1e}; slope coverage {}/{}/{} of {reps} (need {need})",
                counts[0], counts[1], counts[2]
            ),
        )
    })
}

pub const FIXTURE_SET_ID: &str = "six_cluster";
pub const FIXTURE_K: usize = 6;

/// The shipped six-cluster fixture: two 196-patch pseudo-images drawn from a
/// six-component mixture in 64 dimensions.
pub fn six_cluster_fixture() -> SyntheticSet {
    let spec = MixtureSpec {
        k_true: FIXTURE_K,
        points_per_component: 1,
        dim: 64,
        center_scale: 40.0,
        within_std: 1.0,
        seed: 6,
    };
    gen_image_set(&spec, FIXTURE_SET_ID, 2, crate::embedding::REFERENCE_PATCHES).expect("feasible fixture")
}

/// Scoring config shipped with the fixture. The grid starts at 3 so that
/// 6 lies on it with the default step of 3.
pub fn six_cluster_config() -> PipelineConfig {
    PipelineConfig {
        search: SearchConfig {
            k_min: 3,
            patience: 5,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// The fixture scores k* = 6 through the full pipeline.
pub fn check_end_to_end() -> CheckResult {
    timed("end-to-end", || {
        let fixture = six_cluster_fixture();
        let store: std::collections::HashMap<String, PatchEmbeddings> =
            fixture.images.into_iter().map(|e| (e.image_id().to_string(), e)).collect();
        match score_set(&fixture.manifest, &store, &six_cluster_config()) {
            Ok(v) => (v.k_star == FIXTURE_K, format!("fixture k*={} (want {FIXTURE_K})", v.k_star)),
            Err(e) => (false, e.to_string()),
        }
    })
}

/// Runs every check in a fixed order.
pub fn run_all(scale: Scale, base_seed: u64) -> Vec<CheckResult> {
    vec![
        check_k_recovery(scale.k_recovery_trials, base_seed),
        check_silhouette_oracle(scale.silhouette_instances, base_seed, &silhouette),
        check_pca_oracle(scale.pca_instances, base_seed),
        check_determinism(base_seed),
        check_stopping_rule(),
        check_logit_recovery(scale.logit_replications, base_seed),
        check_fe_ols(scale.lsdv_panels, scale.panel_replications, base_seed),
        check_end_to_end(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn needed_rounds_up() {
        assert_eq!(needed(20, 19, 20), 19);
        assert_eq!(needed(5, 19, 20), 5);
        assert_eq!(needed(50, 9, 10), 45);
        assert_eq!(needed(10, 9, 10), 9);
    }

    #[test]
    fn sign_flipped_silhouette_is_caught() {
        let flipped = |p: ArrayView2<f64>, l: &[usize]| silhouette(p, l).map(|s| -s);
        assert!(!check_silhouette_oracle(20, 1, &flipped).passed);
        assert!(check_silhouette_oracle(20, 1, &silhouette).passed);
    }

    #[test]
    fn stopping_rule_holds() {
        let r = check_stopping_rule();
        assert!(r.passed, "{}", r.detail);
    }
}

//! Seeded generators with known ground truth: Gaussian mixtures standing in
//! for patch embeddings, logit choice data, and fixed-effects panels.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::derive_seed;
use crate::embedding::{EmbeddingError, ImageSetManifest, PatchEmbeddings};
use crate::stats::{ChoiceRow, KTerm, PanelRow, COVARIATES};

/// Minimum pairwise center distance, in units of `within_std`.
pub const MIN_CENTER_SEPARATION: f64 = 6.0;
/// Rejection-sampling budget per component center.
pub const CENTER_ATTEMPTS: usize = 10_000;
/// Brands in a generated panel.
pub const N_BRANDS: usize = 6;
/// Products in a generated panel's catalogue (more if a user sees more).
pub const PRODUCT_POOL: usize = 100;
/// Baseline decision time in seconds.
pub const DECISION_TIME_BASE: f64 = 30.0;
/// Baseline purchase probability of the linear probability model.
pub const PURCHASE_BASE: f64 = 0.5;
/// Model tag written into synthetic KEMB files.
pub const SYNTHETIC_MODEL_TAG: &str = "synthetic-mixture";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("could not place {k} centers {min_dist} apart inside radius {radius} after {attempts} attempts")]
    Infeasible {
        k: usize,
        min_dist: f64,
        radius: f64,
        attempts: usize,
    },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub k_true: usize,
    pub points_per_component: usize,
    pub dim: usize,
    /// Radius of the ball the component centers are drawn from.
    pub center_scale: f64,
    /// Per-coordinate standard deviation around each center.
    pub within_std: f64,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn separation_ratio(&self) -> f64 {
        self.center_scale / self.within_std
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        if self.k_true < 1 {
            return bad("k_true must be at least 1");
        }
        if self.points_per_component < 1 || self.dim < 1 {
            return bad("points_per_component and dim must be at least 1");
        }
        if !(self.center_scale >= 0.0 && self.center_scale.is_finite()) {
            return bad("center_scale must be finite and non-negative");
        }
        if !(self.within_std >= 0.0 && self.within_std.is_finite()) {
            return bad("within_std must be finite and non-negative");
        }
        Ok(())
    }
}

/// Points sampled from a mixture, grouped by component.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub points: Array2<f64>,
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Array1<f64> {
    let mut v: Array1<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = v.dot(&v).sqrt();
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    if norm > 0.0 {
        v *= r / norm;
    }
    v
}

fn sample_centers(spec: &MixtureSpec, rng: &mut ChaCha8Rng) -> Result<Array2<f64>, SynthError> {
    let min_dist = MIN_CENTER_SEPARATION * spec.within_std;
    let budget = CENTER_ATTEMPTS * spec.k_true;
    let mut centers: Vec<Array1<f64>> = Vec::with_capacity(spec.k_true);
    let mut attempts = 0;
    while centers.len() < spec.k_true {
        if attempts == budget {
            return Err(SynthError::Infeasible {
                k: spec.k_true,
                min_dist,
                radius: spec.center_scale,
                attempts,
            });
        }
        attempts += 1;
        let c = uniform_in_ball(rng, spec.dim, spec.center_scale);
        let far = centers.iter().all(|o| {
            let d = o - &c;
            d.dot(&d).sqrt() >= min_dist
        });
        if far {
            centers.push(c);
        }
    }
    let mut out = Array2::zeros((spec.k_true, spec.dim));
    for (i, c) in centers.iter().enumerate() {
        out.row_mut(i).assign(c);
    }
    Ok(out)
}

fn sample_mixture(spec: &MixtureSpec, counts: &[usize]) -> Result<Mixture, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = sample_centers(spec, &mut rng)?;
    let total: usize = counts.iter().sum();
    let mut points = Array2::zeros((total, spec.dim));
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for (c, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            for j in 0..spec.dim {
                let z: f64 = rng.sample(StandardNormal);
                points[(row, j)] = centers[(c, j)] + spec.within_std * z;
            }
            labels.push(c);
            row += 1;
        }
    }
    Ok(Mixture { points, labels, centers })
}

/// `k_true × points_per_component` isotropic Gaussian points, component by component.
pub fn gen_mixture(spec: &MixtureSpec) -> Result<Mixture, SynthError> {
    sample_mixture(spec, &vec![spec.points_per_component; spec.k_true])
}

/// A synthetic image set: `n_images` pseudo-images of `patches_per_image`
/// patches whose pooled rows come from a `k_true`-component mixture with
/// counts as equal as possible, rows shuffled before splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub manifest: ImageSetManifest,
    pub images: Vec<PatchEmbeddings>,
    /// True component of each pooled row, in manifest-then-patch order.
    pub labels: Vec<usize>,
}

pub fn gen_image_set(
    spec: &MixtureSpec,
    set_id: &str,
    n_images: usize,
    patches_per_image: usize,
) -> Result<SyntheticSet, SynthError> {
    if n_images == 0 || patches_per_image == 0 {
        return Err(SynthError::InvalidSpec("n_images and patches_per_image must be at least 1".into()));
    }
    let total = n_images * patches_per_image;
    if total < spec.k_true {
        return Err(SynthError::InvalidSpec(format!("{total} patches cannot host {} components", spec.k_true)));
    }
    let counts: Vec<usize> = (0..spec.k_true)
        .map(|c| total / spec.k_true + usize::from(c < total % spec.k_true))
        .collect();
    let mix = sample_mixture(spec, &counts)?;
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1)));

    let mut images = Vec::with_capacity(n_images);
    let mut labels = Vec::with_capacity(total);
    let mut ids = Vec::with_capacity(n_images);
    for (m, chunk) in order.chunks(patches_per_image).enumerate() {
        let id = format!("{set_id}-img{m}");
        let patches = Array2::from_shape_fn((patches_per_image, spec.dim), |(p, j)| mix.points[(chunk[p], j)] as f32);
        labels.extend(chunk.iter().map(|&r| mix.labels[r]));
        images.push(PatchEmbeddings::new(id.clone(), SYNTHETIC_MODEL_TAG, patches)?);
        ids.push(id);
    }
    Ok(SyntheticSet {
        manifest: ImageSetManifest::new(set_id, ids),
        images,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceSpec {
    /// Intercept and k-term, optionally followed by nine covariate-difference slopes.
    pub beta: Vec<f64>,
    pub n: usize,
    pub term: KTerm,
    /// Inclusive integer range both k-values are drawn from.
    pub k_range: (u32, u32),
    /// Comparisons answered by each participant.
    pub rows_per_participant: usize,
    pub seed: u64,
}

impl Default for ChoiceSpec {
    fn default() -> Self {
        ChoiceSpec {
            beta: vec![0.0, 1.0],
            n: 5000,
            term: KTerm::Ratio,
            k_range: (50, 500),
            rows_per_participant: 10,
            seed: 0,
        }
    }
}

/// Pairwise choices with `y ~ Bernoulli(logit⁻¹(x·β))`; covariates are
/// standard normal and enter through their differences.
pub fn gen_choice_data(spec: &ChoiceSpec) -> Result<Vec<ChoiceRow>, SynthError> {
    let n_cov = COVARIATES.len();
    if spec.beta.len() != 2 && spec.beta.len() != 2 + n_cov {
        return Err(SynthError::InvalidSpec(format!("beta must have 2 or {} entries", 2 + n_cov)));
    }
    let (lo, hi) = spec.k_range;
    if spec.n == 0 || lo < 2 || hi < lo || spec.rows_per_participant == 0 {
        return Err(SynthError::InvalidSpec("need n >= 1, 2 <= k_lo <= k_hi, rows_per_participant >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows = (0..spec.n)
        .map(|i| {
            let k1 = f64::from(rng.random_range(lo..=hi));
            let k2 = f64::from(rng.random_range(lo..=hi));
            let x1: Vec<f64> = (0..n_cov).map(|_| rng.sample(StandardNormal)).collect();
            let x2: Vec<f64> = (0..n_cov).map(|_| rng.sample(StandardNormal)).collect();
            let mut eta = spec.beta[0] + spec.beta[1] * spec.term.value(k1, k2);
            for (j, b) in spec.beta.iter().skip(2).enumerate() {
                eta += b * (x1[j] - x2[j]);
            }
            let p = 1.0 / (1.0 + (-eta).exp());
            ChoiceRow {
                participant_id: format!("u{}", i / spec.rows_per_participant),
                product_id: format!("q{i}"),
                y: u8::from(rng.random::<f64>() < p),
                k1,
                k2,
                x1,
                x2,
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    /// Slopes on `k/1000`, `price/1000` and `n_images`.
    pub beta: [f64; 3],
    pub n_users: usize,
    pub products_per_user: usize,
    /// Standard deviation of user and brand effects.
    pub fe_std: f64,
    /// Standard deviation of the decision-time noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for PanelSpec {
    fn default() -> Self {
        PanelSpec {
            beta: [-0.18, -0.08, 0.03],
            n_users: 996,
            products_per_user: 10,
            fe_std: 0.05,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

/// Ground-truth effects behind a generated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPanel {
    pub rows: Vec<PanelRow>,
    pub user_effects: Vec<f64>,
    pub brand_effects: Vec<f64>,
}

/// Purchase panel over a catalogue of products, each with a brand, a price in
/// 50–1000 and two image sets (k in 50–500, 1–5 images).
///
/// With `index = β·(k/1000, price/1000, n_images)` and user/brand effects
/// `γ_i`, `α_b ~ N(0, fe_std²)`:
/// * `decision_time = 30 + index + γ_i + α_b + ε`, `ε ~ N(0, noise_std²)`
///   (ε redrawn in the rare case the time would not be positive);
/// * `purchase = 1[U < 0.5 + index + γ_i + α_b]`, `U ~ Uniform(0, 1)`, a
///   linear probability model whose slopes are exactly `β` while the
///   probability stays inside [0, 1].
pub fn gen_panel(spec: &PanelSpec) -> Result<GeneratedPanel, SynthError> {
    if spec.n_users == 0 || spec.products_per_user == 0 {
        return Err(SynthError::InvalidSpec("n_users and products_per_user must be at least 1".into()));
    }
    if !(spec.fe_std >= 0.0 && spec.noise_std >= 0.0) {
        return Err(SynthError::InvalidSpec("standard deviations must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fe = Normal::new(0.0, spec.fe_std).expect("validated std");
    let noise = Normal::new(0.0, spec.noise_std).expect("validated std");

    struct Product {
        brand: usize,
        price: f64,
        sets: [(f64, u32); 2],
    }
    let pool = PRODUCT_POOL.max(spec.products_per_user);
    let products: Vec<Product> = (0..pool)
        .map(|_| Product {
            brand: rng.random_range(0..N_BRANDS),
            price: f64::from(rng.random_range(50u32..=1000)),
            sets: [0, 1].map(|_| (f64::from(rng.random_range(50u32..=500)), rng.random_range(1u32..=5))),
        })
        .collect();
    let brand_effects: Vec<f64> = (0..N_BRANDS).map(|_| fe.sample(&mut rng)).collect();
    let user_effects: Vec<f64> = (0..spec.n_users).map(|_| fe.sample(&mut rng)).collect();

    let mut catalogue: Vec<usize> = (0..pool).collect();
    let mut rows = Vec::with_capacity(spec.n_users * spec.products_per_user);
    for (u, gamma) in user_effects.iter().enumerate() {
        let (shown, _) = catalogue.partial_shuffle(&mut rng, spec.products_per_user);
        for &j in shown.iter() {
            let prod = &products[j];
            let s = rng.random_range(0..2usize);
            let (k, n_images) = prod.sets[s];
            let index = spec.beta[0] * k / 1000.0 + spec.beta[1] * prod.price / 1000.0 + spec.beta[2] * f64::from(n_images);
            let effects = gamma + brand_effects[prod.brand];
            let mut decision_time = DECISION_TIME_BASE + index + effects + noise.sample(&mut rng);
            let mut redraws = 0;
            while decision_time <= 0.0 && redraws < 100 {
                decision_time = DECISION_TIME_BASE + index + effects + noise.sample(&mut rng);
                redraws += 1;
            }
            if decision_time <= 0.0 {
                return Err(SynthError::InvalidSpec("effects too large for positive decision times".into()));
            }
            let purchase = u8::from(rng.random::<f64>() < PURCHASE_BASE + index + effects);
            rows.push(PanelRow {
                participant_id: format!("u{u}"),
                product_id: format!("p{j}"),
                brand_id: format!("b{}", prod.brand),
                set_id: format!("p{j}-s{s}"),
                purchase,
                decision_time,
                k,
                price: prod.price,
                n_images,
            });
        }
    }
    Ok(GeneratedPanel {
        rows,
        user_effects,
        brand_effects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{fit_fe_ols, FeSpec, OlsOptions, Outcome};

    fn mix(k: usize, per: usize, std: f64) -> MixtureSpec {
        MixtureSpec {
            k_true: k,
            points_per_component: per,
            dim: 5,
            center_scale: 10.0,
            within_std: std,
            seed: 3,
        }
    }

    #[test]
    fn label_counts_match() {
        let m = gen_mixture(&mix(3, 20, 0.5)).unwrap();
        assert_eq!(m.points.nrows(), 60);
        for c in 0..3 {
            assert_eq!(m.labels.iter().filter(|&&l| l == c).count(), 20);
        }
    }

    #[test]
    fn zero_noise_points_sit_on_centers() {
        let m = gen_mixture(&mix(4, 5, 0.0)).unwrap();
        for (i, &l) in m.labels.iter().enumerate() {
            assert_eq!(m.points.row(i), m.centers.row(l));
        }
    }

    #[test]
    fn same_seed_same_output() {
        let a = gen_mixture(&mix(3, 10, 1.0)).unwrap();
        let b = gen_mixture(&mix(3, 10, 1.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn centers_are_separated() {
        let spec = mix(6, 2, 1.0);
        let m = gen_mixture(&spec).unwrap();
        for a in 0..6 {
            for b in a + 1..6 {
                let d = &m.centers.row(a) - &m.centers.row(b);
                assert!(d.dot(&d).sqrt() >= 6.0);
            }
        }
    }

    #[test]
    fn infeasible_ball_is_reported() {
        let spec = MixtureSpec {
            center_scale: 1.0,
            within_std: 1.0,
            ..mix(5, 2, 1.0)
        };
        assert!(matches!(gen_mixture(&spec), Err(SynthError::Infeasible { .. })));
    }

    #[test]
    fn image_set_splits_balanced_rows() {
        let s = gen_image_set(&mix(6, 1, 0.5), "set", 2, 196).unwrap();
        assert_eq!(s.images.len(), 2);
        assert_eq!(s.images[1].n_patches(), 196);
        assert_eq!(s.manifest.image_ids, ["set-img0", "set-img1"]);
        let counts: Vec<usize> = (0..6).map(|c| s.labels.iter().filter(|&&l| l == c).count()).collect();
        assert_eq!(counts, [66, 66, 65, 65, 65, 65]);
        // shuffled: the first image holds more than one component
        assert!(s.labels[..196].iter().any(|&l| l != s.labels[0]));
    }

    #[test]
    fn zero_beta_gives_balanced_outcomes() {
        let rows = gen_choice_data(&ChoiceSpec {
            beta: vec![0.0; 2],
            ..Default::default()
        })
        .unwrap();
        let mean = rows.iter().map(|r| f64::from(r.y)).sum::<f64>() / rows.len() as f64;
        assert!((0.46..=0.54).contains(&mean));
        assert!(rows.iter().all(|r| (50.0..=500.0).contains(&r.k1)));
    }

    #[test]
    fn saturated_intercept_gives_all_ones() {
        let mut beta = vec![0.0; 11];
        beta[0] = 10.0;
        let spec = ChoiceSpec {
            beta,
            n: 10_000,
            ..Default::default()
        };
        let rows = gen_choice_data(&spec).unwrap();
        let mean = rows.iter().map(|r| f64::from(r.y)).sum::<f64>() / rows.len() as f64;
        assert!(mean >= 0.999);
        assert_eq!(rows, gen_choice_data(&spec).unwrap());
    }

    #[test]
    fn panel_shape_and_determinism() {
        let spec = PanelSpec::default();
        let a = gen_panel(&spec).unwrap();
        assert_eq!(a.rows.len(), 9960);
        assert_eq!(a, gen_panel(&spec).unwrap());
        assert!(a.rows.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn noiseless_panel_recovers_slopes() {
        let spec = PanelSpec {
            n_users: 40,
            fe_std: 0.0,
            noise_std: 0.0,
            beta: [-2.0, 1.5, 0.25],
            ..Default::default()
        };
        let rows = gen_panel(&spec).unwrap().rows;
        let fit = fit_fe_ols(&rows, Outcome::DecisionTime, FeSpec::default(), &OlsOptions::default()).unwrap();
        for (name, b) in ["k/1000", "price/1000", "n_images"].iter().zip(spec.beta) {
            assert!((fit.coefficient(name).unwrap().estimate - b).abs() < 1e-8);
        }
    }
}

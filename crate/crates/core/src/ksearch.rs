//! Grid search over the cluster count with a patience stopping rule.
//!
//! The grid is `k_min, k_min + step, …`. Each grid point is scored by the
//! restart-averaged silhouette `silh_k`; the search stops once `patience`
//! consecutive evaluations fail to strictly beat the best score so far, or the
//! grid runs out. `k*` is the evaluated `k` with the highest `silh_k`, ties going
//! to the smallest `k`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{
    derive_seed, ClusterError, KMeans, KMeansParams, RestartScorer, SilhouetteMode, SilhouetteSummary,
    DEFAULT_RESTARTS,
};

pub const DEFAULT_K_MIN: usize = 2;
pub const DEFAULT_STEP: usize = 3;
pub const DEFAULT_PATIENCE: usize = 100;
/// Hard cap on `k` when no `k_max` is configured.
pub const K_MAX_BACKSTOP: usize = 1000;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("need at least 3 points to search over k, got {0}")]
    TooFewPoints(usize),
    #[error("empty grid: k_min={k_min} exceeds the largest feasible k={upper}")]
    EmptyGrid { k_min: usize, upper: usize },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("trace i/o on {path}: {message}")]
    TraceIo { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub k_min: usize,
    /// `None` means `min(n − 1, K_MAX_BACKSTOP)`.
    pub k_max: Option<usize>,
    pub step: usize,
    /// Counted in evaluated grid points, not units of k.
    pub patience: usize,
    pub n_runs: usize,
    pub base_seed: u64,
    pub kmeans: KMeansParams,
    pub silhouette: SilhouetteMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k_min: DEFAULT_K_MIN,
            k_max: None,
            step: DEFAULT_STEP,
            patience: DEFAULT_PATIENCE,
            n_runs: DEFAULT_RESTARTS,
            base_seed: 0,
            kmeans: KMeansParams::default(),
            silhouette: SilhouetteMode::Exact,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if self.k_min < 2 {
            return bad("k_min must be at least 2");
        }
        if self.step == 0 {
            return bad("step must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.n_runs == 0 {
            return bad("n_runs must be at least 1");
        }
        if let Some(k_max) = self.k_max {
            if k_max < self.k_min {
                return bad("k_max must be >= k_min");
            }
        }
        if !(self.kmeans.tol >= 0.0) {
            return bad("k-means tolerance must be non-negative");
        }
        Ok(())
    }

    /// Largest k the search may evaluate for `n` points, and whether that limit
    /// comes from the backstop rather than from `k_max` or `n − 1`.
    fn upper_bound(&self, n: usize) -> (usize, bool) {
        let feasible = n.saturating_sub(1);
        match self.k_max {
            Some(k_max) => (k_max.min(feasible), false),
            None if K_MAX_BACKSTOP < feasible => (K_MAX_BACKSTOP, true),
            None => (feasible, false),
        }
    }

    /// Seed handed to the restarts at `k`.
    pub fn seed_for_k(&self, k: usize) -> u64 {
        derive_seed(self.base_seed, k as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `patience` consecutive grid points failed to beat the best score.
    PatienceExhausted,
    /// The backstop cap on k cut the grid short.
    KMaxReached,
    /// Every grid point up to `min(k_max, n − 1)` was evaluated.
    GridExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: usize,
    pub silh_k: f64,
    pub per_run_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KStarResult {
    pub k_star: usize,
    pub trace: Vec<TraceEntry>,
    pub stop_reason: StopReason,
    pub config: SearchConfig,
}

impl KStarResult {
    pub fn best(&self) -> &TraceEntry {
        self.trace.iter().find(|e| e.k == self.k_star).expect("k_star is in the trace")
    }

    pub fn silh_at(&self, k: usize) -> Option<f64> {
        self.trace.iter().find(|e| e.k == k).map(|e| e.silh_k)
    }

    pub fn evaluated_ks(&self) -> Vec<usize> {
        self.trace.iter().map(|e| e.k).collect()
    }
}

/// Scores one grid point. Implemented by the k-means restart scorer and by
/// closures, so alternative clusterers or synthetic curves can be plugged in.
pub trait KScorer {
    fn score_k(&self, k: usize) -> Result<SilhouetteSummary, ClusterError>;
}

impl<F> KScorer for F
where
    F: Fn(usize) -> Result<SilhouetteSummary, ClusterError>,
{
    fn score_k(&self, k: usize) -> Result<SilhouetteSummary, ClusterError> {
        self(k)
    }
}

/// Finds k* for a point set with seeded k-means restarts.
pub fn find_k_star(points: ArrayView2<f64>, config: &SearchConfig) -> Result<KStarResult, SearchError> {
    config.validate()?;
    let n = points.nrows();
    if n < 3 {
        return Err(SearchError::TooFewPoints(n));
    }
    let scorer = RestartScorer::new(
        points,
        KMeans {
            params: config.kmeans,
        },
        config.n_runs,
        config.silhouette,
    )?;
    search_with(|k: usize| scorer.summary(k, config.seed_for_k(k)), n, config)
}

/// The search loop, independent of how each `k` is scored.
pub fn search_with<S: KScorer>(scorer: S, n: usize, config: &SearchConfig) -> Result<KStarResult, SearchError> {
    config.validate()?;
    if n < 3 {
        return Err(SearchError::TooFewPoints(n));
    }
    let (upper, backstop) = config.upper_bound(n);
    if config.k_min > upper {
        return Err(SearchError::EmptyGrid {
            k_min: config.k_min,
            upper,
        });
    }

    let mut trace = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut stale = 0usize;
    let mut k = config.k_min;
    let stop_reason = loop {
        let summary = scorer.score_k(k)?;
        let silh_k = summary.mean_score;
        trace.push(TraceEntry {
            k,
            silh_k,
            per_run_scores: summary.per_run_scores,
        });
        match best {
            Some((_, b)) if !(silh_k > b) => stale += 1,
            _ => {
                best = Some((k, silh_k));
                stale = 0;
            }
        }
        if stale >= config.patience {
            break StopReason::PatienceExhausted;
        }
        match k.checked_add(config.step) {
            Some(next) if next <= upper => k = next,
            _ if backstop => break StopReason::KMaxReached,
            _ => break StopReason::GridExhausted,
        }
    };

    Ok(KStarResult {
        k_star: best.expect("at least one evaluation").0,
        trace,
        stop_reason,
        config: config.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct TraceSidecar {
    k_star: usize,
    stop_reason: StopReason,
    config: SearchConfig,
}

/// Sidecar path for a trace CSV: same stem, `.json` extension.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `k,silh_k,run_1..run_N` rows plus a JSON sidecar with the config
/// and stop reason. Floats use shortest round-trip formatting.
pub fn dump_trace(result: &KStarResult, path: impl AsRef<Path>) -> Result<(), SearchError> {
    let path = path.as_ref();
    let io_err = |p: &Path, e: &dyn std::fmt::Display| SearchError::TraceIo {
        path: p.to_path_buf(),
        message: e.to_string(),
    };
    let runs = result.trace.first().map_or(0, |e| e.per_run_scores.len());
    let mut writer = csv::Writer::from_path(path).map_err(|e| io_err(path, &e))?;
    let mut header = vec!["k".to_string(), "silh_k".to_string()];
    header.extend((1..=runs).map(|r| format!("run_{r}")));
    writer.write_record(&header).map_err(|e| io_err(path, &e))?;
    for entry in &result.trace {
        let mut record = vec![entry.k.to_string(), entry.silh_k.to_string()];
        record.extend(entry.per_run_scores.iter().map(f64::to_string));
        writer.write_record(&record).map_err(|e| io_err(path, &e))?;
    }
    writer.flush().map_err(|e| io_err(path, &e))?;

    let sidecar = TraceSidecar {
        k_star: result.k_star,
        stop_reason: result.stop_reason,
        config: result.config.clone(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&side, text + "\n").map_err(|e| io_err(&side, &e))
}

/// Reads a trace written by [`dump_trace`].
pub fn load_trace(path: impl AsRef<Path>) -> Result<KStarResult, SearchError> {
    let path = path.as_ref();
    let io_err = |p: &Path, e: &dyn std::fmt::Display| SearchError::TraceIo {
        path: p.to_path_buf(),
        message: e.to_string(),
    };
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| io_err(&side, &e))?;
    let sidecar: TraceSidecar = serde_json::from_str(&text).map_err(|e| io_err(&side, &e))?;

    let mut reader = csv::Reader::from_path(path).map_err(|e| io_err(path, &e))?;
    let mut trace = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| io_err(path, &e))?;
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| io_err(path, &e));
        let k = record
            .get(0)
            .unwrap_or_default()
            .parse::<usize>()
            .map_err(|e| io_err(path, &e))?;
        let silh_k = parse_f(record.get(1).unwrap_or_default())?;
        let per_run_scores = record.iter().skip(2).map(parse_f).collect::<Result<Vec<_>, _>>()?;
        trace.push(TraceEntry {
            k,
            silh_k,
            per_run_scores,
        });
    }
    Ok(KStarResult {
        k_star: sidecar.k_star,
        trace,
        stop_reason: sidecar.stop_reason,
        config: sidecar.config,
    })
}

/// Human-readable table of a trace, marking k*.
pub fn format_trace(result: &KStarResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>6}  {:>10}  {:>10}  {:>10}", "k", "silh_k", "min_run", "max_run");
    for e in &result.trace {
        let min = e.per_run_scores.iter().copied().fold(f64::INFINITY, f64::min);
        let max = e.per_run_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mark = if e.k == result.k_star { "  <- k*" } else { "" };
        let _ = writeln!(out, "{:>6}  {:>10.6}  {:>10.6}  {:>10.6}{mark}", e.k, e.silh_k, min, max);
    }
    let _ = writeln!(
        out,
        "k* = {}  ({} grid points, stop: {:?})",
        result.k_star,
        result.trace.len(),
        result.stop_reason
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(f: impl Fn(usize) -> f64) -> impl Fn(usize) -> Result<SilhouetteSummary, ClusterError> {
        move |k| Ok(SilhouetteSummary::from_scores(k, vec![f(k)], vec![0]))
    }

    fn config(k_min: usize, step: usize, patience: usize) -> SearchConfig {
        SearchConfig {
            k_min,
            step,
            patience,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn peak_at_third_point_then_decreasing() {
        let cfg = config(2, 3, 5);
        let r = search_with(curve(|k| if k <= 8 { k as f64 } else { 8.0 - k as f64 }), 1000, &cfg).unwrap();
        assert_eq!(r.k_star, 8);
        assert_eq!(r.trace.len(), 3 + 5);
        assert_eq!(r.stop_reason, StopReason::PatienceExhausted);
    }

    #[test]
    fn decreasing_curve_stops_after_one_plus_patience() {
        let r = search_with(curve(|k| -(k as f64)), 1000, &config(2, 3, 7)).unwrap();
        assert_eq!(r.trace.len(), 8);
        assert_eq!(r.k_star, 2);
    }

    #[test]
    fn ties_consume_patience_and_favour_small_k() {
        let r = search_with(curve(|_| 0.5), 1000, &config(3, 1, 4)).unwrap();
        assert_eq!(r.k_star, 3);
        assert_eq!(r.trace.len(), 5);
    }

    #[test]
    fn one_point_grid() {
        let cfg = SearchConfig {
            k_min: 5,
            k_max: Some(5),
            ..SearchConfig::default()
        };
        let r = search_with(curve(|_| 0.1), 100, &cfg).unwrap();
        assert_eq!(r.k_star, 5);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.stop_reason, StopReason::GridExhausted);
    }

    #[test]
    fn grid_bounded_by_n_minus_one() {
        let r = search_with(curve(|k| k as f64), 12, &config(2, 3, 100)).unwrap();
        assert_eq!(r.evaluated_ks(), vec![2, 5, 8, 11]);
        assert_eq!(r.stop_reason, StopReason::GridExhausted);
        assert_eq!(r.k_star, 11);
    }

    #[test]
    fn backstop_reports_k_max_reached() {
        let r = search_with(curve(|k| k as f64), 5000, &config(2, 100, 1000)).unwrap();
        assert_eq!(*r.evaluated_ks().last().unwrap(), 902);
        assert_eq!(r.stop_reason, StopReason::KMaxReached);
    }

    #[test]
    fn invalid_configs() {
        let f = curve(|_| 0.0);
        assert!(matches!(search_with(&f, 100, &config(1, 3, 1)), Err(SearchError::InvalidConfig(_))));
        assert!(matches!(search_with(&f, 100, &config(2, 0, 1)), Err(SearchError::InvalidConfig(_))));
        assert!(matches!(search_with(&f, 100, &config(2, 3, 0)), Err(SearchError::InvalidConfig(_))));
        assert!(matches!(search_with(&f, 5, &config(6, 3, 1)), Err(SearchError::EmptyGrid { .. })));
        assert!(matches!(search_with(&f, 2, &config(2, 3, 1)), Err(SearchError::TooFewPoints(2))));
    }

    #[test]
    fn trace_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let cfg = config(2, 3, 2);
        let r = search_with(
            |k: usize| {
                let runs: Vec<f64> = (0..30).map(|i| (k as f64).sin() / 3.0 + i as f64 * 1e-3).collect();
                Ok(SilhouetteSummary::from_scores(k, runs, vec![]))
            },
            100,
            &cfg,
        )
        .unwrap();
        dump_trace(&r, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + r.trace.len());
        assert!(lines.iter().all(|l| l.split(',').count() == 32));
        let back = load_trace(&path).unwrap();
        assert_eq!(back, r);
    }
}

//! Manifest → stacked patches → PCA → k* search → [`KValue`], for one set or
//! a whole corpus.

use std::io::Write;
use std::path::Path;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::{stack_set, EmbeddingError, EmbeddingStore, ImageSetManifest, StackedSet};
use crate::ksearch::{find_k_star, KStarResult, SearchConfig, SearchError};
use crate::pca::{fit_pca, PcaError, DEFAULT_COMPONENTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Requested PCA components `L`; the fit keeps `min(L, n − 1, D)`.
    pub n_components: usize,
    pub search: SearchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_components: DEFAULT_COMPONENTS,
            search: SearchConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// SHA-256 of the config's canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("set {set_id:?}, stage stack: {source}")]
    Stack { set_id: String, source: EmbeddingError },
    #[error("set {set_id:?}, stage pca: {source}")]
    Pca { set_id: String, source: PcaError },
    #[error("set {set_id:?}, stage search: {source}")]
    Search { set_id: String, source: SearchError },
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Stack { .. } => "stack",
            PipelineError::Pca { .. } => "pca",
            PipelineError::Search { .. } => "search",
        }
    }

    pub fn set_id(&self) -> &str {
        match self {
            PipelineError::Stack { set_id, .. } | PipelineError::Pca { set_id, .. } | PipelineError::Search { set_id, .. } => set_id,
        }
    }
}

/// The k-value of one image set with the diagnostics needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KValue {
    pub set_id: String,
    pub k_star: usize,
    pub n_images: usize,
    pub n_points: usize,
    pub l_eff: usize,
    /// Cumulative explained-variance ratio of the retained components.
    pub pca_cumvar_at_l: f64,
    pub search: KStarResult,
    pub pipeline_config_hash: String,
}

/// Scores an already stacked set.
pub fn score_stacked(stacked: &StackedSet, config: &PipelineConfig) -> Result<KValue, PipelineError> {
    let set_id = stacked.set_id.clone();
    let points = stacked.points.mapv(f64::from);
    let (projected, l_eff, cumvar) = reduce(points.view(), config.n_components).map_err(|source| PipelineError::Pca {
        set_id: set_id.clone(),
        source,
    })?;
    let search = find_k_star(projected.view(), &config.search).map_err(|source| PipelineError::Search {
        set_id: set_id.clone(),
        source,
    })?;
    Ok(KValue {
        set_id,
        k_star: search.k_star,
        n_images: stacked.n_images(),
        n_points: stacked.n_points(),
        l_eff,
        pca_cumvar_at_l: cumvar,
        search,
        pipeline_config_hash: config.hash(),
    })
}

fn reduce(points: ArrayView2<f64>, n_components: usize) -> Result<(ndarray::Array2<f64>, usize, f64), PcaError> {
    let model = fit_pca(points, n_components)?;
    let l_eff = model.n_components();
    let cumvar = model.cumulative_variance_at(l_eff);
    Ok((model.transform(points)?, l_eff, cumvar))
}

/// Scores one image set; errors carry the failing stage.
pub fn score_set<S: EmbeddingStore + ?Sized>(
    manifest: &ImageSetManifest,
    store: &S,
    config: &PipelineConfig,
) -> Result<KValue, PipelineError> {
    let stacked = stack_set(manifest, store).map_err(|source| PipelineError::Stack {
        set_id: manifest.set_id.clone(),
        source,
    })?;
    score_stacked(&stacked, config)
}

/// Scores every manifest on a pool of `parallelism` threads. Results keep
/// manifest order; a failing set does not stop the others.
pub fn score_corpus<S: EmbeddingStore + ?Sized>(
    manifests: &[ImageSetManifest],
    store: &S,
    config: &PipelineConfig,
    parallelism: usize,
) -> Result<Vec<Result<KValue, PipelineError>>, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build()?;
    Ok(pool.install(|| manifests.par_iter().map(|m| score_set(m, store, config)).collect()))
}

/// One JSON object per line.
pub fn write_jsonl(values: &[KValue], path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in values {
        serde_json::to_writer(&mut out, v)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl(path: &Path) -> std::io::Result<Vec<KValue>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}

/// `set_id,k_star,n_images,cumvar` rows for joining into regression inputs.
pub fn write_index_csv(values: &[KValue], path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["set_id", "k_star", "n_images", "cumvar"])?;
    for v in values {
        w.write_record([
            v.set_id.clone(),
            v.k_star.to_string(),
            v.n_images.to_string(),
            v.pca_cumvar_at_l.to_string(),
        ])?;
    }
    w.flush()
}

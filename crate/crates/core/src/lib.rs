//! k-value of product image sets: patch embeddings are pooled per set,
//! reduced by PCA, and clustered with seeded k-means over a grid of k; the
//! k with the highest restart-averaged silhouette is the set's k-value.
//! Regression tools relate k-values to consumer choices and purchases, and
//! seeded generators provide ground truth for every stage.

pub mod cli;
pub mod cluster;
pub mod embedding;
pub mod ksearch;
pub mod pca;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod validate;

//! Thresholded cosine spectral clustering.
//!
//! embed -> absolute cosine -> threshold (data-driven unless given) ->
//! k-means on the thresholded rows. Embedding directions with a numerically
//! zero eigenvalue are dropped before the cosines are taken.

use nalgebra::DMatrix;

use crate::embed::{auto_threshold, cosine_similarity, threshold, Spectrum, ThresholdChoice};
use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::kmeans::{kmeans_sparse, KMeansConfig, SparseRows};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TcscConfig {
    /// Fixed threshold in `(0, 1)`; `None` selects one from the data.
    pub threshold: Option<f64>,
    pub kmeans: KMeansConfig,
}

impl TcscConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            threshold: None,
            kmeans: KMeansConfig::with_seed(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcscResult {
    pub labels: LabelVector,
    pub threshold: ThresholdChoice,
    /// k-means objective on the thresholded rows.
    pub objective: f64,
}

/// Runs the full pipeline on a symmetric matrix (adjacency or probabilities).
pub fn tcsc(a: &DMatrix<f64>, k: usize, cfg: &TcscConfig) -> Result<TcscResult> {
    if k == 0 || a.nrows() < k * k {
        return Err(Error::param(format!(
            "{k} communities need at least {} nodes, got {}",
            k * k,
            a.nrows()
        )));
    }
    tcsc_from_spectrum(&Spectrum::new(a)?, k, cfg)
}

/// Same as [`tcsc`], reusing a precomputed eigendecomposition.
pub fn tcsc_from_spectrum(spectrum: &Spectrum, k: usize, cfg: &TcscConfig) -> Result<TcscResult> {
    let e = spectrum.embedding_for(k)?.informative();
    let s = cosine_similarity(&e);
    let choice = match cfg.threshold {
        Some(d) => ThresholdChoice {
            value: d,
            fallback: false,
        },
        None => auto_threshold(&s)?,
    };
    let t = threshold(&s, choice.value)?;
    let res = kmeans_sparse(&SparseRows::from_dense(&t.t), k, &cfg.kmeans)?;
    Ok(TcscResult {
        labels: res.labels,
        threshold: choice,
        objective: res.objective,
    })
}

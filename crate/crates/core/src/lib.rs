//! Community detection under the popularity adjusted block model (PABM).
//!
//! - [`generate`]: PABM parameters, sampling and simulation scenarios
//! - [`embed`]: spectral embedding, absolute-cosine similarity, thresholds
//! - [`tcsc`] / [`kmeans`]: thresholded cosine spectral clustering
//! - [`refine`]: one- and two-step cosine refinement (R-TCSC)
//! - [`svcp`]: choosing the number of communities
//! - [`eval`]: permutation-minimised misclustering loss
//! - [`experiment`]: Monte Carlo harness and results tables
//!
//! With the default `parallel` feature, similarity rows, k-means restarts,
//! per-node refinement scores and benchmark replications run on the rayon
//! pool. Results do not depend on the schedule.

pub mod config;
pub mod embed;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod generate;
pub mod graph;
pub mod kmeans;
mod par;
pub mod refine;
pub mod seed;
pub mod svcp;
pub mod tcsc;

pub use error::{Error, Result};
pub use graph::{AdjacencyMatrix, CommunitySizes, LabelVector};

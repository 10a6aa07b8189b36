//! Selecting the number of communities from the second singular values of
//! diagonal blocks.
//!
//! For a candidate count `K~`, `f(K~)` is the largest second singular value
//! over the diagonal blocks of the matrix under the TCSC labeling with `K~`
//! communities. Under the model every diagonal block of the probability matrix
//! is rank one once `K~ >= K`, so `f` collapses there. The estimate maximises
//!
//! ```text
//! f(K~ - 1) / (mean(f(K~), ..., f(K~ + d - 1)) + ln n)
//! ```
//!
//! over `K~ = 2..=k_max`.

use std::io::Write;

use log::warn;
use nalgebra::DMatrix;

use crate::embed::Spectrum;
use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::kmeans::KMeansConfig;
use crate::par;
use crate::tcsc::{tcsc_from_spectrum, TcscConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvcpConfig {
    pub k_max: usize,
    /// Averaging window of the denominator.
    pub window_d: usize,
    pub kmeans: KMeansConfig,
}

impl SvcpConfig {
    pub fn new(k_max: usize, seed: u64) -> Self {
        Self {
            k_max,
            window_d: 2,
            kmeans: KMeansConfig::with_seed(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max < 2 {
            return Err(Error::param(format!("k_max must be at least 2, got {}", self.k_max)));
        }
        if self.window_d == 0 {
            return Err(Error::param("window width must be at least 1"));
        }
        self.kmeans.validate()
    }

    /// Largest candidate labeling that is evaluated.
    pub fn largest_candidate(&self) -> usize {
        self.k_max + self.window_d - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvcpTrace {
    /// `f_values[K~ - 1]`; `None` when the candidate was skipped.
    pub f_values: Vec<Option<f64>>,
    /// `ratios[K~ - 2]` for `K~ = 2..=k_max`.
    pub ratios: Vec<Option<f64>>,
    pub chosen_k: usize,
}

impl SvcpTrace {
    pub fn f(&self, k: usize) -> Option<f64> {
        self.f_values.get(k - 1).copied().flatten()
    }

    /// CSV `k,f_value,ratio`; missing values are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,f_value,ratio")?;
        for (idx, f) in self.f_values.iter().enumerate() {
            let k = idx + 1;
            let ratio = if k >= 2 { self.ratios.get(k - 2).copied().flatten() } else { None };
            let show = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            writeln!(w, "{k},{},{}", show(*f), show(ratio))?;
        }
        Ok(())
    }
}

/// Second-largest singular value of a dense matrix; 0 for anything smaller
/// than 2x2.
pub fn second_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() < 2 || m.ncols() < 2 {
        return 0.0;
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv[1]
}

/// Largest second singular value among the diagonal blocks defined by `c`.
pub fn block_second_singular(a: &DMatrix<f64>, c: &LabelVector) -> Result<f64> {
    if a.nrows() != a.ncols() || a.nrows() != c.len() {
        return Err(Error::param(format!(
            "matrix is {}x{} but there are {} labels",
            a.nrows(),
            a.ncols(),
            c.len()
        )));
    }
    let members = c.members();
    if let Some(g) = members.iter().position(Vec::is_empty) {
        return Err(Error::param(format!("community {} is empty", g + 1)));
    }
    let values = par::map_slice(&members, |idx| {
        let block = DMatrix::from_fn(idx.len(), idx.len(), |r, s| a[(idx[r], idx[s])]);
        second_singular_value(&block)
    });
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// Estimates the number of communities.
pub fn select_k(a: &DMatrix<f64>, cfg: &SvcpConfig) -> Result<(usize, SvcpTrace)> {
    cfg.validate()?;
    let n = a.nrows();
    let spectrum = Spectrum::new(a)?;
    let tcfg = TcscConfig {
        threshold: None,
        kmeans: cfg.kmeans,
    };
    let candidates: Vec<usize> = (1..=cfg.largest_candidate()).collect();
    let f_values = par::map_slice(&candidates, |&k| -> Result<Option<f64>> {
        if k == 1 {
            return block_second_singular(a, &LabelVector::uniform(n)).map(Some);
        }
        if n < k * k {
            warn!("skipping candidate K = {k}: needs at least {} nodes, have {n}", k * k);
            return Ok(None);
        }
        let labels = tcsc_from_spectrum(&spectrum, k, &tcfg)?.labels;
        if labels.sizes().first_empty().is_some() {
            warn!("skipping candidate K = {k}: clustering left a community empty");
            return Ok(None);
        }
        block_second_singular(a, &labels).map(Some)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let log_n = (n as f64).ln();
    let ratios: Vec<Option<f64>> = (2..=cfg.k_max)
        .map(|k| {
            let num = f_values[k - 2]?;
            let window = &f_values[k - 1..k - 1 + cfg.window_d];
            let sum = window.iter().copied().sum::<Option<f64>>()?;
            Some(num / (sum / cfg.window_d as f64 + log_n))
        })
        .collect();

    let mut chosen: Option<(usize, f64)> = None;
    for (idx, r) in ratios.iter().enumerate() {
        if let Some(r) = *r {
            if chosen.is_none_or(|(_, best)| r > best) {
                chosen = Some((idx + 2, r));
            }
        }
    }
    let (chosen_k, _) =
        chosen.ok_or_else(|| Error::param(format!("no candidate in 2..={} could be evaluated for n = {n}", cfg.k_max)))?;
    Ok((
        chosen_k,
        SvcpTrace {
            f_values,
            ratios,
            chosen_k,
        },
    ))
}

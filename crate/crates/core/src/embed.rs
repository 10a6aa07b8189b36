//! Spectral embedding, absolute-cosine similarity, and thresholding.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::par;

/// Norms below this count as zero rows.
pub const ZERO_NORM: f64 = 1e-12;

/// Histogram resolution used by [`auto_threshold`].
pub const DEFAULT_BINS: usize = 50;

/// Eigenvalues at or below this fraction of the largest `|eigenvalue|` are
/// treated as exact zeros.
pub const NULL_EIGENVALUE_RTOL: f64 = 1e-10;

/// Threshold used when the similarity histogram carries no drop.
pub const FALLBACK_THRESHOLD: f64 = 0.5;

/// Full eigendecomposition of a symmetric matrix, eigenpairs ordered by
/// decreasing `|eigenvalue|` and each eigenvector sign-normalised so its
/// largest-magnitude entry is positive.
#[derive(Debug, Clone)]
pub struct Spectrum {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() {
            return Err(Error::param(format!("matrix must be square, got {}x{}", n, m.ncols())));
        }
        if n == 0 {
            return Ok(Self {
                vectors: DMatrix::zeros(0, 0),
                values: Vec::new(),
            });
        }
        let scale = m.amax().max(1.0);
        if (m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::param("matrix is not symmetric"));
        }
        let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 100 * n.max(10))
            .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;

        let mut order: Vec<usize> = (0..n).collect();
        // Stable sort keeps the solver's order on exact ties.
        order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));

        let mut vectors = DMatrix::zeros(n, n);
        let mut values = Vec::with_capacity(n);
        for (dst, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).into_owned();
            let pivot = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if pivot < 0.0 {
                col.neg_mut();
            }
            vectors.set_column(dst, &col);
            values.push(eig.eigenvalues[src]);
        }
        Ok(Self { vectors, values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Eigenvalues, largest magnitude first.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// The leading `dim` eigenpairs.
    pub fn leading(&self, dim: usize) -> Result<Embedding> {
        if dim > self.n() {
            return Err(Error::param(format!(
                "embedding dimension {dim} exceeds matrix size {}",
                self.n()
            )));
        }
        Ok(Embedding {
            xi: self.vectors.columns(0, dim).into_owned(),
            eigvals: self.values[..dim].to_vec(),
        })
    }

    /// The `k^2`-dimensional embedding used for `k` communities.
    pub fn embedding_for(&self, k: usize) -> Result<Embedding> {
        let dim = k * k;
        if self.n() < dim {
            return Err(Error::param(format!(
                "{k} communities need at least {dim} nodes, got {}",
                self.n()
            )));
        }
        self.leading(dim)
    }
}

/// Rows of the leading eigenvectors, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub xi: DMatrix<f64>,
    pub eigvals: Vec<f64>,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.xi.nrows()
    }

    pub fn dim(&self) -> usize {
        self.xi.ncols()
    }

    /// Drops columns whose eigenvalue is numerically zero relative to the
    /// largest. Such eigenvectors span an arbitrary basis of the null space and
    /// carry no angular information; this only matters for (near) low-rank
    /// inputs such as a probability matrix.
    pub fn informative(&self) -> Embedding {
        let top = self.eigvals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let keep: Vec<usize> = (0..self.dim())
            .filter(|&u| self.eigvals[u].abs() > NULL_EIGENVALUE_RTOL * top)
            .collect();
        if keep.len() == self.dim() {
            return self.clone();
        }
        Embedding {
            xi: self.xi.select_columns(&keep),
            eigvals: keep.iter().map(|&u| self.eigvals[u]).collect(),
        }
    }

    /// `Xi D Xi^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.eigvals));
        &self.xi * d * self.xi.transpose()
    }
}

/// Embedding on the `k^2` eigenvectors with the largest `|eigenvalue|`.
pub fn embed(m: &DMatrix<f64>, k: usize) -> Result<Embedding> {
    if m.nrows() < k * k {
        return Err(Error::param(format!(
            "{k} communities need at least {} nodes, got {}",
            k * k,
            m.nrows()
        )));
    }
    Spectrum::new(m)?.embedding_for(k)
}

/// Cosines between embedding rows; `|cos|` unless built by
/// [`signed_cosine_similarity`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub tau: DMatrix<f64>,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.tau.nrows()
    }

    /// The `n(n-1)/2` strictly upper-triangular entries, row-major.
    pub fn upper_values(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.tau[(i, j)]);
            }
        }
        out
    }
}

/// Absolute cosine between embedding rows. A row with norm below
/// [`ZERO_NORM`] has similarity 0 with everything, itself included.
pub fn cosine_similarity(e: &Embedding) -> SimilarityMatrix {
    cosines(e, true)
}

/// Signed cosines between embedding rows, in `[-1, 1]`. The population-level
/// quantity that [`cosine_similarity`] estimates up to sign.
pub fn signed_cosine_similarity(e: &Embedding) -> SimilarityMatrix {
    cosines(e, false)
}

fn cosines(e: &Embedding, absolute: bool) -> SimilarityMatrix {
    let (n, d) = (e.n(), e.dim());
    // Row-major unit rows; zero rows stay zero.
    let mut unit = vec![0.0; n * d];
    let mut nonzero = vec![false; n];
    for i in 0..n {
        let norm = e.xi.row(i).norm();
        if norm >= ZERO_NORM {
            nonzero[i] = true;
            for u in 0..d {
                unit[i * d + u] = e.xi[(i, u)] / norm;
            }
        }
    }
    let mut tau = vec![0.0; n * n];
    if n > 0 {
        par::for_each_chunk_mut(&mut tau, n, |i, row| {
            if !nonzero[i] {
                return;
            }
            let ui = &unit[i * d..(i + 1) * d];
            for (j, out) in row.iter_mut().enumerate() {
                if !nonzero[j] {
                    continue;
                }
                *out = if i == j {
                    1.0
                } else {
                    let uj = &unit[j * d..(j + 1) * d];
                    let dot = ui.iter().zip(uj).map(|(a, b)| a * b).sum::<f64>();
                    if absolute {
                        dot.abs().min(1.0)
                    } else {
                        dot.clamp(-1.0, 1.0)
                    }
                };
            }
        });
    }
    // Entry (i, j) and (j, i) use the same products in the same order, so the
    // buffer is exactly symmetric and its layout does not matter.
    SimilarityMatrix {
        tau: DMatrix::from_vec(n, n, tau),
    }
}

/// Fixed-width histogram over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { counts }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn left_edge(&self, bin: usize) -> f64 {
        bin as f64 / self.bins() as f64
    }

    /// CSV `bin_left,count`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_left,count")?;
        for (b, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{}", self.left_edge(b), c)?;
        }
        Ok(())
    }
}

/// A chosen threshold and whether the fallback value was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub value: f64,
    pub fallback: bool,
}

/// Width, in bins, of the windows compared by [`auto_threshold`].
pub const DEFAULT_DROP_WINDOW: usize = 10;

/// Steepest-drop rule on raw values. Bins the values over `[0, 1]` and, for
/// every interior bin edge `e`, compares the mean count of the `window` bins
/// left of `e` with the mean count of the `window` bins right of it (windows
/// are truncated at the ends). Returns the edge with the largest decrease,
/// leftmost on ties. `window = 1` is the plain consecutive-bin rule.
pub fn steepest_drop_threshold(values: &[f64], bins: usize, window: usize) -> ThresholdChoice {
    let fallback = |why: &str| {
        warn!("threshold selection fell back to {FALLBACK_THRESHOLD}: {why}");
        ThresholdChoice {
            value: FALLBACK_THRESHOLD,
            fallback: true,
        }
    };
    if bins < 2 || window == 0 || values.is_empty() {
        return fallback("no similarity values to histogram");
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo < ZERO_NORM {
        return fallback("all similarity values are identical");
    }
    let h = Histogram::new(values, bins);
    let mean = |from: usize, to: usize| h.counts[from..to].iter().sum::<usize>() as f64 / (to - from) as f64;
    let mut best: Option<(usize, f64)> = None;
    for e in 1..bins {
        let drop = mean(e.saturating_sub(window), e) - mean(e, (e + window).min(bins));
        if best.is_none_or(|(_, d)| drop > d) {
            best = Some((e, drop));
        }
    }
    match best {
        Some((e, drop)) if drop > 0.0 => ThresholdChoice {
            value: h.left_edge(e),
            fallback: false,
        },
        _ => fallback("histogram has no decreasing step"),
    }
}

/// Data-driven threshold from the upper-triangular similarities.
pub fn auto_threshold(s: &SimilarityMatrix) -> Result<ThresholdChoice> {
    auto_threshold_with(s, DEFAULT_BINS, DEFAULT_DROP_WINDOW)
}

pub fn auto_threshold_with(s: &SimilarityMatrix, bins: usize, window: usize) -> Result<ThresholdChoice> {
    if s.n() < 2 {
        return Err(Error::param("threshold selection needs at least two nodes"));
    }
    Ok(steepest_drop_threshold(&s.upper_values(), bins, window))
}

/// Indicator matrix `1{tau_ij >= threshold}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedMatrix {
    pub t: DMatrix<f64>,
    pub threshold: f64,
}

pub fn threshold(s: &SimilarityMatrix, d: f64) -> Result<ThresholdedMatrix> {
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::param(format!("threshold {d} outside (0, 1)")));
    }
    Ok(ThresholdedMatrix {
        t: s.tau.map(|v| if v >= d { 1.0 } else { 0.0 }),
        threshold: d,
    })
}

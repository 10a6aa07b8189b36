//! Refinement of an initial labeling by aggregated cosine similarity between
//! each node's community slices and the community-mean slices.
//!
//! For node `i`, candidate community `k` scores
//!
//! ```text
//! S_ik = sum_l  <A_i^(l), B^(k,l)> / (|A_i^(l)| * |Abar^(k,l)|)
//! ```
//!
//! where `A_i^(l)` is row `i` restricted to the columns of community `l`,
//! `Abar^(k,l)` the mean of those slices over community `k`, and `B` is either
//! `Abar` (fast variant) or the leave-one-out mean that drops node `i` but
//! keeps the divisor `n_k`. The denominator always uses the full mean.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::kmeans::KMeansConfig;
use crate::par;
use crate::tcsc::{tcsc, TcscConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    /// 1 or 2.
    pub steps: usize,
    pub leave_one_out: bool,
    /// Abort when a community would shrink below this size.
    pub min_cluster_guard: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            steps: 2,
            leave_one_out: false,
            min_cluster_guard: 1,
        }
    }
}

impl RefineConfig {
    pub fn steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.steps) {
            return Err(Error::param(format!("refinement steps must be 1 or 2, got {}", self.steps)));
        }
        if self.min_cluster_guard == 0 {
            return Err(Error::param("min_cluster_guard must be at least 1"));
        }
        Ok(())
    }
}

/// Materialised slices: `rows[i][l]` is `A_i^(l)` and `means[k][l]` is
/// `Abar^(k,l)`, each ordered by ascending node index within community `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunitySlices {
    pub rows: Vec<Vec<Vec<f64>>>,
    pub means: Vec<Vec<Vec<f64>>>,
}

fn check_nonempty(c: &LabelVector, step: usize) -> Result<Vec<usize>> {
    let sizes = c.sizes().counts;
    if let Some(community) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::ClusterCollapse {
            step,
            community: community + 1,
            last_valid: c.clone(),
        });
    }
    Ok(sizes)
}

fn check_shape(a: &DMatrix<f64>, c: &LabelVector) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() != c.len() {
        return Err(Error::param(format!(
            "matrix is {}x{} but there are {} labels",
            a.nrows(),
            a.ncols(),
            c.len()
        )));
    }
    Ok(())
}

pub fn community_slices(a: &DMatrix<f64>, c: &LabelVector) -> Result<CommunitySlices> {
    check_shape(a, c)?;
    let sizes = check_nonempty(c, 0)?;
    let members = c.members();
    let k = c.k();
    let rows: Vec<Vec<Vec<f64>>> = (0..c.len())
        .map(|i| members.iter().map(|cols| cols.iter().map(|&j| a[(i, j)]).collect()).collect())
        .collect();
    let means = (0..k)
        .map(|g| {
            (0..k)
                .map(|l| {
                    let mut m = vec![0.0; members[l].len()];
                    for &v in &members[g] {
                        for (x, y) in m.iter_mut().zip(&rows[v][l]) {
                            *x += y;
                        }
                    }
                    m.iter_mut().for_each(|x| *x /= sizes[g] as f64);
                    m
                })
                .collect()
        })
        .collect();
    Ok(CommunitySlices { rows, means })
}

/// `n x K` matrix of aggregated cosine scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub s: DMatrix<f64>,
}

impl ScoreMatrix {
    /// CSV `node,s_1..s_K,est_label[,true_label]`, 1-based.
    pub fn write_csv<W: Write>(&self, est: &LabelVector, truth: Option<&LabelVector>, mut w: W) -> Result<()> {
        let k = self.s.ncols();
        let mut header = vec!["node".to_string()];
        header.extend((1..=k).map(|l| format!("s_{l}")));
        header.push("est_label".into());
        if truth.is_some() {
            header.push("true_label".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.s.nrows() {
            let mut row = vec![(i + 1).to_string()];
            row.extend((0..k).map(|l| format!("{}", self.s[(i, l)])));
            row.push((est.get(i) + 1).to_string());
            if let Some(t) = truth {
                row.push((t.get(i) + 1).to_string());
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Scores every node against every community under labeling `c`.
pub fn score_matrix(a: &DMatrix<f64>, c: &LabelVector, loo: bool) -> Result<ScoreMatrix> {
    check_shape(a, c)?;
    let sizes = check_nonempty(c, 0)?;
    let (n, k) = (c.len(), c.k());
    let lab = c.as_slice();

    // col_means[g][j] = mean over v in community g of a[v][j].
    let mut col_means = vec![vec![0.0; n]; k];
    for v in 0..n {
        let g = lab[v];
        for j in 0..n {
            col_means[g][j] += a[(v, j)];
        }
    }
    for (g, m) in col_means.iter_mut().enumerate() {
        let inv = 1.0 / sizes[g] as f64;
        m.iter_mut().for_each(|x| *x *= inv);
    }
    // |Abar^(g,l)|
    let mut mean_norm = vec![vec![0.0; k]; k];
    for g in 0..k {
        for j in 0..n {
            mean_norm[g][lab[j]] += col_means[g][j] * col_means[g][j];
        }
        mean_norm[g].iter_mut().for_each(|x| *x = x.sqrt());
    }

    let rows = par::map_range(n, |i| {
        // dots[g][l] = <A_i^(l), Abar^(g,l)>, self_sq[l] = |A_i^(l)|^2
        let mut dots = vec![vec![0.0; k]; k];
        let mut self_sq = vec![0.0; k];
        for j in 0..n {
            let x = a[(i, j)];
            if x == 0.0 {
                continue;
            }
            let l = lab[j];
            self_sq[l] += x * x;
            for g in 0..k {
                dots[g][l] += x * col_means[g][j];
            }
        }
        (0..k)
            .map(|g| {
                (0..k)
                    .map(|l| {
                        let row_norm = self_sq[l].sqrt();
                        let denom = row_norm * mean_norm[g][l];
                        if row_norm == 0.0 || mean_norm[g][l] == 0.0 {
                            return 0.0;
                        }
                        let mut num = dots[g][l];
                        if loo && lab[i] == g {
                            // Drop node i's own slice from the mean, keeping divisor n_g.
                            num -= self_sq[l] / sizes[g] as f64;
                        }
                        num / denom
                    })
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
    });
    Ok(ScoreMatrix {
        s: DMatrix::from_fn(n, k, |i, g| rows[i][g]),
    })
}

/// Argmax of each score row; ties keep the current label, then the lowest index.
fn relabel(scores: &ScoreMatrix, c: &LabelVector) -> Vec<usize> {
    (0..c.len())
        .map(|i| {
            let cur = c.get(i);
            let mut best = (cur, scores.s[(i, cur)]);
            for g in 0..c.k() {
                if scores.s[(i, g)] > best.1 {
                    best = (g, scores.s[(i, g)]);
                }
            }
            best.0
        })
        .collect()
}

/// One synchronous refinement of every node's label.
pub fn refine_step(a: &DMatrix<f64>, c: &LabelVector, loo: bool) -> Result<LabelVector> {
    refine_step_guarded(a, c, loo, 1, 1)
}

fn refine_step_guarded(a: &DMatrix<f64>, c: &LabelVector, loo: bool, guard: usize, step: usize) -> Result<LabelVector> {
    let scores = score_matrix(a, c, loo).map_err(|e| match e {
        Error::ClusterCollapse {
            community, last_valid, ..
        } => Error::ClusterCollapse {
            step,
            community,
            last_valid,
        },
        other => other,
    })?;
    let next = LabelVector::new(relabel(&scores, c), c.k())?;
    if let Some(community) = next.sizes().counts.iter().position(|&s| s < guard) {
        return Err(Error::ClusterCollapse {
            step,
            community: community + 1,
            last_valid: c.clone(),
        });
    }
    Ok(next)
}

/// The initial labeling and every refined labeling after it.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineTrace {
    pub initial: LabelVector,
    pub steps: Vec<LabelVector>,
}

impl RefineTrace {
    pub fn last(&self) -> &LabelVector {
        self.steps.last().unwrap_or(&self.initial)
    }
}

/// Applies `cfg.steps` refinements to `initial`.
pub fn refine_from(a: &DMatrix<f64>, initial: LabelVector, cfg: &RefineConfig) -> Result<RefineTrace> {
    cfg.validate()?;
    let mut steps: Vec<LabelVector> = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let prev = steps.last().unwrap_or(&initial);
        let next = refine_step_guarded(a, prev, cfg.leave_one_out, cfg.min_cluster_guard, step)?;
        steps.push(next);
    }
    Ok(RefineTrace { initial, steps })
}

/// TCSC initialisation followed by `cfg.steps` refinement steps.
pub fn r_tcsc_trace(a: &DMatrix<f64>, k: usize, cfg: &RefineConfig, kcfg: &KMeansConfig) -> Result<RefineTrace> {
    let init = tcsc(
        a,
        k,
        &TcscConfig {
            threshold: None,
            kmeans: *kcfg,
        },
    )?;
    refine_from(a, init.labels, cfg)
}

pub fn r_tcsc(a: &DMatrix<f64>, k: usize, cfg: &RefineConfig, kcfg: &KMeansConfig) -> Result<LabelVector> {
    Ok(r_tcsc_trace(a, k, cfg, kcfg)?.last().clone())
}

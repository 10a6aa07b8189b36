//! Misclustering loss minimised over label permutations.

use crate::error::{Error, Result};
use crate::graph::LabelVector;

/// Largest `K` evaluated by enumerating permutations; above this the
/// Hungarian method is used.
pub const EXHAUSTIVE_MAX_K: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Fraction of misclustered nodes.
    pub loss: f64,
    /// `best_permutation[est_label] = truth_label`, 0-based.
    pub best_permutation: Vec<usize>,
    /// 0-based indices of nodes whose mapped label disagrees with the truth.
    pub misclustered: Vec<usize>,
}

/// `agreement[t][e]` counts nodes with truth `t` and estimate `e`. Square,
/// padded to the larger label count.
fn agreement(truth: &LabelVector, est: &LabelVector) -> Result<Vec<Vec<i64>>> {
    if truth.len() != est.len() {
        return Err(Error::param(format!(
            "label vectors differ in length: {} vs {}",
            truth.len(),
            est.len()
        )));
    }
    let k = truth.k().max(est.k()).max(1);
    let mut m = vec![vec![0i64; k]; k];
    for (&t, &e) in truth.as_slice().iter().zip(est.as_slice()) {
        m[t][e] += 1;
    }
    Ok(m)
}

fn report(truth: &LabelVector, est: &LabelVector, perm: Vec<usize>) -> LossReport {
    let misclustered: Vec<usize> = (0..truth.len())
        .filter(|&i| perm[est.get(i)] != truth.get(i))
        .collect();
    let loss = if truth.is_empty() {
        0.0
    } else {
        misclustered.len() as f64 / truth.len() as f64
    };
    LossReport {
        loss,
        best_permutation: perm,
        misclustered,
    }
}

/// Exhaustive search over all `K!` bijections.
pub fn loss_exhaustive(truth: &LabelVector, est: &LabelVector) -> Result<LossReport> {
    let agree = agreement(truth, est)?;
    let k = agree.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let score = |p: &[usize]| (0..k).map(|e| agree[p[e]][e]).sum::<i64>();
    let mut best = (score(&perm), perm.clone());
    // Heap's algorithm, iterative.
    let mut c = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let s = score(&perm);
            if s > best.0 {
                best = (s, perm.clone());
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(report(truth, est, best.1))
}

/// Linear assignment on the agreement matrix.
pub fn loss_hungarian(truth: &LabelVector, est: &LabelVector) -> Result<LossReport> {
    let agree = agreement(truth, est)?;
    let k = agree.len();
    // Rows are estimated labels, columns truth labels; minimise -agreement.
    let cost: Vec<Vec<i64>> = (0..k).map(|e| (0..k).map(|t| -agree[t][e]).collect()).collect();
    let row_to_col = hungarian(&cost);
    Ok(report(truth, est, row_to_col))
}

/// Minimum-cost perfect matching on a square matrix; returns the column
/// assigned to each row. Shortest augmenting paths with potentials, O(k^3).
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based internal arrays; index 0 is the virtual source.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            row_to_col[col_owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Fraction of nodes misclustered under the best relabeling of `est`.
pub fn misclustering_loss(truth: &LabelVector, est: &LabelVector) -> Result<LossReport> {
    if truth.k().max(est.k()) <= EXHAUSTIVE_MAX_K {
        loss_exhaustive(truth, est)
    } else {
        loss_hungarian(truth, est)
    }
}

/// `1 - loss`.
pub fn accuracy(truth: &LabelVector, est: &LabelVector) -> Result<f64> {
    Ok(1.0 - misclustering_loss(truth, est)?.loss)
}

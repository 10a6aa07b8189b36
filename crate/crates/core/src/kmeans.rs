//! Best-of-restarts Lloyd's algorithm with k-means++ seeding, polished by
//! Hartigan single-point moves.
//!
//! Rows are stored sparsely: thresholded similarity rows are mostly zero and
//! the `x . mu` products dominate the cost.

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::par;
use crate::seed::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the relative objective change falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl KMeansConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(Error::param("k-means needs restarts >= 1 and max_iters >= 1"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::param(format!("k-means tolerance {} must be positive", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub labels: LabelVector,
    /// Within-cluster sum of squares.
    pub objective: f64,
    /// `k x dim` cluster means.
    pub centers: DMatrix<f64>,
    /// Objective after each Lloyd iteration, then after each Hartigan pass, of
    /// the winning restart.
    pub history: Vec<f64>,
    /// Index of the winning restart.
    pub restart: usize,
}

/// Rows with their nonzero entries and squared norms.
#[derive(Debug, Clone)]
pub struct SparseRows {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
    sq_norms: Vec<f64>,
}

impl SparseRows {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows: Vec<Vec<(usize, f64)>> = (0..m.nrows())
            .map(|i| {
                m.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        let sq_norms = rows.iter().map(|r| r.iter().map(|(_, v)| v * v).sum()).collect();
        Self {
            dim: m.ncols(),
            rows,
            sq_norms,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn sq_dist(&self, i: usize, center: &[f64], center_sq: f64) -> f64 {
        let dot: f64 = self.rows[i].iter().map(|&(j, v)| v * center[j]).sum();
        (self.sq_norms[i] - 2.0 * dot + center_sq).max(0.0)
    }
}

/// Clusters the rows of `rows` into `k` groups.
pub fn kmeans(rows: &DMatrix<f64>, k: usize, cfg: &KMeansConfig) -> Result<ClusterResult> {
    kmeans_sparse(&SparseRows::from_dense(rows), k, cfg)
}

pub fn kmeans_sparse(data: &SparseRows, k: usize, cfg: &KMeansConfig) -> Result<ClusterResult> {
    cfg.validate()?;
    if k == 0 || k > data.len() {
        return Err(Error::param(format!(
            "k-means needs 1 <= k <= n, got k = {k}, n = {}",
            data.len()
        )));
    }
    let runs = par::map_range(cfg.restarts, |r| {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[r as u64]));
        lloyd(data, k, cfg, &mut rng)
    });
    // Lowest objective; earliest restart on ties.
    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.objective < a.1.objective { b } else { a })
        .expect("restarts >= 1");
    let centers = DMatrix::from_fn(k, data.dim, |c, j| best.centers[c][j]);
    Ok(ClusterResult {
        labels: LabelVector::new(best.assign, k)?,
        objective: best.objective,
        centers,
        history: best.history,
        restart,
    })
}

struct Run {
    assign: Vec<usize>,
    centers: Vec<Vec<f64>>,
    objective: f64,
    history: Vec<f64>,
}

fn plus_plus_seed(data: &SparseRows, k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let dense = |i: usize| {
        let mut c = vec![0.0; data.dim];
        for &(j, v) in &data.rows[i] {
            c[j] = v;
        }
        c
    };
    let mut centers = vec![dense(rng.random_range(0..n))];
    let mut d2: Vec<f64> = {
        let c = &centers[0];
        let csq = c.iter().map(|v| v * v).sum();
        (0..n).map(|i| data.sq_dist(i, c, csq)).collect()
    };
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = dense(pick);
        let csq = c.iter().map(|v| v * v).sum();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(data.sq_dist(i, &c, csq));
        }
        centers.push(c);
    }
    centers
}

fn nearest(data: &SparseRows, i: usize, centers: &[Vec<f64>], center_sq: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = data.sq_dist(i, center, center_sq[c]);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn means(data: &SparseRows, assign: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; data.dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in assign.iter().enumerate() {
        counts[c] += 1;
        for &(j, v) in &data.rows[i] {
            sums[c][j] += v;
        }
    }
    for (s, &cnt) in sums.iter_mut().zip(&counts) {
        if cnt > 0 {
            let inv = 1.0 / cnt as f64;
            s.iter_mut().for_each(|v| *v *= inv);
        }
    }
    sums
}

fn objective(data: &SparseRows, assign: &[usize], centers: &[Vec<f64>]) -> f64 {
    let center_sq: Vec<f64> = centers.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    assign
        .iter()
        .enumerate()
        .map(|(i, &c)| data.sq_dist(i, &centers[c], center_sq[c]))
        .sum()
}

fn lloyd(data: &SparseRows, k: usize, cfg: &KMeansConfig, rng: &mut Rng) -> Run {
    let n = data.len();
    let mut centers = plus_plus_seed(data, k, rng);
    let mut assign: Vec<usize> = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut objective_value = f64::INFINITY;

    for _ in 0..cfg.max_iters {
        let center_sq: Vec<f64> = centers.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let nearest_all: Vec<(usize, f64)> = (0..n).map(|i| nearest(data, i, &centers, &center_sq)).collect();
        let mut next: Vec<usize> = nearest_all.iter().map(|&(c, _)| c).collect();
        let mut dist: Vec<f64> = nearest_all.iter().map(|&(_, d)| d).collect();

        // Empty clusters take the point farthest from its center.
        let mut counts = vec![0usize; k];
        for &c in &next {
            counts[c] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| counts[next[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dist[b] >= dist[i] => Some(b),
                    _ => Some(i),
                });
            let Some(i) = donor else { break };
            counts[next[i]] -= 1;
            next[i] = empty;
            counts[empty] += 1;
            dist[i] = 0.0;
        }

        let changed = next != assign;
        assign = next;
        centers = means(data, &assign, k);
        let obj = objective(data, &assign, &centers);
        history.push(obj);
        let prev = objective_value;
        objective_value = obj;
        if !changed || (prev - obj).abs() <= cfg.tol * prev.abs() {
            break;
        }
    }
    for _ in 0..cfg.max_iters {
        if !hartigan_pass(data, &mut assign, k) {
            break;
        }
        centers = means(data, &assign, k);
        let obj = objective(data, &assign, &centers);
        history.push(obj);
        objective_value = obj;
    }
    Run {
        assign,
        centers,
        objective: objective_value,
        history,
    }
}

/// One sweep of Hartigan's rule: move a point from `a` to `b` whenever
/// `n_b/(n_b+1) |x-mu_b|^2 < n_a/(n_a-1) |x-mu_a|^2`, which strictly lowers the
/// objective. Lloyd fixed points are frequently not Hartigan fixed points on
/// high-dimensional binary rows. Returns whether anything moved.
fn hartigan_pass(data: &SparseRows, assign: &mut [usize], k: usize) -> bool {
    let mut sums = vec![vec![0.0; data.dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in assign.iter().enumerate() {
        counts[c] += 1;
        for &(j, v) in &data.rows[i] {
            sums[c][j] += v;
        }
    }
    let mut sum_sq: Vec<f64> = sums.iter().map(|s| s.iter().map(|v| v * v).sum()).collect();
    let mut moved = false;
    for (i, row) in data.rows.iter().enumerate() {
        let a = assign[i];
        if counts[a] < 2 {
            continue;
        }
        let x_sq = data.sq_norms[i];
        let dots: Vec<f64> = sums
            .iter()
            .map(|s| row.iter().map(|&(j, v)| v * s[j]).sum())
            .collect();
        // |x - s/m|^2 for a cluster of size m with sum s.
        let dist = |c: usize| {
            let m = counts[c] as f64;
            (x_sq - 2.0 * dots[c] / m + sum_sq[c] / (m * m)).max(0.0)
        };
        let gain = counts[a] as f64 / (counts[a] - 1) as f64 * dist(a);
        let mut best: Option<(usize, f64)> = None;
        for b in (0..k).filter(|&b| b != a) {
            let cost = counts[b] as f64 / (counts[b] + 1) as f64 * dist(b);
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((b, cost));
            }
        }
        let Some((b, cost)) = best else { continue };
        if cost >= gain - 1e-12 * gain.max(1.0) {
            continue;
        }
        sum_sq[a] += x_sq - 2.0 * dots[a];
        sum_sq[b] += x_sq + 2.0 * dots[b];
        for &(j, v) in row {
            sums[a][j] -= v;
            sums[b][j] += v;
        }
        counts[a] -= 1;
        counts[b] += 1;
        assign[i] = b;
        moved = true;
    }
    moved
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::misclustering_loss;

    fn indicator_rows(c: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(c.len(), c.len(), |i, j| if c[i] == c[j] { 1.0 } else { 0.0 })
    }

    #[test]
    fn ideal_indicators_are_recovered_exactly() {
        let truth = [0, 2, 1, 0, 1, 2, 2, 0, 1, 1];
        let res = kmeans(&indicator_rows(&truth), 3, &KMeansConfig::with_seed(1)).unwrap();
        assert_eq!(res.objective, 0.0);
        let t = LabelVector::new(truth.to_vec(), 3).unwrap();
        assert_eq!(misclustering_loss(&t, &res.labels).unwrap().loss, 0.0);
    }

    #[test]
    fn single_cluster_is_total_scatter() {
        let rows = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let res = kmeans(&rows, 1, &KMeansConfig::default()).unwrap();
        // Mean (0.5, 0.5); each point is at squared distance 0.5.
        assert!((res.objective - 2.0).abs() < 1e-12);
        assert!(res.labels.as_slice().iter().all(|&l| l == 0));
    }

    fn brute_force_two_partition(rows: &DMatrix<f64>) -> f64 {
        let n = rows.nrows();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) - 1 {
            let mut total = 0.0;
            for side in [true, false] {
                let members: Vec<usize> = (0..n).filter(|&i| ((mask >> i) & 1 == 1) == side).collect();
                let mut mean = vec![0.0; rows.ncols()];
                for &i in &members {
                    for j in 0..rows.ncols() {
                        mean[j] += rows[(i, j)] / members.len() as f64;
                    }
                }
                for &i in &members {
                    for j in 0..rows.ncols() {
                        total += (rows[(i, j)] - mean[j]).powi(2);
                    }
                }
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn matches_exhaustive_optimum_on_six_rows() {
        let mut rows = indicator_rows(&[0, 0, 0, 1, 1, 1]);
        rows[(1, 4)] = 1.0;
        let oracle = brute_force_two_partition(&rows);
        let res = kmeans(&rows, 2, &KMeansConfig::with_seed(5)).unwrap();
        assert!((res.objective - oracle).abs() < 1e-12, "{} vs {oracle}", res.objective);
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = rng_from_seed(8);
        for seed in 0..10 {
            let rows = DMatrix::from_fn(60, 12, |_, _| if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 });
            let res = kmeans(&rows, 4, &KMeansConfig::with_seed(seed)).unwrap();
            assert!(!res.history.is_empty());
            for w in res.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "seed {seed}: {:?}", res.history);
            }
            assert!(res.objective >= 0.0);
            assert_eq!(res.labels.len(), 60);
        }
    }

    #[test]
    fn every_cluster_nonempty_with_duplicates() {
        // Only two distinct rows but k = 3.
        let rows = DMatrix::from_row_slice(5, 1, &[0.0, 0.0, 0.0, 1.0, 1.0]);
        let res = kmeans(&rows, 3, &KMeansConfig::with_seed(2)).unwrap();
        assert!(res.labels.sizes().first_empty().is_none());
        assert_eq!(res.objective, 0.0);
    }

    #[test]
    fn parameter_errors() {
        let rows = DMatrix::zeros(3, 2);
        assert!(kmeans(&rows, 4, &KMeansConfig::default()).is_err());
        assert!(kmeans(&rows, 0, &KMeansConfig::default()).is_err());
        let cfg = KMeansConfig {
            restarts: 0,
            ..KMeansConfig::default()
        };
        assert!(kmeans(&rows, 2, &cfg).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = rng_from_seed(1);
        let rows = DMatrix::from_fn(40, 8, |_, _| rng.random::<f64>());
        let a = kmeans(&rows, 3, &KMeansConfig::with_seed(4)).unwrap();
        let b = kmeans(&rows, 3, &KMeansConfig::with_seed(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn winner_matches_sequential_scan() {
        let mut rng = rng_from_seed(2);
        let rows = DMatrix::from_fn(50, 6, |_, _| rng.random::<f64>());
        let cfg = KMeansConfig::with_seed(9);
        let best = kmeans(&rows, 4, &cfg).unwrap();
        let data = SparseRows::from_dense(&rows);
        let mut seq_best = (0, f64::INFINITY);
        for r in 0..cfg.restarts {
            let run = lloyd(&data, 4, &cfg, &mut rng_from_seed(derive_seed(cfg.seed, &[r as u64])));
            if run.objective < seq_best.1 {
                seq_best = (r, run.objective);
            }
        }
        assert_eq!(best.restart, seq_best.0);
        assert_eq!(best.objective, seq_best.1);
    }
}

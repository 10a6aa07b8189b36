//! Popularity adjusted block model: parameters, edge probabilities, sampling,
//! and the simulation scenarios (balanced / imbalanced sizes, Beta popularity
//! pairs, the assortativity dial and within-community heterogeneity).

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng as _;
use rand_distr::Beta;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::graph::{save_edge_list, save_labels, AdjacencyMatrix, LabelVector};
use crate::seed::{rng_from_seed, Rng};

/// Node-by-community popularity parameters, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityMatrix {
    m: DMatrix<f64>,
}

impl PopularityMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if let Some(v) = m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::param(format!("popularity entry {v} outside [0, 1]")));
        }
        Ok(Self { m })
    }

    /// Row-major `n x k` entries.
    pub fn from_rows(n: usize, k: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != n * k {
            return Err(Error::param(format!(
                "expected {} popularity entries, got {}",
                n * k,
                rows.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, k, rows))
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn k(&self) -> usize {
        self.m.ncols()
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.m[(i, l)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// CSV with header `lambda_1,...,lambda_K`, one row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.k()).map(|l| format!("lambda_{l}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.k()).map(|l| format!("{}", self.m[(i, l)])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Symmetric edge probabilities `theta_ij = lambda_{i,c(j)} * lambda_{j,c(i)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbMatrix {
    m: DMatrix<f64>,
}

impl EdgeProbMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::param("edge probability matrix must be square"));
        }
        if let Some(v) = m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::param(format!("edge probability {v} outside [0, 1]")));
        }
        Ok(Self { m })
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Mean of the off-diagonal entries, i.e. the expected edge density.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let total: f64 = self.m.iter().sum::<f64>() - self.m.diagonal().sum();
        total / (n * (n - 1)) as f64
    }
}

impl AsRef<DMatrix<f64>> for EdgeProbMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.m
    }
}

/// Builds the edge probability matrix. The diagonal keeps
/// `lambda_{i,c(i)}^2`; only the sampled adjacency has a zero diagonal.
pub fn build_theta(lambda: &PopularityMatrix, c: &LabelVector) -> Result<EdgeProbMatrix> {
    if lambda.k() != c.k() {
        return Err(Error::param(format!(
            "popularity matrix has {} columns but labels declare k = {}",
            lambda.k(),
            c.k()
        )));
    }
    if lambda.n() != c.len() {
        return Err(Error::param(format!(
            "popularity matrix has {} rows but there are {} labels",
            lambda.n(),
            c.len()
        )));
    }
    let n = c.len();
    let l = c.as_slice();
    let m = DMatrix::from_fn(n, n, |i, j| lambda.get(i, l[j]) * lambda.get(j, l[i]));
    Ok(EdgeProbMatrix { m })
}

/// Independent Bernoulli draws on the upper triangle, mirrored, zero diagonal.
pub fn sample_adjacency(theta: &EdgeProbMatrix, rng: &mut Rng) -> Result<AdjacencyMatrix> {
    let n = theta.n();
    if let Some(v) = theta.m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::param(format!("edge probability {v} outside [0, 1]")));
    }
    let mut a = AdjacencyMatrix::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < theta.m[(i, j)] {
                a.set_edge(i, j);
            }
        }
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeMode {
    /// `pi_k = 1/K`.
    Balanced,
    /// `pi_k proportional to 1/k`.
    Imbalanced,
}

impl SizeMode {
    pub fn weights(self, k: usize) -> Vec<f64> {
        match self {
            SizeMode::Balanced => vec![1.0 / k as f64; k],
            SizeMode::Imbalanced => {
                let h: f64 = (1..=k).map(|l| 1.0 / l as f64).sum();
                (1..=k).map(|l| 1.0 / l as f64 / h).collect()
            }
        }
    }
}

impl fmt::Display for SizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeMode::Balanced => "balanced",
            SizeMode::Imbalanced => "imbalanced",
        })
    }
}

impl FromStr for SizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "balanced" => Ok(SizeMode::Balanced),
            "imbalanced" => Ok(SizeMode::Imbalanced),
            other => Err(Error::param(format!(
                "unknown size mode `{other}` (expected balanced or imbalanced)"
            ))),
        }
    }
}

/// How popularity entries are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PopularityMode {
    /// Within-community entries from `Beta(a_intra, b_intra)`, between from
    /// `Beta(a_inter, b_inter)`.
    BetaPair {
        a_intra: f64,
        b_intra: f64,
        a_inter: f64,
        b_inter: f64,
    },
    /// Within `Beta(x, 3 - x)`, between `Beta(3 - x, x)`, `x` in `(0, 3)`.
    AssortDial(f64),
    /// First half of each community (by node index) from `Beta(x, 2)`, second
    /// half from `Beta(1, 1)`, for every column.
    HeteroHalves(f64),
}

impl PopularityMode {
    /// The assortative default: `Beta(2,1)` within, `Beta(1,2)` between.
    pub const ASSORTATIVE: PopularityMode = PopularityMode::BetaPair {
        a_intra: 2.0,
        b_intra: 1.0,
        a_inter: 1.0,
        b_inter: 2.0,
    };

    pub fn validate(&self) -> Result<()> {
        let check = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("Beta parameter {what} = {v} must be positive")))
            }
        };
        match *self {
            PopularityMode::BetaPair {
                a_intra,
                b_intra,
                a_inter,
                b_inter,
            } => {
                check(a_intra, "a_intra")?;
                check(b_intra, "b_intra")?;
                check(a_inter, "a_inter")?;
                check(b_inter, "b_inter")
            }
            PopularityMode::AssortDial(x) => {
                if x > 0.0 && x < 3.0 {
                    Ok(())
                } else {
                    Err(Error::param(format!("assortativity dial x = {x} outside (0, 3)")))
                }
            }
            PopularityMode::HeteroHalves(x) => check(x, "x"),
        }
    }
}

impl fmt::Display for PopularityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PopularityMode::BetaPair {
                a_intra,
                b_intra,
                a_inter,
                b_inter,
            } => write!(f, "beta_pair({a_intra},{b_intra},{a_inter},{b_inter})"),
            PopularityMode::AssortDial(x) => write!(f, "assort_dial({x})"),
            PopularityMode::HeteroHalves(x) => write!(f, "hetero_halves({x})"),
        }
    }
}

impl FromStr for PopularityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            Error::param(format!(
                "cannot parse popularity mode `{s}` (expected beta_pair(a,b,c,d), assort_dial(x) or hetero_halves(x))"
            ))
        };
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args = rest.strip_suffix(')').ok_or_else(bad)?;
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        let mode = match (name.trim(), nums.as_slice()) {
            ("beta_pair", &[a_intra, b_intra, a_inter, b_inter]) => PopularityMode::BetaPair {
                a_intra,
                b_intra,
                a_inter,
                b_inter,
            },
            ("assort_dial", &[x]) => PopularityMode::AssortDial(x),
            ("hetero_halves", &[x]) => PopularityMode::HeteroHalves(x),
            _ => return Err(bad()),
        };
        mode.validate()?;
        Ok(mode)
    }
}

const MAX_LABEL_ATTEMPTS: usize = 100_000;

/// I.i.d. multinomial labels; the whole vector is redrawn until every
/// community is nonempty.
pub fn gen_labels(n: usize, k: usize, size_mode: SizeMode, rng: &mut Rng) -> Result<LabelVector> {
    if k == 0 || n < k {
        return Err(Error::param(format!("need n >= k >= 1, got n = {n}, k = {k}")));
    }
    let dist = WeightedIndex::new(size_mode.weights(k)).map_err(|e| Error::param(e.to_string()))?;
    for _ in 0..MAX_LABEL_ATTEMPTS {
        let labels: Vec<usize> = (0..n).map(|_| dist.sample(rng)).collect();
        let c = LabelVector::new(labels, k)?;
        if c.sizes().first_empty().is_none() {
            return Ok(c);
        }
    }
    Err(Error::param(format!(
        "no label draw with all {k} communities nonempty after {MAX_LABEL_ATTEMPTS} attempts (n = {n})"
    )))
}

fn beta(a: f64, b: f64) -> Result<Beta<f64>> {
    Beta::new(a, b).map_err(|e| Error::param(format!("Beta({a}, {b}): {e}")))
}

/// Draws every `lambda_{il}` from the block distribution of `(c(i), l)`.
pub fn gen_popularity(c: &LabelVector, mode: PopularityMode, rng: &mut Rng) -> Result<PopularityMatrix> {
    mode.validate()?;
    let (n, k) = (c.len(), c.k());
    let mut m = DMatrix::zeros(n, k);
    match mode {
        PopularityMode::BetaPair {
            a_intra,
            b_intra,
            a_inter,
            b_inter,
        } => {
            let (intra, inter) = (beta(a_intra, b_intra)?, beta(a_inter, b_inter)?);
            for i in 0..n {
                for l in 0..k {
                    m[(i, l)] = if c.get(i) == l { intra.sample(rng) } else { inter.sample(rng) };
                }
            }
        }
        PopularityMode::AssortDial(x) => {
            let (intra, inter) = (beta(x, 3.0 - x)?, beta(3.0 - x, x)?);
            for i in 0..n {
                for l in 0..k {
                    m[(i, l)] = if c.get(i) == l { intra.sample(rng) } else { inter.sample(rng) };
                }
            }
        }
        PopularityMode::HeteroHalves(x) => {
            let (first, second) = (beta(x, 2.0)?, beta(1.0, 1.0)?);
            let sizes = c.sizes().counts;
            let mut seen = vec![0usize; k];
            for i in 0..n {
                let g = c.get(i);
                let in_first_half = seen[g] < sizes[g].div_ceil(2);
                seen[g] += 1;
                let dist = if in_first_half { &first } else { &second };
                for l in 0..k {
                    m[(i, l)] = dist.sample(rng);
                }
            }
        }
    }
    Ok(PopularityMatrix { m })
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub k: usize,
    pub size_mode: SizeMode,
    pub popularity: PopularityMode,
    /// Global sparsity scale multiplying every popularity entry.
    pub rho: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Balanced sizes with the assortative `Beta(2,1)` / `Beta(1,2)` pair.
    pub fn balanced(n: usize, k: usize, seed: u64) -> Self {
        Self {
            n,
            k,
            size_mode: SizeMode::Balanced,
            popularity: PopularityMode::ASSORTATIVE,
            rho: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.n < self.k {
            return Err(Error::param(format!(
                "need n >= k >= 2, got n = {}, k = {}",
                self.n, self.k
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::param(format!("rho = {} outside (0, 1]", self.rho)));
        }
        self.popularity.validate()
    }

    /// Required keys: `n`, `k`, `seed`. Optional: `size_mode` (balanced),
    /// `popularity` (`beta_pair(2,1,1,2)`), `rho` (1).
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let known = ["n", "k", "seed", "size_mode", "popularity", "rho"];
        if let Some(key) = kv.keys().find(|key| !known.contains(key)) {
            return Err(Error::Config {
                key: key.into(),
                msg: "unknown key".into(),
            });
        }
        let cfg = Self {
            n: kv.parse_required("n")?,
            k: kv.parse_required("k")?,
            seed: kv.parse_required("seed")?,
            size_mode: kv.parse_or("size_mode", SizeMode::Balanced)?,
            popularity: kv.parse_or("popularity", PopularityMode::ASSORTATIVE)?,
            rho: kv.parse_or("rho", 1.0)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "n = {}\nk = {}\nsize_mode = {}\npopularity = {}\nrho = {}\nseed = {}\n",
            self.n, self.k, self.size_mode, self.popularity, self.rho, self.seed
        )
    }
}

impl FromStr for ScenarioConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(s)?)
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub adjacency: AdjacencyMatrix,
    pub labels: LabelVector,
    pub lambda: PopularityMatrix,
    pub theta: EdgeProbMatrix,
}

/// labels -> popularity -> theta -> adjacency, all from one RNG stream seeded
/// by `config.seed`.
pub fn generate(config: &ScenarioConfig) -> Result<Instance> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let labels = gen_labels(config.n, config.k, config.size_mode, &mut rng)?;
    let mut lambda = gen_popularity(&labels, config.popularity, &mut rng)?;
    if config.rho != 1.0 {
        lambda.m *= config.rho;
    }
    let theta = build_theta(&lambda, &labels)?;
    let adjacency = sample_adjacency(&theta, &mut rng)?;
    Ok(Instance {
        adjacency,
        labels,
        lambda,
        theta,
    })
}

/// Paths written by [`Instance::write_to_dir`].
#[derive(Debug, Clone)]
pub struct InstanceFiles {
    pub edges: PathBuf,
    pub labels: PathBuf,
    pub lambda: PathBuf,
}

impl Instance {
    /// Writes `edges.txt`, `labels.txt` and `lambda.csv` into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<InstanceFiles> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let files = InstanceFiles {
            edges: dir.join("edges.txt"),
            labels: dir.join("labels.txt"),
            lambda: dir.join("lambda.csv"),
        };
        save_edge_list(&self.adjacency, &files.edges)?;
        save_labels(&self.labels, &files.labels)?;
        let mut w = std::io::BufWriter::new(fs::File::create(&files.lambda).map_err(|e| Error::file(&files.lambda, e))?);
        self.lambda.write_csv(&mut w)?;
        w.flush()?;
        Ok(files)
    }
}

/// The two-community example with an orthogonal same-community pair:
/// `n = 8`, labels `(1,1,1,1,2,2,2,2)`.
pub fn example_orthogonal_pair() -> (PopularityMatrix, LabelVector) {
    let col1 = [2.0, 2.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0];
    let col2 = [2.0, 2.0, 1.0, 1.0, 4.0, 4.0, 4.0, 4.0];
    let rows: Vec<f64> = (0..8).flat_map(|i| [col1[i] / 4.0, col2[i] / 4.0]).collect();
    (
        PopularityMatrix::from_rows(8, 2, &rows).expect("entries in [0,1]"),
        LabelVector::from_one_based(&[1, 1, 1, 1, 2, 2, 2, 2], 2).expect("valid labels"),
    )
}

/// The two-community example where raw cosine rows misplace node 8.
pub fn example_raw_cosine_failure() -> (PopularityMatrix, LabelVector) {
    let col1 = [1.0, 10.0, 10.0, 8.0, 1.0, 8.0, 6.0, 10.0];
    let col2 = [2.0, 8.0, 8.0, 10.0, 2.0, 10.0, 8.0, 8.0];
    let rows: Vec<f64> = (0..8).flat_map(|i| [col1[i] / 10.0, col2[i] / 10.0]).collect();
    (
        PopularityMatrix::from_rows(8, 2, &rows).expect("entries in [0,1]"),
        LabelVector::from_one_based(&[1, 1, 1, 1, 2, 2, 2, 2], 2).expect("valid labels"),
    )
}

//! Monte Carlo harness: scenario grids, replications, and the results table.
//!
//! Every replication of a scenario draws one network from a seed derived from
//! `(master_seed, scenario, replication)`; all methods run on that network and
//! share its k-means seed, so TCSC, R-TCSC-1 and R-TCSC-2 rows of the same
//! replication are one trajectory.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::eval::misclustering_loss;
use crate::generate::{generate, PopularityMode, ScenarioConfig, SizeMode};
use crate::kmeans::KMeansConfig;
use crate::par;
use crate::refine::{refine_step, RefineConfig};
use crate::seed::derive_seed;
use crate::svcp::{select_k, SvcpConfig};
use crate::tcsc::{tcsc, TcscConfig};

/// Schema tag written as the first line of every results file.
pub const RESULTS_SCHEMA: &str = "# pabm-bench results v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Tcsc,
    RTcsc1,
    RTcsc2,
    /// Number-of-communities selection; loss is 1 when the wrong K is chosen.
    Svcp,
}

impl Method {
    fn refine_steps(self) -> usize {
        match self {
            Method::RTcsc1 => 1,
            Method::RTcsc2 => 2,
            Method::Tcsc | Method::Svcp => 0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Tcsc => "tcsc",
            Method::RTcsc1 => "r-tcsc-1",
            Method::RTcsc2 => "r-tcsc-2",
            Method::Svcp => "svcp",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tcsc" => Ok(Method::Tcsc),
            "r-tcsc-1" => Ok(Method::RTcsc1),
            "r-tcsc-2" => Ok(Method::RTcsc2),
            "svcp" => Ok(Method::Svcp),
            other => Err(Error::param(format!(
                "unknown method `{other}` (expected tcsc, r-tcsc-1, r-tcsc-2 or svcp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub k: usize,
    pub size_mode: SizeMode,
    pub popularity: PopularityMode,
    pub rho: f64,
}

impl Scenario {
    pub fn config(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            n: self.n,
            k: self.k,
            size_mode: self.size_mode,
            popularity: self.popularity,
            rho: self.rho,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub size_modes: Vec<SizeMode>,
    pub popularity: Vec<PopularityMode>,
    pub rho: f64,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub master_seed: u64,
    /// Largest candidate for [`Method::Svcp`].
    pub k_max: usize,
    pub leave_one_out: bool,
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        Self {
            ns: vec![128, 256, 512, 1024],
            ks: vec![2],
            size_modes: vec![SizeMode::Balanced],
            popularity: vec![PopularityMode::ASSORTATIVE],
            rho: 1.0,
            methods: vec![Method::Tcsc, Method::RTcsc1, Method::RTcsc2],
            replications: 20,
            master_seed: 0,
            k_max: 8,
            leave_one_out: false,
        }
    }
}

impl ExperimentManifest {
    /// Keys: `n`, `k`, `size_mode`, `methods` (comma lists), `popularity`
    /// (`;` list), `replications`, `master_seed`, `k_max`, `rho`,
    /// `leave_one_out`. Missing keys take the [`Default`] values.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let known = [
            "n",
            "k",
            "size_mode",
            "popularity",
            "rho",
            "methods",
            "replications",
            "master_seed",
            "k_max",
            "leave_one_out",
        ];
        if let Some(key) = kv.keys().find(|key| !known.contains(key)) {
            return Err(Error::Config {
                key: key.into(),
                msg: "unknown key".into(),
            });
        }
        let d = Self::default();
        let m = Self {
            ns: kv.parse_list("n", ',')?.unwrap_or(d.ns),
            ks: kv.parse_list("k", ',')?.unwrap_or(d.ks),
            size_modes: kv.parse_list("size_mode", ',')?.unwrap_or(d.size_modes),
            popularity: kv.parse_list("popularity", ';')?.unwrap_or(d.popularity),
            rho: kv.parse_or("rho", d.rho)?,
            methods: kv.parse_list("methods", ',')?.unwrap_or(d.methods),
            replications: kv.parse_or("replications", d.replications)?,
            master_seed: kv.parse_or("master_seed", d.master_seed)?,
            k_max: kv.parse_or("k_max", d.k_max)?,
            leave_one_out: kv.parse_or("leave_one_out", d.leave_one_out)?,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::param("replications must be at least 1"));
        }
        if self.scenarios().is_empty() || self.methods.is_empty() {
            return Err(Error::param("experiment grid is empty"));
        }
        for s in self.scenarios() {
            s.config(0).validate()?;
        }
        if self.methods.contains(&Method::Svcp) && self.k_max < 2 {
            return Err(Error::param("k_max must be at least 2"));
        }
        Ok(())
    }

    /// Cartesian product in `n`, `k`, size mode, popularity order.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &n in &self.ns {
            for &k in &self.ks {
                for &size_mode in &self.size_modes {
                    for &popularity in &self.popularity {
                        out.push(Scenario {
                            n,
                            k,
                            size_mode,
                            popularity,
                            rho: self.rho,
                        });
                    }
                }
            }
        }
        out
    }
}

impl FromStr for ExperimentManifest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(s)?)
    }
}

/// Seed of replication `rep` of scenario `scenario`.
pub fn replication_seed(master_seed: u64, scenario: usize, rep: usize) -> u64 {
    derive_seed(master_seed, &[scenario as u64, rep as u64])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: usize,
    pub method: Method,
    pub replication: usize,
    pub seed: u64,
    /// NaN when the replication failed.
    pub loss: f64,
    pub runtime_ms: f64,
    pub chosen_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: usize,
    pub method: Method,
    pub replications: usize,
    pub failed: usize,
    /// Over the non-failed replications.
    pub mean_loss: f64,
    pub sd_loss: f64,
    pub mean_runtime_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BenchResults {
    pub scenarios: Vec<Scenario>,
    pub rows: Vec<ResultRow>,
    pub summaries: Vec<SummaryRow>,
}

impl BenchResults {
    pub fn summary(&self, scenario: usize, method: Method) -> Option<&SummaryRow> {
        self.summaries.iter().find(|s| s.scenario == scenario && s.method == method)
    }

    pub fn rows_for(&self, scenario: usize, method: Method) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.scenario == scenario && r.method == method)
    }

    /// Writes the schema line, a header, all data rows, then summary rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{RESULTS_SCHEMA}")?;
        let mut csv = csv::Writer::from_writer(w);
        let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        csv.write_record([
            "kind",
            "scenario",
            "n",
            "k",
            "size_mode",
            "popularity",
            "method",
            "replication",
            "seed",
            "loss",
            "loss_sd",
            "failed",
            "runtime_ms",
            "chosen_k",
        ])
        .map_err(to_io)?;
        let scenario_fields = |id: usize| {
            let s = &self.scenarios[id];
            [
                id.to_string(),
                s.n.to_string(),
                s.k.to_string(),
                s.size_mode.to_string(),
                s.popularity.to_string(),
            ]
        };
        for r in &self.rows {
            let mut rec: Vec<String> = vec!["data".into()];
            rec.extend(scenario_fields(r.scenario));
            rec.extend([
                r.method.to_string(),
                r.replication.to_string(),
                r.seed.to_string(),
                format!("{}", r.loss),
                String::new(),
                u8::from(r.loss.is_nan()).to_string(),
                format!("{:.3}", r.runtime_ms),
                r.chosen_k.map(|k| k.to_string()).unwrap_or_default(),
            ]);
            csv.write_record(&rec).map_err(to_io)?;
        }
        for s in &self.summaries {
            let mut rec: Vec<String> = vec!["summary".into()];
            rec.extend(scenario_fields(s.scenario));
            rec.extend([
                s.method.to_string(),
                s.replications.to_string(),
                String::new(),
                format!("{}", s.mean_loss),
                format!("{}", s.sd_loss),
                s.failed.to_string(),
                format!("{:.3}", s.mean_runtime_ms),
                String::new(),
            ]);
            csv.write_record(&rec).map_err(to_io)?;
        }
        csv.flush()?;
        Ok(())
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs every requested method on one replication.
fn run_replication(manifest: &ExperimentManifest, scenario_id: usize, scenario: &Scenario, rep: usize) -> Vec<ResultRow> {
    let seed = replication_seed(manifest.master_seed, scenario_id, rep);
    let row = |method: Method, loss: f64, runtime_ms: f64, chosen_k: Option<usize>| ResultRow {
        scenario: scenario_id,
        method,
        replication: rep,
        seed,
        loss,
        runtime_ms,
        chosen_k,
    };
    let inst = match generate(&scenario.config(seed)) {
        Ok(inst) => inst,
        Err(e) => {
            log::warn!("scenario {scenario_id} replication {rep}: generation failed: {e}");
            return manifest.methods.iter().map(|&m| row(m, f64::NAN, 0.0, None)).collect();
        }
    };
    let a = inst.adjacency.matrix();
    let kcfg = KMeansConfig::with_seed(derive_seed(seed, &[1]));

    // Trajectory c0, c1, c2 with cumulative timings, computed as far as needed.
    let need_steps = manifest.methods.iter().map(|m| m.refine_steps()).max().unwrap_or(0);
    let need_tcsc = manifest.methods.iter().any(|&m| m != Method::Svcp);
    let mut trajectory: Vec<(Result<f64>, f64)> = Vec::new();
    if need_tcsc {
        let t = Instant::now();
        let init = tcsc(
            a,
            scenario.k,
            &TcscConfig {
                threshold: None,
                kmeans: kcfg,
            },
        );
        let mut elapsed = elapsed_ms(t);
        let mut current = init.map(|r| r.labels);
        trajectory.push((loss_of(&inst.labels, &current), elapsed));
        for step in 1..=need_steps {
            let t = Instant::now();
            current = match current {
                Ok(c) => refine_step(a, &c, manifest.leave_one_out).map_err(|e| {
                    log::warn!("scenario {scenario_id} replication {rep}: refinement step {step}: {e}");
                    e
                }),
                Err(e) => Err(e),
            };
            elapsed += elapsed_ms(t);
            trajectory.push((loss_of(&inst.labels, &current), elapsed));
        }
    }

    manifest
        .methods
        .iter()
        .map(|&m| match m {
            Method::Svcp => {
                let t = Instant::now();
                let res = select_k(
                    a,
                    &SvcpConfig {
                        k_max: manifest.k_max,
                        window_d: 2,
                        kmeans: kcfg,
                    },
                );
                let ms = elapsed_ms(t);
                match res {
                    Ok((k, _)) => row(m, f64::from(u8::from(k != scenario.k)), ms, Some(k)),
                    Err(e) => {
                        log::warn!("scenario {scenario_id} replication {rep}: svcp failed: {e}");
                        row(m, f64::NAN, ms, None)
                    }
                }
            }
            _ => {
                let (loss, ms) = &trajectory[m.refine_steps()];
                row(m, *loss.as_ref().unwrap_or(&f64::NAN), *ms, None)
            }
        })
        .collect()
}

fn loss_of(truth: &crate::graph::LabelVector, est: &Result<crate::graph::LabelVector>) -> Result<f64> {
    match est {
        Ok(c) => Ok(misclustering_loss(truth, c)?.loss),
        Err(_) => Ok(f64::NAN),
    }
}

fn summarize(scenario: usize, method: Method, rows: &[&ResultRow]) -> SummaryRow {
    let ok: Vec<f64> = rows.iter().map(|r| r.loss).filter(|l| !l.is_nan()).collect();
    let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
    let sd = if ok.len() < 2 {
        0.0
    } else {
        (ok.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
    };
    SummaryRow {
        scenario,
        method,
        replications: rows.len(),
        failed: rows.len() - ok.len(),
        mean_loss: mean,
        sd_loss: sd,
        mean_runtime_ms: rows.iter().map(|r| r.runtime_ms).sum::<f64>() / rows.len().max(1) as f64,
    }
}

/// Runs the whole grid. Replications run on the worker pool; rows come back in
/// `(scenario, method, replication)` order regardless of completion order.
pub fn run_bench(manifest: &ExperimentManifest) -> Result<BenchResults> {
    manifest.validate()?;
    let scenarios = manifest.scenarios();
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..manifest.replications).map(move |r| (s, r)))
        .collect();
    let per_job = par::map_slice(&jobs, |&(s, r)| run_replication(manifest, s, &scenarios[s], r));

    let mut rows = Vec::with_capacity(jobs.len() * manifest.methods.len());
    let mut summaries = Vec::new();
    for s in 0..scenarios.len() {
        for (mi, &method) in manifest.methods.iter().enumerate() {
            let start = rows.len();
            for r in 0..manifest.replications {
                rows.push(per_job[s * manifest.replications + r][mi].clone());
            }
            let cell: Vec<&ResultRow> = rows[start..].iter().collect();
            summaries.push(summarize(s, method, &cell));
        }
    }
    Ok(BenchResults {
        scenarios,
        rows,
        summaries,
    })
}

/// Refinement settings implied by a method name.
pub fn refine_config_for(method: Method, leave_one_out: bool) -> Option<RefineConfig> {
    match method.refine_steps() {
        0 => None,
        steps => Some(RefineConfig {
            steps,
            leave_one_out,
            min_cluster_guard: 1,
        }),
    }
}

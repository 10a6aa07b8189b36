//! `pabm` command-line front end: generate, detect, select-k, eval, bench.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use pabm::config::KeyValues;
use pabm::eval::misclustering_loss;
use pabm::experiment::{run_bench, ExperimentManifest};
use pabm::generate::{generate, ScenarioConfig};
use pabm::graph::{load_edge_list, load_labels, write_labels};
use pabm::kmeans::KMeansConfig;
use pabm::refine::{refine_from, score_matrix, RefineConfig};
use pabm::svcp::{select_k, SvcpConfig};
use pabm::tcsc::{tcsc, TcscConfig};

#[derive(Parser)]
#[command(name = "pabm", version, about = "Community detection under the popularity adjusted block model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph from a scenario config; writes edges.txt, labels.txt, lambda.csv.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate community labels from an edge list.
    Detect {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = DetectMethod::RTcsc2)]
        method: DetectMethod,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed similarity threshold instead of the automatic choice.
        #[arg(long)]
        threshold: Option<f64>,
        /// Leave-one-out refinement scores.
        #[arg(long)]
        loo: bool,
        /// True labels; the loss is printed to stderr.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Labels file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the refinement score matrix of the final labels.
        #[arg(long)]
        scores_out: Option<PathBuf>,
    },
    /// Estimate the number of communities; prints K, optionally writes the trace.
    SelectK {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trace CSV `k,f_value,ratio`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Misclustering loss between two label files.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
    },
    /// Run a Monte Carlo experiment grid; writes the results CSV.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `replications`.
        #[arg(long)]
        reps: Option<usize>,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Results CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct GraphArgs {
    /// Whitespace-separated 1-based edge list.
    #[arg(long)]
    edges: PathBuf,
    /// Number of nodes.
    #[arg(long)]
    n: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectMethod {
    #[value(name = "tcsc")]
    Tcsc,
    #[value(name = "r-tcsc-1")]
    RTcsc1,
    #[value(name = "r-tcsc-2")]
    RTcsc2,
}

impl DetectMethod {
    fn refine_steps(self) -> usize {
        match self {
            DetectMethod::Tcsc => 0,
            DetectMethod::RTcsc1 => 1,
            DetectMethod::RTcsc2 => 2,
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out } => cmd_generate(&config, &out),
        Command::Detect {
            graph,
            k,
            method,
            seed,
            threshold,
            loo,
            truth,
            out,
            scores_out,
        } => {
            let a = load_edge_list(&graph.edges, graph.n)?;
            let cfg = TcscConfig {
                threshold,
                kmeans: KMeansConfig::with_seed(seed),
            };
            let start = Instant::now();
            let init = tcsc(a.matrix(), k, &cfg)?;
            info!("threshold {} (fallback: {})", init.threshold.value, init.threshold.fallback);
            let labels = match method.refine_steps() {
                0 => init.labels,
                steps => {
                    let rcfg = RefineConfig {
                        steps,
                        leave_one_out: loo,
                        ..RefineConfig::default()
                    };
                    refine_from(a.matrix(), init.labels, &rcfg)?.last().clone()
                }
            };
            info!("detect took {:.1} ms", start.elapsed().as_secs_f64() * 1e3);
            let truth = truth.map(|p| load_labels(&p, None)).transpose()?;
            with_output(out.as_deref(), |w| Ok(write_labels(&labels, w)?))?;
            if let Some(path) = scores_out {
                let scores = score_matrix(a.matrix(), &labels, loo)?;
                write_file(&path, |w| Ok(scores.write_csv(&labels, truth.as_ref(), w)?))?;
            }
            if let Some(t) = truth {
                eprintln!("loss {}", misclustering_loss(&t, &labels)?.loss);
            }
            Ok(())
        }
        Command::SelectK { graph, k_max, seed, out } => {
            let a = load_edge_list(&graph.edges, graph.n)?;
            let (k, trace) = select_k(a.matrix(), &SvcpConfig::new(k_max, seed))?;
            if let Some(path) = out {
                write_file(&path, |w| Ok(trace.write_csv(w)?))?;
            }
            println!("{k}");
            Ok(())
        }
        Command::Eval { truth, est } => {
            let t = load_labels(&truth, None)?;
            let e = load_labels(&est, None)?;
            println!("{}", misclustering_loss(&t, &e)?.loss);
            Ok(())
        }
        Command::Bench { config, reps, seed, out } => {
            let mut manifest = ExperimentManifest::from_key_values(&read_config(&config)?)?;
            if let Some(r) = reps {
                manifest.replications = r;
            }
            if let Some(s) = seed {
                manifest.master_seed = s;
            }
            manifest.validate()?;
            let results = run_bench(&manifest)?;
            with_output(out.as_deref(), |w| Ok(results.write_csv(w)?))
        }
    }
}

fn cmd_generate(config: &Path, out: &Path) -> Result<()> {
    let cfg = ScenarioConfig::from_key_values(&read_config(config)?)
        .with_context(|| format!("invalid config {}", config.display()))?;
    let inst = generate(&cfg)?;
    let files = inst.write_to_dir(out)?;
    info!("wrote {}, {}, {}", files.edges.display(), files.labels.display(), files.lambda.display());
    Ok(())
}

fn read_config(path: &Path) -> Result<KeyValues> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    KeyValues::parse(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => write_file(p, f),
        None => {
            let mut lock = io::stdout().lock();
            f(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if a required criterion fails.
//!
//! Runs without the libtest harness so the report is always shown.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng as _;

use pabm::embed::{cosine_similarity, embed, signed_cosine_similarity};
use pabm::eval::{loss_exhaustive, loss_hungarian};
use pabm::experiment::{run_bench, BenchResults, ExperimentManifest, Method};
use pabm::generate::{build_theta, example_orthogonal_pair, example_raw_cosine_failure, generate, ScenarioConfig};
use pabm::graph::{save_labels, LabelVector};
use pabm::kmeans::KMeansConfig;
use pabm::refine::{r_tcsc, RefineConfig};
use pabm::seed::{derive_seed, rng_from_seed};
use pabm::svcp::{block_second_singular, select_k, SvcpConfig};

const MASTER: u64 = 7_031_995;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn run(&mut self, id: &str, name: &str, limit: Duration, required: bool, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = out.pass && in_time;
        let tag = match (pass, required) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (optional)",
        };
        let time_note = if in_time { String::new() } else { format!(" [over the {limit:?} limit]") };
        println!("{tag} criterion {id}: {name} -- {} ({elapsed:.2?}){time_note}", out.detail);
        if !pass && required {
            self.failed.push(id.to_string());
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn losses(res: &BenchResults, scenario: usize, method: Method) -> Vec<f64> {
    res.rows_for(scenario, method).map(|r| r.loss).collect()
}

fn criterion_1() -> Outcome {
    let (lambda, c) = example_orthogonal_pair();
    let theta = build_theta(&lambda, &c).unwrap();
    let e = embed(theta.matrix(), 2).unwrap();
    let gram = &e.xi * e.xi.transpose();
    let expected = DMatrix::from_fn(8, 8, |i, j| if i / 2 == j / 2 { 0.5 } else { 0.0 });
    let err = (&gram - &expected).amax();
    check(err <= 1e-8 && gram[(0, 2)].abs() <= 1e-8, format!("max |G - G*| = {err:.1e}, xi_1.xi_3 = {:.1e}", gram[(0, 2)]))
}

fn criterion_2() -> Outcome {
    let table = [
        [1.76, 1.28, 1.28, 0.93, 3.43, 3.37, 3.51, 1.99],
        [3.43, 3.45, 3.45, 3.23, 0.65, 0.22, 0.31, 2.81],
    ];
    let (lambda, c) = example_raw_cosine_failure();
    let theta = build_theta(&lambda, &c).unwrap();
    let tau = signed_cosine_similarity(&embed(theta.matrix(), 2).unwrap()).tau;
    let members = c.members();
    let mut mismatches = Vec::new();
    for (k, row) in table.iter().enumerate() {
        let centre: Vec<f64> = (0..8).map(|j| members[k].iter().map(|&i| tau[(i, j)]).sum::<f64>() / 4.0).collect();
        for (i, &want) in row.iter().enumerate() {
            let d: f64 = (0..8).map(|j| (tau[(i, j)] - centre[j]).powi(2)).sum();
            if format!("{d:.2}") != format!("{want:.2}") {
                mismatches.push(format!("|tau_{} - bar_{}|^2 = {d:.4} vs {want}", i + 1, k + 1));
            }
        }
    }
    check(mismatches.is_empty(), if mismatches.is_empty() { "16/16 distances match".into() } else { mismatches.join("; ") })
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for r in 0..50u64 {
        let k = 2 + (r % 2) as usize;
        let inst = generate(&ScenarioConfig::balanced(40, k, derive_seed(MASTER, &[3, r]))).unwrap();
        let tau = cosine_similarity(&embed(inst.theta.matrix(), k).unwrap()).tau;
        for i in 0..40 {
            for j in 0..40 {
                if inst.labels.get(i) != inst.labels.get(j) {
                    worst = worst.max(tau[(i, j)]);
                }
            }
        }
    }
    check(worst <= 1e-8, format!("largest cross-community tau {worst:.1e} over 50 instances"))
}

/// Splits each true community into consecutive chunks so the labeling has
/// `k_tilde` nonempty communities, each inside one true community.
fn refinement_of(c: &LabelVector, k_tilde: usize) -> LabelVector {
    let members = c.members();
    let k = c.k();
    let mut labels = vec![0; c.len()];
    let mut next = 0;
    for (g, m) in members.iter().enumerate() {
        let parts = k_tilde / k + usize::from(g < k_tilde % k);
        let parts = parts.min(m.len()).max(1);
        for (idx, &i) in m.iter().enumerate() {
            labels[i] = next + idx * parts / m.len();
        }
        next += parts;
    }
    LabelVector::new(labels, next).unwrap()
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    for r in 0..50u64 {
        let k = 2 + (r % 2) as usize;
        let inst = generate(&ScenarioConfig::balanced(40, k, derive_seed(MASTER, &[4, r]))).unwrap();
        let t = inst.theta.matrix();
        let sigma1 = t.clone().singular_values().max();
        worst = worst.max(block_second_singular(t, &inst.labels).unwrap() / sigma1);
        for k_tilde in (k + 1)..=(k + 3) {
            let finer = refinement_of(&inst.labels, k_tilde);
            worst = worst.max(block_second_singular(t, &finer).unwrap() / sigma1);
        }
    }
    check(worst <= 1e-8, format!("largest f / sigma_1 {worst:.1e} (true and refined labelings)"))
}

fn criterion_5() -> Outcome {
    let mut rng = rng_from_seed(derive_seed(MASTER, &[5]));
    let mut disagreements = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=6);
        let n = rng.random_range(1..=60);
        let mut draw = || LabelVector::new((0..n).map(|_| rng.random_range(0..k)).collect(), k).unwrap();
        let (t, e) = (draw(), draw());
        if loss_hungarian(&t, &e).unwrap().loss != loss_exhaustive(&t, &e).unwrap().loss {
            disagreements += 1;
        }
    }
    check(disagreements == 0, format!("{disagreements} disagreements in 1000 pairs"))
}

fn size_sweep_manifest() -> ExperimentManifest {
    ExperimentManifest {
        ns: vec![128, 256, 512, 1024],
        ks: vec![2],
        methods: vec![Method::Tcsc, Method::RTcsc1, Method::RTcsc2],
        replications: 20,
        master_seed: derive_seed(MASTER, &[6]),
        ..ExperimentManifest::default()
    }
}

fn criterion_6(res: &BenchResults) -> Outcome {
    let tcsc: Vec<f64> = (0..4).map(|s| mean(&losses(res, s, Method::Tcsc))).collect();
    let r2: Vec<f64> = (0..4).map(|s| mean(&losses(res, s, Method::RTcsc2))).collect();
    let monotone = tcsc.windows(2).all(|w| w[1] < w[0]);
    let strong = r2[3] < 0.005;
    let dominated = r2.iter().zip(&tcsc).all(|(a, b)| a <= b);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    check(
        monotone && strong && dominated,
        format!(
            "TCSC [{}] decreasing: {monotone}; R-TCSC-2 [{}], < 0.005 at 1024: {strong}, <= TCSC everywhere: {dominated}",
            fmt(&tcsc),
            fmt(&r2)
        ),
    )
}

fn criterion_7(sweep: &BenchResults) -> Outcome {
    let manifest = ExperimentManifest {
        ns: vec![256],
        ks: vec![2],
        methods: vec![Method::Tcsc, Method::RTcsc1, Method::RTcsc2],
        replications: 50,
        master_seed: derive_seed(MASTER, &[7]),
        ..ExperimentManifest::default()
    };
    let res = run_bench(&manifest).unwrap();
    let (l0, l1, l2) = (losses(&res, 0, Method::Tcsc), losses(&res, 0, Method::RTcsc1), losses(&res, 0, Method::RTcsc2));
    let improved = l0.iter().zip(&l1).filter(|(a, b)| b <= a).count() as f64 / l0.len() as f64;
    let (m1, m2) = (mean(&l1), mean(&l2));
    let big = (mean(&losses(sweep, 3, Method::RTcsc2)) - mean(&losses(sweep, 3, Method::RTcsc1))).abs();
    check(
        improved >= 0.9 && m2 <= m1 && big < 0.005,
        format!("n=256: l1 <= l0 in {:.0}% of reps, mean l1 {m1:.4}, mean l2 {m2:.4}; n=1024: |l2 - l1| = {big:.4}", improved * 100.0),
    )
}

fn svcp_accuracy(ks: &[usize], tag: u64) -> Vec<(usize, f64)> {
    let manifest = ExperimentManifest {
        ns: vec![512],
        ks: ks.to_vec(),
        methods: vec![Method::Svcp],
        replications: 20,
        master_seed: derive_seed(MASTER, &[tag]),
        k_max: 8,
        ..ExperimentManifest::default()
    };
    let res = run_bench(&manifest).unwrap();
    ks.iter().enumerate().map(|(s, &k)| (k, 1.0 - mean(&losses(&res, s, Method::Svcp)))).collect()
}

fn criterion_8() -> Outcome {
    let acc = svcp_accuracy(&[2, 3, 4, 5], 8);
    let pass = acc.iter().all(|&(k, a)| a >= if k == 3 || k == 4 { 0.9 } else { 0.8 });
    check(pass, acc.iter().map(|(k, a)| format!("K={k}: {a:.2}")).collect::<Vec<_>>().join(", "))
}

fn criterion_8_extended() -> Outcome {
    let acc = svcp_accuracy(&[6, 7, 8], 88);
    let pass = acc.iter().all(|&(_, a)| a >= 0.7);
    check(pass, acc.iter().map(|(k, a)| format!("K={k}: {a:.2}")).collect::<Vec<_>>().join(", "))
}

/// Runs the library behind each command twice with the same seeds and
/// compares the bytes written.
fn criterion_9() -> Outcome {
    fn outputs() -> Vec<(String, Vec<u8>)> {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::balanced(96, 2, 11);
        let inst = generate(&cfg).unwrap();
        let files = inst.write_to_dir(dir.path()).unwrap();
        let mut out: Vec<(String, Vec<u8>)> = [files.edges, files.labels, files.lambda]
            .iter()
            .map(|p| (p.display().to_string().replace(&dir.path().display().to_string(), ""), std::fs::read(p).unwrap()))
            .collect();

        let est = r_tcsc(inst.adjacency.matrix(), 2, &RefineConfig::default(), &KMeansConfig::with_seed(3)).unwrap();
        let path = dir.path().join("est.txt");
        save_labels(&est, &path).unwrap();
        out.push(("detect".into(), std::fs::read(&path).unwrap()));

        let (_, trace) = select_k(inst.adjacency.matrix(), &SvcpConfig::new(3, 3)).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        out.push(("select-k".into(), buf));

        let manifest = ExperimentManifest {
            ns: vec![64],
            methods: vec![Method::Tcsc, Method::RTcsc2, Method::Svcp],
            replications: 2,
            k_max: 3,
            ..ExperimentManifest::default()
        };
        let mut buf = Vec::new();
        run_bench(&manifest).unwrap().write_csv(&mut buf).unwrap();
        out.push(("bench".into(), strip_column(&String::from_utf8(buf).unwrap(), "runtime_ms").into_bytes()));
        out
    }
    let (a, b) = (outputs(), outputs());
    let differing: Vec<&str> = a.iter().zip(&b).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    check(differing.is_empty(), format!("{} outputs compared, differing: {differing:?}", a.len()))
}

/// Drops a named column from a results CSV (schema comment line first).
fn strip_column(text: &str, name: &str) -> String {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == name).unwrap();
    let keep = |r: &csv::StringRecord| r.iter().enumerate().filter(|&(i, _)| i != col).map(|(_, v)| v.to_string()).collect::<Vec<_>>();
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(keep(&headers)).unwrap();
    for record in reader.records() {
        writer.write_record(keep(&record.unwrap())).unwrap();
    }
    String::from_utf8(writer.into_inner().unwrap()).unwrap()
}

fn main() {
    let mut report = Report { failed: Vec::new() };
    let secs = Duration::from_secs;
    report.run("1", "orthogonal-pair Gram matrix", secs(1), true, criterion_1);
    report.run("2", "distances to community centres", secs(1), true, criterion_2);
    report.run("3", "cross-community cosines vanish", secs(30), true, criterion_3);
    report.run("4", "rank-one diagonal blocks", secs(30), true, criterion_4);
    report.run("5", "assignment equals exhaustive loss", secs(10), true, criterion_5);

    let mut sweep = None;
    report.run("6", "loss versus n", secs(600), true, || {
        let res = run_bench(&size_sweep_manifest()).unwrap();
        let out = criterion_6(&res);
        sweep = Some(res);
        out
    });
    let sweep = sweep.expect("criterion 6 ran");
    report.run("7", "refinement monotonicity", secs(600), true, || criterion_7(&sweep));
    report.run("8", "number of communities", secs(1200), true, criterion_8);
    report.run("8+", "number of communities, K in 6..=8", secs(1200), false, criterion_8_extended);
    report.run("9", "determinism", secs(120), true, criterion_9);

    if report.failed.is_empty() {
        println!("acceptance: all required criteria passed");
    } else {
        println!("acceptance: failed criteria {:?}", report.failed);
        std::process::exit(1);
    }
}

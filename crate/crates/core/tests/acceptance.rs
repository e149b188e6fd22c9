//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any fails.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use bugtriage::classifier::{train_nb_on, NBModel};
use bugtriage::corpus::{read_jsonl, write_jsonl};
use bugtriage::eval::{
    accuracy_at_n, accuracy_curve, run_on, validate_report_json, validate_sweep_json, ExperimentConfig,
    ExperimentData,
};
use bugtriage::semisupervised::{e_step, gamma, gamma_weights, train_semisupervised, EMConfig};
use bugtriage::synthetic::{generate, MixtureConfig};
use common::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("lambda=0 degenerates to NB", criterion_1),
        ("WRL with list size 1 equals NBEM", criterion_2),
        ("Gamma weight table", criterion_3),
        ("NB matches probability-space oracle", criterion_4),
        ("accuracy@n monotone and hand-counted", criterion_5),
        ("semi-supervised lift on synthetic mixtures", criterion_6),
        ("deterministic outputs", criterion_7),
        ("eval and sweep report shapes", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} [{secs:.2}s] {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} [{secs:.2}s] {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn small_mixture(seed: u64) -> ExperimentData {
    let m = generate(&MixtureConfig {
        labeled: 30,
        unlabeled: 300,
        test: 150,
        seed,
        ..MixtureConfig::default()
    });
    mixture_data(m)
}

fn mixture_data(m: bugtriage::synthetic::MixtureCorpus) -> ExperimentData {
    ExperimentData {
        vocabulary: m.vocabulary,
        developers: m.developers,
        labeled: m.labeled,
        unlabeled: m.unlabeled,
        unlabeled_truth: m.unlabeled_truth.into_iter().map(Some).collect(),
        test: m.test,
    }
}

fn max_posterior_gap(a: &NBModel, b: &NBModel, reports: &[bugtriage::TokenizedReport]) -> f64 {
    reports
        .iter()
        .flat_map(|r| {
            let (pa, pb) = (a.posterior(r).probs, b.posterior(r).probs);
            pa.into_iter().zip(pb).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

fn max_stored_gap(a: &NBModel, b: &NBModel) -> f64 {
    assert_eq!(a.stored_values().count(), b.stored_values().count());
    a.stored_values()
        .zip(b.stored_values())
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

/// Copy of the bundled corpus in which only the first `keep` reports of
/// each developer keep their label.
fn partly_labeled_corpus(dir: &Path, keep: usize) -> String {
    let corpus = read_jsonl(std::io::BufReader::new(std::fs::File::open(fixture_corpus()).unwrap())).unwrap();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = corpus.clone();
    for r in &mut out.reports {
        let dev = r.developer.clone().unwrap();
        let n = seen.entry(dev).or_default();
        *n += 1;
        if *n > keep {
            r.developer = None;
        }
    }
    let path = dir.join("partial.jsonl");
    write_jsonl(&out, std::fs::File::create(&path).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

/// (report id, developer) -> probability from `predict` output.
fn parse_predictions(stdout: &[u8]) -> HashMap<(u64, String), f64> {
    String::from_utf8_lossy(stdout)
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            ((f[0].parse().unwrap(), f[2].to_string()), f[3].parse().unwrap())
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let data = small_mixture(seed);
        let nb = train_nb_on(&data.vocabulary, &data.developers, &data.labeled, 1.0).unwrap();
        for list_size in [1, 5] {
            let cfg = EMConfig {
                lambda: 0.0,
                list_size,
                ..EMConfig::default()
            };
            let (em, _) = train_semisupervised(&data.training(), &cfg).unwrap();
            worst = worst.max(max_posterior_gap(&nb, &em, &data.test));
            ensure!(
                accuracy_curve(&nb, &data.test, 5).unwrap() == accuracy_curve(&em, &data.test, 5).unwrap(),
                "seed {seed}: accuracy tables differ"
            );
        }
    }
    ensure!(worst < 1e-12, "library posterior gap {worst:e}");

    let dir = tempfile::tempdir().unwrap();
    let d = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let corpus = partly_labeled_corpus(dir.path(), 10);
    run_ok(&["preprocess", "--corpus", &corpus, "--output", &d("data.json")]);
    run_ok(&["train", "--dataset", &d("data.json"), "--method", "nb", "--output", &d("nb.json")]);
    run_ok(&[
        "train", "--dataset", &d("data.json"), "--method", "nbem", "--lambda", "0", "--output", &d("em.json"),
    ]);
    let predict = |model: &str| {
        parse_predictions(&run_ok(&["predict", "--model", model, "--dataset", &d("data.json"), "--top", "5"]).stdout)
    };
    let (p_nb, p_em) = (predict(&d("nb.json")), predict(&d("em.json")));
    ensure!(p_nb.len() == p_em.len() && !p_nb.is_empty(), "prediction sets differ");
    let mut cli_worst: f64 = 0.0;
    for (k, v) in &p_nb {
        let w = p_em.get(k).ok_or_else(|| format!("missing prediction {k:?}"))?;
        cli_worst = cli_worst.max((v - w).abs());
    }
    ensure!(cli_worst < 1e-12, "CLI posterior gap {cli_worst:e}");

    let fixture = fixture_corpus();
    run_ok(&["eval", "--corpus", fixture.to_str().unwrap(), "--lambda", "0", "--output", &d("ev")]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d("ev.json")).unwrap()).unwrap();
    let rows = report["methods"].as_array().unwrap();
    ensure!(
        rows.iter().all(|r| r["accuracy"] == rows[0]["accuracy"]),
        "eval accuracy rows differ at lambda 0"
    );
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("library gap {worst:.1e}, CLI gap {cli_worst:.1e}, eval rows identical"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    for seed in 0..3 {
        let data = small_mixture(100 + seed);
        let probe = train_nb_on(&data.vocabulary, &data.developers, &data.labeled, 1.0).unwrap();
        let lists = e_step(&probe, &data.unlabeled, 1);
        ensure!(
            lists.lists.iter().all(|l| l.len() == 1 && l[0].1 == 1.0),
            "list size 1 is not a hard label"
        );
    }

    let dir = tempfile::tempdir().unwrap();
    let d = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let corpus = partly_labeled_corpus(dir.path(), 10);
    run_ok(&["preprocess", "--corpus", &corpus, "--output", &d("data.json")]);
    let mut cli_worst: f64 = 0.0;
    for lambda in ["0.3", "1"] {
        run_ok(&[
            "train", "--dataset", &d("data.json"), "--method", "nbem", "--lambda", lambda, "--output", &d("a.json"),
        ]);
        run_ok(&[
            "train", "--dataset", &d("data.json"), "--method", "nbem-wrl", "--list-size", "1", "--lambda", lambda,
            "--output", &d("b.json"),
        ]);
        let a = NBModel::load(Path::new(&d("a.json"))).unwrap();
        let b = NBModel::load(Path::new(&d("b.json"))).unwrap();
        ensure!(a.provenance.iterations == b.provenance.iterations, "iteration counts differ");
        cli_worst = cli_worst.max(max_stored_gap(&a, &b));
    }
    ensure!(cli_worst < 1e-12, "stored value gap {cli_worst:e}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("hard labels at n = 1; max stored-value gap {cli_worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for n in 1..=16usize {
        let denom: BigInt = (BigInt::one() << n) - BigInt::one();
        let mut exact_sum = BigRational::zero();
        let weights = gamma_weights(n);
        ensure!(weights.len() == n, "gamma_weights({n}) has {} entries", weights.len());
        for q in 1..=n {
            let exact = BigRational::new(BigInt::one() << (n - q), denom.clone());
            exact_sum += &exact;
            let got = gamma(n, q).map_err(|e| e.to_string())?;
            let got_exact = BigRational::from_float(got).ok_or("non-finite gamma")?;
            let err = (got_exact - &exact).abs();
            let err = num_traits::ToPrimitive::to_f64(&err).unwrap();
            worst = worst.max(err);
            ensure!(weights[q - 1] == got, "gamma_weights({n})[{q}] disagrees with gamma");
        }
        ensure!(exact_sum.is_one(), "closed form does not sum to 1 at n={n}");
        worst_sum = worst_sum.max((weights.iter().sum::<f64>() - 1.0).abs());
    }
    ensure!(worst <= 1e-15, "max |gamma - exact| = {worst:e}");
    ensure!(worst_sum <= 1e-12, "max |sum - 1| = {worst_sum:e}");
    ensure!(gamma(3, 0).is_err() && gamma(3, 4).is_err(), "out-of-range q accepted");
    Ok(format!("n <= 16: max error {worst:.1e}, max sum error {worst_sum:.1e}"))
}

fn check_fixture(f: &Fixture, alpha: u64, worst: &mut f64) -> Result<(), String> {
    let model = match train_nb_on(&vocab(f.n_words), &devs(f.n_devs), &f.train, alpha as f64) {
        Ok(m) => m,
        Err(e) => return Err(format!("training failed: {e}")),
    };
    for probe in &f.probes {
        let want = oracle_posterior(f.n_words, f.n_devs, &f.train, alpha, probe);
        let got = model.posterior(probe).probs;
        for (g, w) in got.iter().zip(&want) {
            let e = rel_err(*g, *w);
            if e > 1e-9 {
                return Err(format!("alpha {alpha}, fixture {f:?}, probe {probe:?}: got {got:?}, want {want:?}"));
            }
            *worst = worst.max(e);
        }
    }
    Ok(())
}

fn dense_vectors(n_words: usize, max: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..n_words {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=max).map(move |c| {
                    let mut v = v.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
    }
    out
}

/// Every labeling of every `n_reports`-report corpus over the given count
/// vectors.
fn exhaustive(n_devs: usize, n_words: usize, n_reports: usize, max: u32) -> Vec<Fixture> {
    let vectors = dense_vectors(n_words, max);
    let choices: Vec<(usize, usize)> =
        (0..n_devs).flat_map(|d| (0..vectors.len()).map(move |v| (d, v))).collect();
    let probes: Vec<_> = vectors.iter().enumerate().map(|(i, v)| report(500 + i as u64, None, v)).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n_reports];
    loop {
        let train = idx
            .iter()
            .enumerate()
            .map(|(i, &c)| report(i as u64 + 1, Some(choices[c].0), &vectors[choices[c].1]))
            .collect();
        out.push(Fixture { n_words, n_devs, train, probes: probes.clone() });
        let mut pos = 0;
        loop {
            if pos == n_reports {
                return out;
            }
            idx[pos] += 1;
            if idx[pos] < choices.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn criterion_4() -> Outcome {
    let mut fixtures = exhaustive(2, 2, 2, 2);
    fixtures.extend(exhaustive(3, 2, 3, 1));
    fixtures.extend(exhaustive(4, 1, 2, 3));
    let exhaustive_count = fixtures.len();
    fixtures.extend((0..100).map(random_fixture));
    let mut worst: f64 = 0.0;
    for f in &fixtures {
        for alpha in [0, 1] {
            check_fixture(f, alpha, &mut worst)?;
        }
    }
    Ok(format!(
        "{exhaustive_count} exhaustive + 100 random fixtures, max relative error {worst:.1e}"
    ))
}

fn check_monotone(model: &NBModel, test: &[bugtriage::TokenizedReport]) -> Result<(), String> {
    let n = model.developer_count();
    let curve = accuracy_curve(model, test, n).map_err(|e| e.to_string())?;
    ensure!(curve.windows(2).all(|w| w[0] <= w[1]), "curve not monotone: {curve:?}");
    ensure!(curve[n - 1] == 1.0, "accuracy@|D| = {}", curve[n - 1]);
    Ok(())
}

fn criterion_5() -> Outcome {
    let mut models = 0;
    for seed in 0..100 {
        let f = random_fixture(seed);
        for alpha in [0.0, 1.0] {
            let m = train_nb_on(&vocab(f.n_words), &devs(f.n_devs), &f.train, alpha).unwrap();
            check_monotone(&m, &f.train)?;
            models += 1;
        }
    }
    for seed in 0..3 {
        let data = small_mixture(200 + seed);
        for list_size in [1, 3, 5] {
            let cfg = EMConfig { lambda: 0.5, list_size, ..EMConfig::default() };
            let (m, _) = train_semisupervised(&data.training(), &cfg).unwrap();
            check_monotone(&m, &data.test)?;
            models += 1;
        }
    }

    // Priors 4:3:2:1 and one signature word per developer. The fourth test
    // report uses developer 0's word but belongs to developer 3, so exactly
    // three of four are right at n = 1.
    let mut train = Vec::new();
    for (dev, copies) in [(0, 4), (1, 3), (2, 2), (3, 1)] {
        for _ in 0..copies {
            let mut v = [0; 4];
            v[dev] = 1;
            train.push(report(train.len() as u64 + 1, Some(dev), &v));
        }
    }
    let model = train_nb_on(&vocab(4), &devs(4), &train, 1.0).unwrap();
    let test = [
        report(101, Some(0), &[1, 0, 0, 0]),
        report(102, Some(1), &[0, 1, 0, 0]),
        report(103, Some(2), &[0, 0, 1, 0]),
        report(104, Some(3), &[1, 0, 0, 0]),
    ];
    let acc1 = accuracy_at_n(&model, &test, 1).unwrap();
    ensure!(acc1 == 0.75, "hand-counted fixture gives {acc1}");
    check_monotone(&model, &test)?;
    Ok(format!("{models} models monotone with accuracy@|D| = 1; hand fixture 0.75"))
}

fn criterion_6() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let (mut nb1, mut em1, mut em5, mut wrl5) = (0.0, 0.0, 0.0, 0.0);
    let seeds = 10;
    for seed in 0..seeds {
        let data = mixture_data(generate(&MixtureConfig { seed, ..MixtureConfig::default() }));
        let cfg = ExperimentConfig { seed, ..ExperimentConfig::default() };
        let report = pool.install(|| run_on(&data, &cfg)).map_err(|e| e.to_string())?;
        for row in &report.rows {
            ensure!(row.accuracy.windows(2).all(|w| w[0] <= w[1]), "non-monotone {row:?}");
        }
        nb1 += report.accuracy("NB", 1).unwrap();
        em1 += report.accuracy("NBEM", 1).unwrap();
        em5 += report.accuracy("NBEM", 5).unwrap();
        wrl5 += report.accuracy("NBEM+WRL", 5).unwrap();
    }
    let k = seeds as f64;
    let (nb1, em1, em5, wrl5) = (nb1 / k, em1 / k, em5 / k, wrl5 / k);
    let elapsed = start.elapsed();
    let detail = format!(
        "mean acc@1 NB {:.2}% NBEM {:.2}%; acc@5 NBEM {:.2}% NBEM+WRL {:.2}%",
        100.0 * nb1,
        100.0 * em1,
        100.0 * em5,
        100.0 * wrl5
    );
    ensure!(em1 - nb1 >= 0.02, "lift below 2 points: {detail}");
    ensure!(wrl5 >= em5 - 0.01, "WRL below NBEM at 5: {detail}");
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}: {detail}");
    Ok(detail)
}

fn pipeline_outputs(dir: &Path, corpus: &str, threads: &str) -> Vec<(String, Vec<u8>)> {
    let d = |f: &str| dir.join(f).to_str().unwrap().to_string();
    let mut outputs = Vec::new();
    let mut step = |name: &str, args: Vec<String>| {
        let mut full: Vec<String> = args;
        full.extend(["--threads".to_string(), threads.to_string(), "--seed".into(), "3".into()]);
        let refs: Vec<&str> = full.iter().map(String::as_str).collect();
        let out = run_ok(&refs);
        outputs.push((format!("{name} stdout"), out.stdout));
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    step("preprocess", s(&["preprocess", "--corpus", corpus, "--output", &d("data.json")]));
    step(
        "train",
        s(&[
            "train", "--dataset", &d("data.json"), "--method", "nbem-wrl", "--lambda", "auto", "--output",
            &d("model.json"), "--trace", &d("trace.jsonl"),
        ]),
    );
    step("predict", s(&["predict", "--model", &d("model.json"), "--corpus", corpus, "--top", "3"]));
    step("eval", s(&["eval", "--corpus", corpus, "--output", &d("ev")]));
    step("sweep", s(&["sweep", "--corpus", corpus, "--lambda-grid", "0:1:0.25", "--output", &d("sw")]));
    for f in ["data.json", "model.json", "trace.jsonl", "ev.txt", "ev.json", "sw.json", "sw.tsv"] {
        outputs.push((f.to_string(), std::fs::read(dir.join(f)).unwrap()));
    }
    outputs
}

fn criterion_7() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let corpus = partly_labeled_corpus(root.path(), 15);
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let dir = root.path().join(name);
            std::fs::create_dir(&dir).unwrap();
            pipeline_outputs(&dir, &corpus, "1")
        })
        .collect();
    for ((name, a), (_, b)) in runs[0].iter().zip(&runs[1]) {
        ensure!(a == b, "{name} differs between identical single-threaded runs");
    }

    let dir = root.path().join("mt");
    std::fs::create_dir(&dir).unwrap();
    let multi = pipeline_outputs(&dir, &corpus, "4");
    let a = NBModel::load(&root.path().join("a/model.json")).unwrap();
    let b = NBModel::load(&dir.join("model.json")).unwrap();
    let gap = max_stored_gap(&a, &b);
    ensure!(gap <= 1e-10, "multi-threaded model differs by {gap:e}");
    let same = runs[0].iter().zip(&multi).filter(|((_, x), (_, y))| x == y).count();
    Ok(format!(
        "{} outputs byte-identical; 4 threads: model gap {gap:.1e}, {same}/{} outputs identical",
        runs[0].len(),
        multi.len()
    ))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let corpus = fixture_corpus();
    let corpus = corpus.to_str().unwrap();
    let table = run_ok(&["eval", "--corpus", corpus, "--output", &d("ev")]).stdout;
    let json = std::fs::read_to_string(d("ev.json")).unwrap();
    validate_report_json(&json).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    ensure!(v["list_sizes"] == serde_json::json!([1, 2, 3, 4, 5]), "list sizes {}", v["list_sizes"]);
    let methods: Vec<&str> = v["methods"].as_array().unwrap().iter().map(|m| m["method"].as_str().unwrap()).collect();
    ensure!(methods == ["NB", "NBEM", "NBEM+WRL"], "methods {methods:?}");
    let table = String::from_utf8(table).unwrap();
    ensure!(table == std::fs::read_to_string(d("ev.txt")).unwrap(), "printed table differs from file");
    let body: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    ensure!(
        body.len() == 6 && body[0].split_whitespace().collect::<Vec<_>>() == ["List", "size", "NB", "NBEM", "NBEM+WRL"],
        "table shape:\n{table}"
    );
    for (i, row) in body[1..].iter().enumerate() {
        let cells: Vec<&str> = row.split_whitespace().collect();
        ensure!(cells.len() == 4 && cells[0] == (i + 1).to_string(), "bad row `{row}`");
    }

    run_ok(&["sweep", "--corpus", corpus, "--lambda-grid", "0:1:0.1", "--output", &d("sw")]);
    let json = std::fs::read_to_string(d("sw.json")).unwrap();
    validate_sweep_json(&json).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    ensure!(v["list_sizes"] == serde_json::json!([1, 3, 5]), "sweep list sizes {}", v["list_sizes"]);
    let mut em_series = 0;
    for s in v["series"].as_array().unwrap() {
        if s["method"] == "NB" {
            continue;
        }
        em_series += 1;
        let lambdas: Vec<f64> = s["points"].as_array().unwrap().iter().map(|p| p[0].as_f64().unwrap()).collect();
        ensure!(lambdas.len() == 11, "series {} has {} points", s["method"], lambdas.len());
        for (i, l) in lambdas.iter().enumerate() {
            ensure!((l - i as f64 / 10.0).abs() < 1e-9, "lambda grid {lambdas:?}");
        }
    }
    ensure!(em_series == 6, "expected 6 EM series (2 methods x 3 list sizes), got {em_series}");
    let tsv = std::fs::read_to_string(d("sw.tsv")).unwrap();
    ensure!(tsv.starts_with("method\tlist_size\tlambda\taccuracy\n"), "tsv header");
    Ok("eval 5 x 3 table and 11-point sweep series validate".into())
}

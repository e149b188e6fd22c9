#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bugtriage::preprocess::{TokenizedReport, Vocabulary};
use bugtriage::synthetic::{developer_name, word_name};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bugtriage")
}

pub fn fixture_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/mixture.jsonl")
}

/// Runs the binary and returns its output; panics with stderr on failure.
pub fn run_ok(args: &[&str]) -> Output {
    let out = Command::new(bin()).args(args).output().expect("spawn bugtriage");
    assert!(
        out.status.success(),
        "bugtriage {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn run_code(args: &[&str]) -> i32 {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn bugtriage")
        .status
        .code()
        .unwrap_or(-1)
}

pub fn vocab(n: usize) -> Vocabulary {
    Vocabulary::from_words((0..n).map(word_name)).unwrap()
}

pub fn devs(n: usize) -> Vec<String> {
    (0..n).map(developer_name).collect()
}

/// Report from a dense count vector.
pub fn report(id: u64, label: Option<usize>, dense: &[u32]) -> TokenizedReport {
    TokenizedReport {
        report_id: id,
        submit_order: id as usize,
        label,
        counts: dense
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k, c))
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub n_words: usize,
    pub n_devs: usize,
    pub train: Vec<TokenizedReport>,
    pub probes: Vec<TokenizedReport>,
}

/// Small random labeled corpus (<= 4 developers, <= 12 reports, <= 8 words)
/// with a few extra unlabeled probe reports.
pub fn random_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_devs = rng.gen_range(1..=4);
    let n_words = rng.gen_range(1..=8);
    let n_reports = rng.gen_range(1..=12);
    let dense = |rng: &mut ChaCha8Rng| -> Vec<u32> { (0..n_words).map(|_| rng.gen_range(0..=3)).collect() };
    let train: Vec<_> = (0..n_reports)
        .map(|i| {
            let d = dense(&mut rng);
            report(i as u64 + 1, Some(rng.gen_range(0..n_devs)), &d)
        })
        .collect();
    let mut probes: Vec<_> = train.iter().map(|r| r.without_label()).collect();
    for i in 0..5 {
        let d = dense(&mut rng);
        probes.push(report(1000 + i, None, &d));
    }
    Fixture {
        n_words,
        n_devs,
        train,
        probes,
    }
}

fn rat(n: u64) -> BigRational {
    BigRational::from_integer(n.into())
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite ratio")
}

/// Posterior P(d | r) computed directly in exact rational arithmetic:
/// prior (alpha + n_d) / (alpha |D| + N), word probability
/// (alpha + c_dw) / (alpha |W| + c_d), likelihood as the product over
/// tokens. A class whose word distribution is undefined (zero denominator)
/// cannot generate any token. All-zero joint probabilities give a uniform
/// posterior.
pub fn oracle_posterior(
    n_words: usize,
    n_devs: usize,
    train: &[TokenizedReport],
    alpha: u64,
    probe: &TokenizedReport,
) -> Vec<f64> {
    let mut docs = vec![0u64; n_devs];
    let mut counts = vec![vec![0u64; n_words]; n_devs];
    for r in train {
        let d = r.label.unwrap();
        docs[d] += 1;
        for &(k, c) in &r.counts {
            counts[d][k] += u64::from(c);
        }
    }
    let zero = rat(0);
    let joint: Vec<BigRational> = (0..n_devs)
        .map(|d| {
            let prior_den = alpha * n_devs as u64 + train.len() as u64;
            let mut p = if prior_den == 0 {
                zero.clone()
            } else {
                BigRational::new((alpha + docs[d]).into(), prior_den.into())
            };
            let total: u64 = counts[d].iter().sum();
            let den = alpha * n_words as u64 + total;
            for &(k, c) in &probe.counts {
                if den == 0 {
                    p = zero.clone();
                    break;
                }
                let w = BigRational::new((alpha + counts[d][k]).into(), den.into());
                for _ in 0..c {
                    p *= &w;
                }
            }
            p
        })
        .collect();
    let sum = joint.iter().fold(zero.clone(), |a, b| a + b);
    if sum == zero {
        return vec![1.0 / n_devs as f64; n_devs];
    }
    joint.iter().map(|p| to_f64(&(p / &sum))).collect()
}

/// Relative error with an exact-zero convention: zero must match zero.
pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        if got == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        ((got - want) / want).abs()
    }
}

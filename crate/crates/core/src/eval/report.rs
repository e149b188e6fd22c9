//! Report formats.
//!
//! Evaluation report JSON (`version` 1):
//!
//! ```text
//! { "version": 1,
//!   "dataset": { "reports", "developers", "vocabulary", "labeled", "unlabeled", "test" },
//!   "list_sizes": [1, 2, ...],
//!   "methods": [ { "method": "NB" | "NBEM" | "NBEM+WRL", "lambda": number | null,
//!                  "list_size": n, "iterations": k,
//!                  "accuracy": [acc@1, acc@2, ...] } ],
//!   "runtime_ms": number            // only when timings are requested
//! }
//! ```
//!
//! Sweep JSON (`version` 1):
//!
//! ```text
//! { "version": 1, "dataset": {...}, "lambdas": [...], "list_sizes": [...],
//!   "series": [ { "method", "list_size", "points": [[lambda, accuracy], ...] } ] }
//! ```
//!
//! Accuracies are fractions in [0, 1]; the text renderings show percentages.

use std::fmt::Write as _;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetInfo {
    pub reports: usize,
    pub developers: usize,
    pub vocabulary: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: String,
    pub lambda: Option<f64>,
    pub list_size: usize,
    pub iterations: usize,
    /// accuracy@1 ..= accuracy@n_max.
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub dataset: DatasetInfo,
    pub list_sizes: Vec<usize>,
    pub rows: Vec<MethodResult>,
    pub runtime: Option<Duration>,
}

impl EvaluationReport {
    pub fn accuracy(&self, method: &str, n: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method)
            .and_then(|r| r.accuracy.get(n.checked_sub(1)?).copied())
    }

    pub fn to_json(&self, with_timings: bool) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            version: u32,
            dataset: &'a DatasetInfo,
            list_sizes: &'a [usize],
            methods: &'a [MethodResult],
            #[serde(skip_serializing_if = "Option::is_none")]
            runtime_ms: Option<f64>,
        }
        let out = Out {
            version: REPORT_FORMAT_VERSION,
            dataset: &self.dataset,
            list_sizes: &self.list_sizes,
            methods: &self.rows,
            runtime_ms: if with_timings {
                self.runtime.map(|d| d.as_secs_f64() * 1e3)
            } else {
                None
            },
        };
        serde_json::to_string_pretty(&out).expect("report serializes")
    }

    /// Aligned table: one row per list size, one accuracy column (percent)
    /// per method.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let d = &self.dataset;
        let _ = writeln!(
            s,
            "# reports: {}  developers: {}  words: {}  labeled/unlabeled/test: {}/{}/{}",
            d.reports, d.developers, d.vocabulary, d.labeled, d.unlabeled, d.test
        );
        for r in &self.rows {
            if let Some(l) = r.lambda {
                let _ = writeln!(s, "# {} lambda: {l}  list size: {}  iterations: {}", r.method, r.list_size, r.iterations);
            }
        }
        let _ = write!(s, "{:<10}", "List size");
        for r in &self.rows {
            let _ = write!(s, "{:>10}", r.method);
        }
        s.push('\n');
        for (i, n) in self.list_sizes.iter().enumerate() {
            let _ = write!(s, "{n:<10}");
            for r in &self.rows {
                let _ = write!(s, "{:>10.2}", r.accuracy[i] * 100.0);
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSeries {
    pub method: String,
    pub list_size: usize,
    /// (lambda, accuracy) pairs in grid order.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub dataset: DatasetInfo,
    pub lambdas: Vec<f64>,
    pub list_sizes: Vec<usize>,
    pub series: Vec<SweepSeries>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            version: u32,
            #[serde(flatten)]
            report: &'a SweepReport,
        }
        serde_json::to_string_pretty(&Out {
            version: REPORT_FORMAT_VERSION,
            report: self,
        })
        .expect("sweep serializes")
    }

    /// Tab-separated `method list_size lambda accuracy`, one point per line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("method\tlist_size\tlambda\taccuracy\n");
        for series in &self.series {
            for &(l, a) in &series.points {
                let _ = writeln!(s, "{}\t{}\t{l}\t{a}", series.method, series.list_size);
            }
        }
        s
    }
}

fn schema_err(message: impl Into<String>) -> Error {
    Error::Format {
        what: "report",
        message: message.into(),
    }
}

fn get<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| schema_err(format!("missing `{key}`")))
}

fn uint_array(v: &Value, key: &str) -> Result<Vec<u64>> {
    get(v, key)?
        .as_array()
        .ok_or_else(|| schema_err(format!("`{key}` must be an array")))?
        .iter()
        .map(|x| x.as_u64().ok_or_else(|| schema_err(format!("`{key}` entries must be integers"))))
        .collect()
}

fn check_common(v: &Value) -> Result<Vec<u64>> {
    if get(v, "version")?.as_u64() != Some(u64::from(REPORT_FORMAT_VERSION)) {
        return Err(schema_err("unsupported version"));
    }
    let ds = get(v, "dataset")?;
    for key in ["reports", "developers", "vocabulary", "labeled", "unlabeled", "test"] {
        get(ds, key)?
            .as_u64()
            .ok_or_else(|| schema_err(format!("dataset.{key} must be an integer")))?;
    }
    let sizes = uint_array(v, "list_sizes")?;
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(schema_err("list_sizes must be non-empty positive integers"));
    }
    Ok(sizes)
}

fn check_accuracy(x: &Value) -> Result<f64> {
    x.as_f64()
        .filter(|a| (0.0..=1.0).contains(a))
        .ok_or_else(|| schema_err("accuracy values must be numbers in [0, 1]"))
}

const METHOD_LABELS: [&str; 3] = ["NB", "NBEM", "NBEM+WRL"];

/// Checks an evaluation report JSON document against the documented layout.
pub fn validate_report_json(text: &str) -> Result<()> {
    let v: Value = serde_json::from_str(text).map_err(|e| schema_err(e.to_string()))?;
    let sizes = check_common(&v)?;
    let methods = get(&v, "methods")?
        .as_array()
        .ok_or_else(|| schema_err("`methods` must be an array"))?;
    if methods.is_empty() {
        return Err(schema_err("`methods` is empty"));
    }
    for m in methods {
        let name = get(m, "method")?.as_str().unwrap_or_default();
        if !METHOD_LABELS.contains(&name) {
            return Err(schema_err(format!("unknown method `{name}`")));
        }
        let lambda = get(m, "lambda")?;
        if !(lambda.is_null() || lambda.as_f64().is_some_and(|l| (0.0..=1.0).contains(&l))) {
            return Err(schema_err("lambda must be null or in [0, 1]"));
        }
        get(m, "list_size")?.as_u64().ok_or_else(|| schema_err("list_size must be an integer"))?;
        get(m, "iterations")?.as_u64().ok_or_else(|| schema_err("iterations must be an integer"))?;
        let acc = get(m, "accuracy")?
            .as_array()
            .ok_or_else(|| schema_err("accuracy must be an array"))?;
        if acc.len() != sizes.len() {
            return Err(schema_err("accuracy length must match list_sizes"));
        }
        for x in acc {
            check_accuracy(x)?;
        }
    }
    Ok(())
}

/// Checks a sweep JSON document against the documented layout.
pub fn validate_sweep_json(text: &str) -> Result<()> {
    let v: Value = serde_json::from_str(text).map_err(|e| schema_err(e.to_string()))?;
    check_common(&v)?;
    let lambdas: Vec<f64> = get(&v, "lambdas")?
        .as_array()
        .ok_or_else(|| schema_err("`lambdas` must be an array"))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| schema_err("lambdas must be numbers")))
        .collect::<Result<_>>()?;
    let series = get(&v, "series")?
        .as_array()
        .ok_or_else(|| schema_err("`series` must be an array"))?;
    for s in series {
        let name = get(s, "method")?.as_str().unwrap_or_default();
        if !METHOD_LABELS.contains(&name) {
            return Err(schema_err(format!("unknown method `{name}`")));
        }
        get(s, "list_size")?.as_u64().ok_or_else(|| schema_err("list_size must be an integer"))?;
        let points = get(s, "points")?
            .as_array()
            .ok_or_else(|| schema_err("points must be an array"))?;
        if points.len() != lambdas.len() {
            return Err(schema_err("each series needs one point per lambda"));
        }
        for (p, &l) in points.iter().zip(&lambdas) {
            let pair = p.as_array().filter(|a| a.len() == 2).ok_or_else(|| schema_err("points are [lambda, accuracy] pairs"))?;
            if pair[0].as_f64() != Some(l) {
                return Err(schema_err("point lambda does not match the grid"));
            }
            check_accuracy(&pair[1])?;
        }
    }
    Ok(())
}

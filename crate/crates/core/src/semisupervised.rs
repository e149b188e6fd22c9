//! Expectation-maximization over labeled and unlabeled reports.
//!
//! Each round pseudo-labels the unlabeled reports with the current model
//! (E-step) and retrains on everything (M-step). Unlabeled reports count
//! with weight `lambda`. With `list_size = n > 1` every unlabeled report is
//! spread over its top-n developers, rank q getting `2^(n-q) / (2^n - 1)`;
//! with `n = 1` this is plain hard-label EM.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{check_alpha, labeled_counts, NBModel, Provenance, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::preprocess::{TokenizedReport, Vocabulary};

/// Fraction of each developer's labeled reports held out to monitor
/// validation accuracy.
pub const VALIDATION_FRACTION: f64 = 0.2;
/// Validation accuracy is only used when every developer has at least this
/// many held-out reports.
pub const MIN_VALIDATION_PER_DEVELOPER: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct EMConfig {
    /// Weight of unlabeled reports, in [0, 1].
    pub lambda: f64,
    /// Size n of the weighted recommendation list; 1 means hard labels.
    pub list_size: usize,
    /// Maximum number of E/M rounds after the supervised start.
    pub max_iterations: usize,
    /// Stop when the monitored score improves by no more than this
    /// (relative for log-likelihood, percentage points for accuracy).
    pub min_improvement: f64,
    pub alpha: f64,
}

impl Default for EMConfig {
    fn default() -> Self {
        EMConfig {
            lambda: 1.0,
            list_size: 1,
            max_iterations: 50,
            min_improvement: 1e-4,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl EMConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Usage(format!("lambda must be in [0, 1], got {}", self.lambda)));
        }
        if self.list_size == 0 {
            return Err(Error::Usage("list size must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Usage("max iterations must be at least 1".into()));
        }
        if self.min_improvement.is_nan() || self.min_improvement < 0.0 {
            return Err(Error::Usage("min improvement must be >= 0".into()));
        }
        check_alpha(self.alpha)
    }

    pub fn method_name(&self) -> &'static str {
        if self.list_size > 1 {
            "nbem-wrl"
        } else {
            "nbem"
        }
    }
}

/// Weight of rank `q` in a recommendation list of size `n`:
/// `2^(n-q) / (2^n - 1)`.
pub fn gamma(n: usize, q: usize) -> Result<f64> {
    if n == 0 || q == 0 || q > n {
        return Err(Error::Usage(format!("gamma needs 1 <= q <= n, got n={n}, q={q}")));
    }
    Ok(gamma_unchecked(n, q))
}

fn gamma_unchecked(n: usize, q: usize) -> f64 {
    let two = 2f64;
    two.powi((n - q) as i32) / (two.powi(n as i32) - 1.0)
}

/// All rank weights of a list of size `n`.
pub fn gamma_weights(n: usize) -> Vec<f64> {
    (1..=n).map(|q| gamma_unchecked(n, q)).collect()
}

/// Pseudo-labels for the unlabeled reports, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabeling {
    /// Per report: (developer, weight) by rank, best first.
    pub lists: Vec<Vec<(usize, f64)>>,
}

impl SoftLabeling {
    pub fn top1(&self) -> impl Iterator<Item = usize> + '_ {
        self.lists.iter().map(|l| l[0].0)
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

pub fn e_step(model: &NBModel, unlabeled: &[TokenizedReport], n: usize) -> SoftLabeling {
    e_step_scored(model, unlabeled, n).0
}

/// E-step that also returns, per report, the Γ-weighted sum of the listed
/// developers' joint log-scores.
fn e_step_scored(model: &NBModel, unlabeled: &[TokenizedReport], n: usize) -> (SoftLabeling, Vec<f64>) {
    let eff = n.min(model.developer_count()).max(1);
    let weights = gamma_weights(eff);
    let (lists, scores) = unlabeled
        .par_iter()
        .map(|r| {
            let post = model.posterior(r);
            let list: Vec<(usize, f64)> = post
                .ranking
                .iter()
                .zip(&weights)
                .map(|(&j, &w)| (j, w))
                .collect();
            let score = list.iter().map(|&(j, w)| w * post.log_scores[j]).sum::<f64>();
            (list, score)
        })
        .unzip();
    (SoftLabeling { lists }, scores)
}

/// Labeled and unlabeled training reports over one vocabulary and developer
/// index. Unlabeled reports must carry no label.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub vocabulary: &'a Vocabulary,
    pub developers: &'a [String],
    pub labeled: &'a [TokenizedReport],
    pub unlabeled: &'a [TokenizedReport],
}

impl TrainingData<'_> {
    fn check(&self) -> Result<()> {
        if self.labeled.is_empty() {
            return Err(Error::Data("labeled subset is empty".into()));
        }
        if let Some(r) = self.unlabeled.iter().find(|r| r.label.is_some()) {
            return Err(Error::Internal(format!(
                "unlabeled report {} carries a label into training",
                r.report_id
            )));
        }
        Ok(())
    }
}

/// Rebuilds the model from labeled reports (weight 1) and pseudo-labeled
/// unlabeled reports (weight `lambda * Γ`).
pub fn m_step(data: &TrainingData<'_>, labeling: &SoftLabeling, config: &EMConfig) -> Result<NBModel> {
    if labeling.len() != data.unlabeled.len() {
        return Err(Error::Internal(format!(
            "labeling covers {} reports but {} are unlabeled",
            labeling.len(),
            data.unlabeled.len()
        )));
    }
    let mut counts = labeled_counts(data.vocabulary, data.developers, data.labeled)?;
    for (r, list) in data.unlabeled.iter().zip(&labeling.lists) {
        for &(j, w) in list {
            counts.add(r, j, config.lambda * w);
        }
    }
    counts.doc_weight = data.labeled.len() as f64 + config.lambda * data.unlabeled.len() as f64;
    Ok(counts.into_model(
        data.vocabulary.clone(),
        data.developers.to_vec(),
        config.alpha,
        Provenance::supervised(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    /// Accuracy@1 on held-out labeled reports.
    ValidationAccuracy,
    /// Weighted complete-data log-likelihood plus the smoothing log-prior.
    LogLikelihood,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    /// 0 is the supervised starting model.
    pub iteration: usize,
    pub score: f64,
    /// Unlabeled reports whose top-1 pseudo-label changed in this round.
    pub changed: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub score_kind: ScoreKind,
    pub entries: Vec<TraceEntry>,
    /// Iteration whose model was returned.
    pub best_iteration: usize,
    pub lambda: f64,
    pub list_size: usize,
}

impl TrainingTrace {
    pub fn best_score(&self) -> f64 {
        self.entries[self.best_iteration].score
    }

    /// Number of E/M rounds run.
    pub fn iterations(&self) -> usize {
        self.entries.len() - 1
    }

    /// One JSON object per iteration. Timings are optional so traces can be
    /// compared byte for byte.
    pub fn write_jsonl<W: Write>(&self, mut out: W, with_timings: bool) -> Result<()> {
        #[derive(Serialize)]
        struct Line {
            iteration: usize,
            score_kind: ScoreKind,
            score: f64,
            changed: usize,
            best: bool,
            lambda: f64,
            list_size: usize,
            #[serde(skip_serializing_if = "Option::is_none")]
            wall_ms: Option<f64>,
        }
        for e in &self.entries {
            let line = Line {
                iteration: e.iteration,
                score_kind: self.score_kind,
                score: e.score,
                changed: e.changed,
                best: e.iteration == self.best_iteration,
                lambda: self.lambda,
                list_size: self.list_size,
                wall_ms: with_timings.then_some(e.wall_time.as_secs_f64() * 1e3),
            };
            let text = serde_json::to_string(&line).map_err(|e| Error::Internal(e.to_string()))?;
            writeln!(out, "{text}").map_err(|e| Error::io("<trace>", e))?;
        }
        Ok(())
    }
}

/// Splits labeled reports into (train, validation) when every developer has
/// enough held-out reports; the last reports of each developer are held out.
fn validation_split(labeled: &[TokenizedReport]) -> Option<(Vec<TokenizedReport>, Vec<TokenizedReport>)> {
    let mut per_dev: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in labeled.iter().enumerate() {
        per_dev.entry(r.label?).or_default().push(i);
    }
    let mut held = vec![false; labeled.len()];
    for idx in per_dev.values() {
        let k = (VALIDATION_FRACTION * idx.len() as f64).floor() as usize;
        if k < MIN_VALIDATION_PER_DEVELOPER {
            return None;
        }
        for &i in &idx[idx.len() - k..] {
            held[i] = true;
        }
    }
    let (val, train): (Vec<_>, Vec<_>) = labeled
        .iter()
        .zip(&held)
        .partition(|(_, &h)| h);
    Some((
        train.into_iter().map(|(r, _)| r.clone()).collect(),
        val.into_iter().map(|(r, _)| r.clone()).collect(),
    ))
}

fn accuracy_at_1(model: &NBModel, reports: &[TokenizedReport]) -> f64 {
    let hits = reports
        .iter()
        .filter(|r| r.label == Some(model.posterior(r).top()))
        .count();
    hits as f64 / reports.len() as f64
}

fn labeled_log_likelihood(model: &NBModel, labeled: &[TokenizedReport]) -> f64 {
    labeled
        .iter()
        .map(|r| {
            let j = r.label.expect("labeled report");
            model.log_scores(r)[j]
        })
        .sum()
}

/// alpha times the log of every stored probability: the log density of the
/// Dirichlet prior that add-alpha smoothing maximizes, up to a constant.
fn smoothing_log_prior(model: &NBModel) -> f64 {
    if model.alpha() == 0.0 {
        return 0.0;
    }
    model.alpha() * model.stored_values().sum::<f64>()
}

struct Monitor {
    kind: ScoreKind,
    validation: Vec<TokenizedReport>,
    min_improvement: f64,
}

impl Monitor {
    fn improved(&self, new: f64, best: f64) -> bool {
        match self.kind {
            ScoreKind::ValidationAccuracy => (new - best) * 100.0 > self.min_improvement,
            ScoreKind::LogLikelihood => {
                if best == f64::NEG_INFINITY {
                    return new > best;
                }
                (new - best) / best.abs().max(f64::MIN_POSITIVE) > self.min_improvement
            }
        }
    }
}

/// Supervised start followed by E/M rounds; returns the best model by the
/// monitored score together with the per-round trace.
pub fn train_semisupervised(data: &TrainingData<'_>, config: &EMConfig) -> Result<(NBModel, TrainingTrace)> {
    config.validate()?;
    data.check()?;
    let provenance = |iterations| Provenance {
        method: config.method_name().into(),
        lambda: Some(config.lambda),
        list_size: Some(config.list_size),
        iterations,
    };

    // Held-out validation would change the starting model, so a zero weight
    // (which can never move away from it) always trains on every label.
    let split = if config.lambda > 0.0 && !data.unlabeled.is_empty() {
        validation_split(data.labeled)
    } else {
        None
    };
    let (train_labeled, monitor) = match split {
        Some((train, validation)) => (
            train,
            Monitor {
                kind: ScoreKind::ValidationAccuracy,
                validation,
                min_improvement: config.min_improvement,
            },
        ),
        None => (
            data.labeled.to_vec(),
            Monitor {
                kind: ScoreKind::LogLikelihood,
                validation: Vec::new(),
                min_improvement: config.min_improvement,
            },
        ),
    };
    let data = TrainingData {
        labeled: &train_labeled,
        ..*data
    };

    let started = Instant::now();
    let model0 = supervised_start(&data, config)?;

    if data.unlabeled.is_empty() || config.lambda == 0.0 {
        let score = score_model(&model0, &data, &monitor, None, config.lambda);
        let trace = TrainingTrace {
            score_kind: monitor.kind,
            entries: vec![TraceEntry {
                iteration: 0,
                score,
                changed: 0,
                wall_time: started.elapsed(),
            }],
            best_iteration: 0,
            lambda: config.lambda,
            list_size: config.list_size,
        };
        return Ok((model0.with_provenance(provenance(0)), trace));
    }

    let (mut labeling, unl_scores) = e_step_scored(&model0, data.unlabeled, config.list_size);
    let score0 = score_model(&model0, &data, &monitor, Some(&unl_scores), config.lambda);
    let mut entries = vec![TraceEntry {
        iteration: 0,
        score: score0,
        changed: 0,
        wall_time: started.elapsed(),
    }];
    let mut best = (model0, score0, 0usize);

    for iteration in 1..=config.max_iterations {
        let round = Instant::now();
        let next = m_step(&data, &labeling, config)?;
        let (next_labeling, next_scores) = e_step_scored(&next, data.unlabeled, config.list_size);
        let changed = labeling
            .top1()
            .zip(next_labeling.top1())
            .filter(|(a, b)| a != b)
            .count();
        let score = score_model(&next, &data, &monitor, Some(&next_scores), config.lambda);
        entries.push(TraceEntry {
            iteration,
            score,
            changed,
            wall_time: round.elapsed(),
        });
        let improved = monitor.improved(score, best.1);
        if score > best.1 {
            best = (next, score, iteration);
        }
        labeling = next_labeling;
        if !improved || changed == 0 {
            break;
        }
    }
    let (model, _, best_iteration) = best;
    let trace = TrainingTrace {
        score_kind: monitor.kind,
        entries,
        best_iteration,
        lambda: config.lambda,
        list_size: config.list_size,
    };
    let iterations = trace.iterations();
    Ok((model.with_provenance(provenance(iterations)), trace))
}

fn supervised_start(data: &TrainingData<'_>, config: &EMConfig) -> Result<NBModel> {
    let counts = labeled_counts(data.vocabulary, data.developers, data.labeled)?;
    Ok(counts.into_model(
        data.vocabulary.clone(),
        data.developers.to_vec(),
        config.alpha,
        Provenance::supervised(),
    ))
}

fn score_model(
    model: &NBModel,
    data: &TrainingData<'_>,
    monitor: &Monitor,
    unlabeled_scores: Option<&[f64]>,
    lambda: f64,
) -> f64 {
    match monitor.kind {
        ScoreKind::ValidationAccuracy => accuracy_at_1(model, &monitor.validation),
        ScoreKind::LogLikelihood => {
            let unl: f64 = unlabeled_scores.map_or(0.0, |s| s.iter().sum());
            let unl = if lambda == 0.0 { 0.0 } else { lambda * unl };
            labeled_log_likelihood(model, data.labeled) + unl + smoothing_log_prior(model)
        }
    }
}

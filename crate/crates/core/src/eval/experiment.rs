use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use super::lambda::{default_lambda_grid, select_lambda};
use super::metrics::accuracy_curve;
use super::report::{DatasetInfo, EvaluationReport, MethodResult, SweepReport, SweepSeries};
use super::split::{split_dataset, split_items, Split, SplitItem, SplitMode};
use crate::classifier::{train_nb_on, NBModel};
use crate::corpus::RawCorpus;
use crate::error::{Error, Result};
use crate::preprocess::{
    build_vocabulary, tokenize_corpus, vectorize_with_developers, LabeledBag, ProcessedDataset,
    TokenizedReport, Tokenizer, Vocabulary,
};
use crate::semisupervised::{train_semisupervised, EMConfig, TrainingData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Nb,
    Nbem,
    NbemWrl,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Nb, Method::Nbem, Method::NbemWrl];

    /// Column label in reports.
    pub fn label(self) -> &'static str {
        match self {
            Method::Nb => "NB",
            Method::Nbem => "NBEM",
            Method::NbemWrl => "NBEM+WRL",
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Method::Nb => "nb",
            Method::Nbem => "nbem",
            Method::NbemWrl => "nbem-wrl",
        }
    }

    /// Parses a comma-separated method list, keeping canonical order.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let set: BTreeSet<Method> = s
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<Result<_>>()?;
        if set.is_empty() {
            return Err(Error::Usage("no methods given".into()));
        }
        Ok(set.into_iter().collect())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nb" => Ok(Method::Nb),
            "nbem" => Ok(Method::Nbem),
            "nbem-wrl" | "nbem+wrl" => Ok(Method::NbemWrl),
            other => Err(Error::Usage(format!(
                "unknown method `{other}` (expected nb, nbem or nbem-wrl)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    /// Cross-validate over the grid.
    Auto { grid: Vec<f64>, folds: usize },
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Auto {
            grid: default_lambda_grid(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    /// Largest recommendation list evaluated.
    pub n_max: usize,
    /// EM settings; `lambda` and `list_size` are overridden per method.
    pub em: EMConfig,
    pub lambda: LambdaChoice,
    /// List size for NBEM+WRL; defaults to `n_max`.
    pub wrl_list_size: Option<usize>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: Method::ALL.to_vec(),
            n_max: 5,
            em: EMConfig::default(),
            lambda: LambdaChoice::default(),
            wrl_list_size: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    fn list_size(&self, method: Method) -> usize {
        match method {
            Method::Nb | Method::Nbem => 1,
            Method::NbemWrl => self.wrl_list_size.unwrap_or(self.n_max),
        }
    }
}

/// Vectorized labeled / unlabeled / test reports sharing one vocabulary and
/// developer index. Unlabeled reports carry no labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub vocabulary: Vocabulary,
    pub developers: Vec<String>,
    pub labeled: Vec<TokenizedReport>,
    pub unlabeled: Vec<TokenizedReport>,
    /// True developers of `unlabeled`, for diagnostics only.
    pub unlabeled_truth: Vec<Option<usize>>,
    pub test: Vec<TokenizedReport>,
}

impl ExperimentData {
    pub fn training(&self) -> TrainingData<'_> {
        TrainingData {
            vocabulary: &self.vocabulary,
            developers: &self.developers,
            labeled: &self.labeled,
            unlabeled: &self.unlabeled,
        }
    }

    /// Splits an already vectorized dataset. Unlabeled reports in the
    /// dataset join the unlabeled subset.
    pub fn from_dataset(data: &ProcessedDataset, split: &Split) -> ExperimentData {
        let by_id: HashMap<u64, &TokenizedReport> =
            data.reports.iter().map(|r| (r.report_id, r)).collect();
        let pick = |ids: &[u64]| -> Vec<TokenizedReport> { ids.iter().map(|id| by_id[id].clone()).collect() };
        let mut unlabeled_full = pick(&split.unlabeled);
        unlabeled_full.extend(data.reports.iter().filter(|r| r.label.is_none()).cloned());
        ExperimentData {
            vocabulary: data.vocabulary.clone(),
            developers: data.developers.clone(),
            labeled: pick(&split.labeled),
            unlabeled_truth: unlabeled_full.iter().map(|r| r.label).collect(),
            unlabeled: unlabeled_full.iter().map(TokenizedReport::without_label).collect(),
            test: pick(&split.test),
        }
    }

    pub fn info(&self) -> DatasetInfo {
        DatasetInfo {
            reports: self.labeled.len() + self.unlabeled.len() + self.test.len(),
            developers: self.developers.len(),
            vocabulary: self.vocabulary.len(),
            labeled: self.labeled.len(),
            unlabeled: self.unlabeled.len(),
            test: self.test.len(),
        }
    }
}

/// Tokenizes a raw corpus, splits its labeled reports and builds the
/// vocabulary from the training reports (labeled and unlabeled) only; test
/// reports are vectorized against it. Reports without a developer join the
/// unlabeled subset.
pub fn prepare_from_corpus(
    corpus: &RawCorpus,
    tokenizer: &Tokenizer,
    min_report_freq: usize,
    labeled_frac: f64,
    test_frac: f64,
    mode: SplitMode,
) -> Result<(ExperimentData, Split)> {
    let bags = tokenize_corpus(corpus, tokenizer);
    let items: Vec<SplitItem<String>> = bags
        .iter()
        .filter_map(|b| {
            b.developer.as_ref().map(|d| SplitItem {
                id: b.report_id,
                developer: d.clone(),
                submit_order: b.submit_order,
            })
        })
        .collect();
    if items.is_empty() {
        return Err(Error::Data("corpus has no labeled reports".into()));
    }
    let split = split_items(&items, labeled_frac, test_frac, mode)?;
    let developers: Vec<String> = items
        .iter()
        .map(|i| i.developer.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let by_id: HashMap<u64, &LabeledBag> = bags.iter().map(|b| (b.report_id, b)).collect();
    let pick = |ids: &[u64]| -> Vec<LabeledBag> { ids.iter().map(|id| by_id[id].clone()).collect() };
    let labeled = pick(&split.labeled);
    let test = pick(&split.test);
    let mut unlabeled = pick(&split.unlabeled);
    unlabeled.extend(bags.iter().filter(|b| b.developer.is_none()).cloned());

    let vocab = build_vocabulary(
        labeled.iter().chain(&unlabeled).map(|b| &b.bag),
        min_report_freq,
    )?;
    let labeled = vectorize_with_developers(&labeled, &vocab, &developers)?.dataset.reports;
    let unlabeled = vectorize_with_developers(&unlabeled, &vocab, &developers)?.dataset.reports;
    let test = vectorize_with_developers(&test, &vocab, &developers)?.dataset.reports;
    if labeled.is_empty() || test.is_empty() {
        return Err(Error::Data("labeled or test subset is empty after vectorization".into()));
    }
    Ok((
        ExperimentData {
            vocabulary: vocab,
            developers,
            unlabeled_truth: unlabeled.iter().map(|r| r.label).collect(),
            unlabeled: unlabeled.iter().map(TokenizedReport::without_label).collect(),
            labeled,
            test,
        },
        split,
    ))
}

/// Splits `data` once, then trains and evaluates every requested method.
pub fn run_experiment(
    data: &ProcessedDataset,
    labeled_frac: f64,
    test_frac: f64,
    mode: SplitMode,
    config: &ExperimentConfig,
) -> Result<EvaluationReport> {
    let labeled_only = ProcessedDataset {
        reports: data.labeled().cloned().collect(),
        ..data.clone()
    };
    let split = split_dataset(&labeled_only, labeled_frac, test_frac, mode)?;
    run_on(&ExperimentData::from_dataset(data, &split), config)
}

/// Trains one method with the given weight.
pub fn train_method(
    data: &ExperimentData,
    method: Method,
    lambda: f64,
    config: &ExperimentConfig,
) -> Result<NBModel> {
    match method {
        Method::Nb => train_nb_on(&data.vocabulary, &data.developers, &data.labeled, config.em.alpha),
        Method::Nbem | Method::NbemWrl => {
            let em = EMConfig {
                lambda,
                list_size: config.list_size(method),
                ..config.em.clone()
            };
            Ok(train_semisupervised(&data.training(), &em)?.0)
        }
    }
}

pub fn choose_lambda(data: &ExperimentData, method: Method, config: &ExperimentConfig) -> Result<f64> {
    match &config.lambda {
        LambdaChoice::Fixed(l) => Ok(*l),
        LambdaChoice::Auto { grid, folds } => {
            let template = EMConfig {
                list_size: config.list_size(method),
                ..config.em.clone()
            };
            Ok(select_lambda(&data.training(), grid, *folds, &template, config.seed)?.lambda)
        }
    }
}

pub fn run_on(data: &ExperimentData, config: &ExperimentConfig) -> Result<EvaluationReport> {
    if config.n_max == 0 {
        return Err(Error::Usage("maximum list size must be at least 1".into()));
    }
    config.em.validate()?;
    let started = Instant::now();
    let mut rows = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let lambda = match method {
            Method::Nb => None,
            _ => Some(choose_lambda(data, method, config)?),
        };
        let model = train_method(data, method, lambda.unwrap_or(0.0), config)?;
        rows.push(MethodResult {
            method: method.label().into(),
            lambda,
            list_size: config.list_size(method),
            iterations: model.provenance.iterations,
            accuracy: accuracy_curve(&model, &data.test, config.n_max)?,
        });
    }
    Ok(EvaluationReport {
        dataset: data.info(),
        list_sizes: (1..=config.n_max).collect(),
        rows,
        runtime: Some(started.elapsed()),
    })
}

/// Accuracy for every weight in `grid` and every method, at each of
/// `list_sizes`. NB ignores the weight and appears as a flat reference.
pub fn run_sweep(
    data: &ExperimentData,
    grid: &[f64],
    list_sizes: &[usize],
    config: &ExperimentConfig,
) -> Result<SweepReport> {
    if grid.is_empty() || list_sizes.is_empty() || list_sizes.contains(&0) {
        return Err(Error::Usage("sweep needs a non-empty grid and positive list sizes".into()));
    }
    config.em.validate()?;
    let n_max = *list_sizes.iter().max().expect("non-empty");

    let mut series = Vec::new();
    for &method in &config.methods {
        let curves: Vec<Vec<f64>> = if method == Method::Nb {
            let model = train_method(data, method, 0.0, config)?;
            vec![accuracy_curve(&model, &data.test, n_max)?; grid.len()]
        } else {
            grid.par_iter()
                .map(|&l| accuracy_curve(&train_method(data, method, l, config)?, &data.test, n_max))
                .collect::<Result<_>>()?
        };
        for &n in list_sizes {
            series.push(SweepSeries {
                method: method.label().into(),
                list_size: n,
                points: grid.iter().zip(&curves).map(|(&l, c)| (l, c[n - 1])).collect(),
            });
        }
    }
    Ok(SweepReport {
        dataset: data.info(),
        lambdas: grid.to_vec(),
        list_sizes: list_sizes.to_vec(),
        series,
    })
}

//! Command-line front end: `ingest`, `preprocess`, `train`, `predict`,
//! `eval` and `sweep`.
//!
//! Settings come from an optional TOML file (`--config`) with flat keys
//! named like the long flags (`min_report_freq`, `lambda`, ...); flags
//! given on the command line win over the file.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::classifier::{train_nb, NBModel, DEFAULT_ALPHA};
use crate::corpus::{filter_developers, filter_lifecycle, parse_corpus, write_jsonl, CorpusFormat, RawCorpus};
use crate::error::{Error, Result};
use crate::eval::{
    parse_lambda_grid, prepare_from_corpus, run_on, run_sweep, select_lambda, split_dataset,
    ExperimentConfig, ExperimentData, LambdaChoice, Method, SplitMode,
};
use crate::preprocess::{
    preprocess_corpus, tokenize_corpus, vectorize_with_developers, ProcessedDataset, Stoplist,
    TokenizedReport, Tokenizer,
};
use crate::semisupervised::{train_semisupervised, EMConfig, TrainingData};

#[derive(Debug, Parser)]
#[command(name = "bugtriage", version, about = "Semi-supervised bug triage with naive Bayes and EM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a bug export, apply lifecycle and developer filters, write JSONL.
    Ingest(IngestArgs),
    /// Tokenize a JSONL corpus into a word-count dataset.
    Preprocess(PreprocessArgs),
    /// Train a model from a dataset.
    Train(TrainArgs),
    /// Rank developers for new reports.
    Predict(PredictArgs),
    /// Accuracy@n table for NB, NBEM and NBEM+WRL.
    Eval(EvalArgs),
    /// Accuracy as a function of the unlabeled weight.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML settings file; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for fold assignment and random splits.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores). 1 gives bit-reproducible runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PrepArgs {
    /// Stoplist file (one word per line); defaults to the bundled English list.
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
    /// Keep words that occur in at least this many reports.
    #[arg(long)]
    pub min_report_freq: Option<usize>,
    /// Drop tokens shorter than this.
    #[arg(long)]
    pub min_token_len: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EmArgs {
    /// Unlabeled weight in [0, 1], or `auto` for cross-validation.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Recommendation-list size used by nbem-wrl.
    #[arg(long)]
    pub list_size: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub min_improvement: Option<f64>,
    /// Add-alpha smoothing constant.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Cross-validation folds for `--lambda auto`.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Grid for `--lambda auto` (start:end:step or a,b,c).
    #[arg(long)]
    pub lambda_grid: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub labeled_frac: Option<f64>,
    #[arg(long)]
    pub test_frac: Option<f64>,
    /// `chronological` (default) or `random`.
    #[arg(long)]
    pub split_mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "jsonl")]
    pub format: String,
    #[arg(long)]
    pub output: PathBuf,
    /// Remove developers with fewer fixed reports than this.
    #[arg(long)]
    pub min_fixed: Option<usize>,
    /// Keep reports regardless of status and resolution.
    #[arg(long)]
    pub keep_all_statuses: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Reuse the vocabulary and developers of a model or dataset file.
    #[arg(long)]
    pub vocab_from: Option<PathBuf>,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset from `preprocess`; reports without a developer are unlabeled.
    #[arg(long)]
    pub dataset: PathBuf,
    /// nb, nbem or nbem-wrl.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub output: PathBuf,
    /// Write the per-iteration training trace (JSON lines) here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Include wall-clock timings in the trace.
    #[arg(long)]
    pub timings: bool,
    #[command(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset vectorized against the model's vocabulary.
    #[arg(long, conflicts_with_all = ["corpus", "text"])]
    pub dataset: Option<PathBuf>,
    /// JSONL corpus of reports.
    #[arg(long, conflicts_with = "text")]
    pub corpus: Option<PathBuf>,
    /// A single report text.
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub top: usize,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentInput {
    /// Labeled JSONL corpus; the vocabulary is built from training reports only.
    #[arg(long, conflicts_with = "dataset")]
    pub corpus: Option<PathBuf>,
    /// Already vectorized dataset.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long)]
    pub methods: Option<String>,
    /// Output path prefix; extensions are added.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub timings: bool,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Largest recommendation list evaluated.
    #[arg(long)]
    pub max_list: Option<usize>,
    #[command(flatten)]
    pub input: ExperimentInput,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated list sizes to report.
    #[arg(long, default_value = "1,3,5")]
    pub list_sizes: String,
    #[command(flatten)]
    pub input: ExperimentInput,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSetting {
    Auto,
    Fixed(f64),
}

impl FromStr for LambdaSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(LambdaSetting::Auto);
        }
        match s.trim().parse::<f64>() {
            Ok(l) if (0.0..=1.0).contains(&l) => Ok(LambdaSetting::Fixed(l)),
            _ => Err(Error::Usage(format!("lambda must be in [0, 1] or `auto`, got `{s}`"))),
        }
    }
}

/// Values accepted in the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub min_report_freq: Option<usize>,
    pub min_token_len: Option<usize>,
    pub min_fixed: Option<usize>,
    pub method: Option<String>,
    pub lambda: Option<toml::Value>,
    pub list_size: Option<usize>,
    pub max_iterations: Option<usize>,
    pub min_improvement: Option<f64>,
    pub alpha: Option<f64>,
    pub folds: Option<usize>,
    pub lambda_grid: Option<String>,
    pub labeled_frac: Option<f64>,
    pub test_frac: Option<f64>,
    pub split_mode: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub max_list: Option<usize>,
    pub methods: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stoplist: Option<PathBuf>,
    pub min_report_freq: usize,
    pub min_token_len: usize,
    pub min_fixed: Option<usize>,
    pub method: Method,
    pub lambda: LambdaSetting,
    pub list_size: usize,
    pub max_iterations: usize,
    pub min_improvement: f64,
    pub alpha: f64,
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub labeled_frac: f64,
    pub test_frac: f64,
    pub split_mode: SplitMode,
    pub seed: u64,
    pub threads: usize,
    pub max_list: usize,
    pub methods: Vec<Method>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            stoplist: None,
            min_report_freq: 3,
            min_token_len: 2,
            min_fixed: None,
            method: Method::Nb,
            lambda: LambdaSetting::Auto,
            list_size: 5,
            max_iterations: 50,
            min_improvement: 1e-4,
            alpha: DEFAULT_ALPHA,
            folds: 5,
            lambda_grid: crate::eval::default_lambda_grid(),
            labeled_frac: 0.05,
            test_frac: 0.2,
            split_mode: SplitMode::Chronological,
            seed: 0,
            threads: 0,
            max_list: 5,
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Default)]
struct Overrides<'a> {
    common: Option<&'a CommonArgs>,
    prep: Option<&'a PrepArgs>,
    em: Option<&'a EmArgs>,
    split: Option<&'a SplitArgs>,
    method: Option<&'a str>,
    methods: Option<&'a str>,
    min_fixed: Option<usize>,
    max_list: Option<usize>,
}

impl RunConfig {
    fn resolve(o: Overrides<'_>) -> Result<Self> {
        let file = FileConfig::load(o.common.and_then(|c| c.config.as_deref()))?;
        let mut c = RunConfig {
            stoplist: pick(o.prep.and_then(|p| p.stoplist.clone()), file.stoplist),
            min_fixed: pick(o.min_fixed, file.min_fixed),
            ..RunConfig::default()
        };
        set(&mut c.min_report_freq, o.prep.and_then(|p| p.min_report_freq), file.min_report_freq);
        set(&mut c.min_token_len, o.prep.and_then(|p| p.min_token_len), file.min_token_len);
        if let Some(m) = pick(o.method.map(str::to_string), file.method) {
            c.method = m.parse()?;
        }
        if let Some(m) = pick(o.methods.map(str::to_string), file.methods) {
            c.methods = Method::parse_list(&m)?;
        }
        let file_lambda = match file.lambda {
            None => None,
            Some(toml::Value::String(s)) => Some(s),
            Some(toml::Value::Float(f)) => Some(f.to_string()),
            Some(toml::Value::Integer(i)) => Some(i.to_string()),
            Some(other) => return Err(Error::Usage(format!("bad lambda `{other}` in config"))),
        };
        if let Some(l) = pick(o.em.and_then(|e| e.lambda.clone()), file_lambda) {
            c.lambda = l.parse()?;
        }
        set(&mut c.list_size, o.em.and_then(|e| e.list_size), file.list_size);
        set(&mut c.max_iterations, o.em.and_then(|e| e.max_iterations), file.max_iterations);
        set(&mut c.min_improvement, o.em.and_then(|e| e.min_improvement), file.min_improvement);
        set(&mut c.alpha, o.em.and_then(|e| e.alpha), file.alpha);
        set(&mut c.folds, o.em.and_then(|e| e.folds), file.folds);
        if let Some(g) = pick(o.em.and_then(|e| e.lambda_grid.clone()), file.lambda_grid) {
            c.lambda_grid = parse_lambda_grid(&g)?;
        }
        set(&mut c.labeled_frac, o.split.and_then(|s| s.labeled_frac), file.labeled_frac);
        set(&mut c.test_frac, o.split.and_then(|s| s.test_frac), file.test_frac);
        set(&mut c.seed, o.common.and_then(|x| x.seed), file.seed);
        set(&mut c.threads, o.common.and_then(|x| x.threads), file.threads);
        set(&mut c.max_list, o.max_list, file.max_list);
        if let Some(m) = pick(o.split.and_then(|s| s.split_mode.clone()), file.split_mode) {
            c.split_mode = match m.as_str() {
                "chronological" => SplitMode::Chronological,
                "random" => SplitMode::Random { seed: c.seed },
                other => return Err(Error::Usage(format!("unknown split mode `{other}`"))),
            };
        }
        if let SplitMode::Random { seed } = &mut c.split_mode {
            *seed = c.seed;
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !(self.labeled_frac > 0.0 && self.test_frac > 0.0 && self.labeled_frac + self.test_frac < 1.0) {
            return Err(Error::Usage("fractions must be in (0, 1) with labeled + test < 1".into()));
        }
        if self.min_report_freq == 0 || self.list_size == 0 || self.max_list == 0 {
            return Err(Error::Usage("min report frequency and list sizes must be at least 1".into()));
        }
        if self.min_fixed == Some(0) {
            return Err(Error::Usage("--min-fixed must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Usage("--folds must be at least 2".into()));
        }
        self.em_config(Method::NbemWrl, 0.5).validate()
    }

    fn tokenizer(&self) -> Result<Tokenizer> {
        let stoplist = match &self.stoplist {
            Some(p) => Stoplist::load(p)?,
            None => Stoplist::english(),
        };
        Ok(Tokenizer::new(stoplist, self.min_token_len))
    }

    fn em_config(&self, method: Method, lambda: f64) -> EMConfig {
        EMConfig {
            lambda,
            list_size: if method == Method::NbemWrl { self.list_size } else { 1 },
            max_iterations: self.max_iterations,
            min_improvement: self.min_improvement,
            alpha: self.alpha,
        }
    }

    fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            methods: self.methods.clone(),
            n_max: self.max_list,
            em: self.em_config(Method::Nbem, 0.0),
            lambda: match self.lambda {
                LambdaSetting::Fixed(l) => LambdaChoice::Fixed(l),
                LambdaSetting::Auto => LambdaChoice::Auto {
                    grid: self.lambda_grid.clone(),
                    folds: self.folds,
                },
            },
            wrl_list_size: Some(self.list_size),
            seed: self.seed,
        }
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

fn set<T>(slot: &mut T, flag: Option<T>, file: Option<T>) {
    if let Some(v) = flag.or(file) {
        *slot = v;
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => 3,
    }
}

fn threads_of(cmd: &Command) -> Option<usize> {
    let common = match cmd {
        Command::Ingest(a) => &a.common,
        Command::Preprocess(a) => &a.common,
        Command::Train(a) => &a.common,
        Command::Predict(a) => &a.common,
        Command::Eval(a) => &a.input.common,
        Command::Sweep(a) => &a.input.common,
    };
    match common.threads {
        Some(t) => Some(t),
        None => FileConfig::load(common.config.as_deref()).ok().and_then(|f| f.threads),
    }
}

pub fn run(cmd: Command) -> Result<()> {
    let threads = threads_of(&cmd).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    pool.install(|| match cmd {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let cfg = RunConfig::resolve(Overrides {
        common: Some(&a.common),
        min_fixed: a.min_fixed,
        ..Overrides::default()
    })?;
    let format: CorpusFormat = a.format.parse()?;
    let raw = parse_corpus(&a.input, format)?;
    let read = raw.len();
    let mut corpus = raw;
    if !a.keep_all_statuses {
        let kept = filter_lifecycle(&corpus);
        eprintln!(
            "lifecycle filter: kept {} of {} reports (removed {})",
            kept.len(),
            corpus.len(),
            corpus.len() - kept.len()
        );
        corpus = kept;
    }
    if let Some(min_fixed) = cfg.min_fixed {
        let kept = filter_developers(&corpus, min_fixed)?;
        eprintln!(
            "developer filter (min fixed {min_fixed}): kept {} of {} reports (removed {})",
            kept.len(),
            corpus.len(),
            corpus.len() - kept.len()
        );
        corpus = kept;
    }
    let mut out = create(&a.output)?;
    write_jsonl(&corpus, &mut out)?;
    out.flush().map_err(|e| Error::io(&a.output, e))?;
    let devs = crate::corpus::developer_counts(&corpus).len();
    eprintln!(
        "ingested {read} reports; wrote {} reports ({} labeled, {devs} developers) to {}",
        corpus.len(),
        corpus.labeled_count(),
        a.output.display()
    );
    Ok(())
}

fn load_jsonl(path: &Path) -> Result<RawCorpus> {
    parse_corpus(path, CorpusFormat::Jsonl)
}

/// Vocabulary and developers of a model or dataset file.
fn load_index(path: &Path) -> Result<(crate::preprocess::Vocabulary, Vec<String>)> {
    match NBModel::load(path) {
        Ok(m) => Ok((m.vocabulary().clone(), m.developers().to_vec())),
        Err(_) => {
            let d = ProcessedDataset::load(path)?;
            Ok((d.vocabulary, d.developers))
        }
    }
}

/// Vectorizes a corpus against an existing index; developers unknown to
/// the index become unlabeled.
fn vectorize_against(
    corpus: &RawCorpus,
    tokenizer: &Tokenizer,
    vocab: &crate::preprocess::Vocabulary,
    developers: &[String],
) -> Result<crate::preprocess::Vectorized> {
    let mut bags = tokenize_corpus(corpus, tokenizer);
    let mut unknown = 0;
    for b in &mut bags {
        if b.developer.as_ref().is_some_and(|d| !developers.contains(d)) {
            b.developer = None;
            unknown += 1;
        }
    }
    if unknown > 0 {
        eprintln!("{unknown} report(s) name developers unknown to the index; treated as unlabeled");
    }
    vectorize_with_developers(&bags, vocab, developers)
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    let cfg = RunConfig::resolve(Overrides {
        common: Some(&a.common),
        prep: Some(&a.prep),
        ..Overrides::default()
    })?;
    let tokenizer = cfg.tokenizer()?;
    let corpus = load_jsonl(&a.corpus)?;
    let vectorized = match &a.vocab_from {
        Some(p) => {
            let (vocab, devs) = load_index(p)?;
            vectorize_against(&corpus, &tokenizer, &vocab, &devs)?
        }
        None => preprocess_corpus(&corpus, &tokenizer, cfg.min_report_freq)?,
    };
    vectorized.dataset.save(&a.output)?;
    eprintln!(
        "wrote {} reports over {} words and {} developers to {} ({} empty reports excluded)",
        vectorized.dataset.reports.len(),
        vectorized.dataset.vocabulary.len(),
        vectorized.dataset.developers.len(),
        a.output.display(),
        vectorized.excluded.len()
    );
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = RunConfig::resolve(Overrides {
        common: Some(&a.common),
        em: Some(&a.em),
        method: a.method.as_deref(),
        ..Overrides::default()
    })?;
    let data = ProcessedDataset::load(&a.dataset)?;
    let labeled: Vec<TokenizedReport> = data.labeled().cloned().collect();
    let unlabeled: Vec<TokenizedReport> = data.reports.iter().filter(|r| r.label.is_none()).cloned().collect();

    let (model, trace) = match cfg.method {
        Method::Nb => (train_nb(&data, cfg.alpha)?, None),
        method => {
            let training = TrainingData {
                vocabulary: &data.vocabulary,
                developers: &data.developers,
                labeled: &labeled,
                unlabeled: &unlabeled,
            };
            let lambda = match cfg.lambda {
                LambdaSetting::Fixed(l) => l,
                LambdaSetting::Auto => {
                    let sel = select_lambda(&training, &cfg.lambda_grid, cfg.folds, &cfg.em_config(method, 0.0), cfg.seed)?;
                    for (l, acc) in &sel.scores {
                        eprintln!("lambda {l}: mean validation accuracy@1 {:.4}", acc);
                    }
                    eprintln!("selected lambda {}", sel.lambda);
                    sel.lambda
                }
            };
            let (model, trace) = train_semisupervised(&training, &cfg.em_config(method, lambda))?;
            eprintln!(
                "{}: lambda {lambda}, {} EM iteration(s), best at iteration {}",
                method.token(),
                trace.iterations(),
                trace.best_iteration
            );
            (model, Some(trace))
        }
    };
    model.save(&a.output)?;
    match (&a.trace, &trace) {
        (Some(path), Some(t)) => {
            let mut out = create(path)?;
            t.write_jsonl(&mut out, a.timings)?;
            out.flush().map_err(|e| Error::io(path, e))?;
        }
        (Some(_), None) => eprintln!("nb runs no EM iterations; --trace ignored"),
        _ => {}
    }
    eprintln!(
        "trained {} on {} labeled and {} unlabeled reports; model written to {}",
        cfg.method.token(),
        labeled.len(),
        unlabeled.len(),
        a.output.display()
    );
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    if a.top == 0 {
        return Err(Error::Usage("--top must be at least 1".into()));
    }
    let cfg = RunConfig::resolve(Overrides {
        common: Some(&a.common),
        prep: Some(&a.prep),
        ..Overrides::default()
    })?;
    let model = NBModel::load(&a.model)?;
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let io_err = |e| Error::io("<stdout>", e);

    if let Some(text) = &a.text {
        let bag = cfg.tokenizer()?.tokenize(text);
        let mut counts: Vec<(usize, u32)> = bag
            .iter()
            .filter_map(|(w, &c)| model.vocabulary().get(w).map(|k| (k, c)))
            .collect();
        counts.sort_unstable();
        let report = TokenizedReport {
            report_id: 0,
            submit_order: 0,
            label: None,
            counts,
        };
        for (rank, (j, p)) in model.recommend(&report, a.top).into_iter().enumerate() {
            writeln!(out, "{}\t{}\t{}", rank + 1, model.developers()[j], p).map_err(io_err)?;
        }
        return out.flush().map_err(io_err);
    }

    let reports: Vec<TokenizedReport> = if let Some(path) = &a.dataset {
        let d = ProcessedDataset::load(path)?;
        if d.vocabulary != *model.vocabulary() {
            return Err(Error::Data("dataset vocabulary differs from the model's; re-run preprocess with --vocab-from".into()));
        }
        d.reports
    } else if let Some(path) = &a.corpus {
        let corpus = load_jsonl(path)?;
        let tokenizer = cfg.tokenizer()?;
        let v = vectorize_against(&corpus, &tokenizer, model.vocabulary(), model.developers());
        match v {
            Ok(v) => {
                if !v.excluded.is_empty() {
                    eprintln!("{} report(s) share no words with the model and get the prior ranking", v.excluded.len());
                }
                // Keep every input report, in order, including empty ones.
                let by_id: std::collections::HashMap<u64, TokenizedReport> =
                    v.dataset.reports.into_iter().map(|r| (r.report_id, r)).collect();
                corpus
                    .reports
                    .iter()
                    .map(|r| {
                        by_id.get(&r.id).cloned().unwrap_or(TokenizedReport {
                            report_id: r.id,
                            submit_order: r.submit_order,
                            label: None,
                            counts: vec![],
                        })
                    })
                    .collect()
            }
            Err(Error::Data(_)) => corpus
                .reports
                .iter()
                .map(|r| TokenizedReport {
                    report_id: r.id,
                    submit_order: r.submit_order,
                    label: None,
                    counts: vec![],
                })
                .collect(),
            Err(e) => return Err(e),
        }
    } else {
        return Err(Error::Usage("give one of --text, --corpus or --dataset".into()));
    };

    writeln!(out, "id\trank\tdeveloper\tprobability").map_err(io_err)?;
    for r in &reports {
        for (rank, (j, p)) in model.recommend(r, a.top).into_iter().enumerate() {
            writeln!(out, "{}\t{}\t{}\t{}", r.report_id, rank + 1, model.developers()[j], p).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

fn experiment_data(input: &ExperimentInput, cfg: &RunConfig) -> Result<ExperimentData> {
    match (&input.corpus, &input.dataset) {
        (Some(path), None) => {
            let corpus = load_jsonl(path)?;
            let (data, _) = prepare_from_corpus(
                &corpus,
                &cfg.tokenizer()?,
                cfg.min_report_freq,
                cfg.labeled_frac,
                cfg.test_frac,
                cfg.split_mode,
            )?;
            Ok(data)
        }
        (None, Some(path)) => {
            let data = ProcessedDataset::load(path)?;
            let labeled_only = ProcessedDataset {
                reports: data.labeled().cloned().collect(),
                ..data.clone()
            };
            let split = split_dataset(&labeled_only, cfg.labeled_frac, cfg.test_frac, cfg.split_mode)?;
            Ok(ExperimentData::from_dataset(&data, &split))
        }
        _ => Err(Error::Usage("give exactly one of --corpus or --dataset".into())),
    }
}

fn experiment_config(input: &ExperimentInput, max_list: Option<usize>) -> Result<RunConfig> {
    RunConfig::resolve(Overrides {
        common: Some(&input.common),
        prep: Some(&input.prep),
        em: Some(&input.em),
        split: Some(&input.split),
        methods: input.methods.as_deref(),
        max_list,
        ..Overrides::default()
    })
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = experiment_config(&a.input, a.max_list)?;
    let data = experiment_data(&a.input, &cfg)?;
    let report = run_on(&data, &cfg.experiment())?;
    let table = report.to_table();
    write_text(&with_extension(&a.input.output, "txt"), &table)?;
    write_text(&with_extension(&a.input.output, "json"), &report.to_json(a.input.timings))?;
    print!("{table}");
    if a.input.timings {
        if let Some(t) = report.runtime {
            eprintln!("evaluation took {:.3} s", t.as_secs_f64());
        }
    }
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = experiment_config(&a.input, None)?;
    let list_sizes: Vec<usize> = a
        .list_sizes
        .split(',')
        .map(|s| s.trim().parse::<usize>().ok().filter(|&n| n > 0))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Usage(format!("bad --list-sizes `{}`", a.list_sizes)))?;
    let exp = cfg.experiment();
    let data = experiment_data(&a.input, &cfg)?;
    let report = run_sweep(&data, &cfg.lambda_grid, &list_sizes, &exp)?;
    write_text(&with_extension(&a.input.output, "json"), &report.to_json())?;
    let tsv = report.to_tsv();
    write_text(&with_extension(&a.input.output, "tsv"), &tsv)?;
    print!("{tsv}");
    Ok(())
}

//! Multinomial naive Bayes over developer classes.
//!
//! Parameters are estimated from (possibly fractional) per-report class
//! weights with add-alpha smoothing on both the class prior and the
//! per-class word distribution, and stored as natural logs.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::Exact;
use crate::preprocess::{ProcessedDataset, TokenizedReport, Vocabulary};

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub const DEFAULT_ALPHA: f64 = 1.0;

/// How a model was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub lambda: Option<f64>,
    pub list_size: Option<usize>,
    /// EM iterations run (0 for supervised training).
    pub iterations: usize,
}

impl Provenance {
    pub fn supervised() -> Self {
        Provenance {
            method: "nb".into(),
            lambda: None,
            list_size: None,
            iterations: 0,
        }
    }
}

/// Trained classifier. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NBModel {
    vocabulary: Vocabulary,
    developers: Vec<String>,
    alpha: f64,
    log_prior: Vec<f64>,
    /// Word-major: entry `k * |D| + j` is log P(w_k | d_j).
    log_word_given_dev: Vec<f64>,
    pub provenance: Provenance,
}

/// Class and word masses accumulated from weighted training reports.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct WeightedCounts {
    pub n_words: usize,
    pub n_devs: usize,
    pub class_mass: Vec<f64>,
    /// Word-major like the model table.
    pub word_mass: Vec<f64>,
    /// Normalizer of the prior before smoothing: |R_l| + λ|R_u|.
    pub doc_weight: f64,
}

impl WeightedCounts {
    pub fn new(n_words: usize, n_devs: usize) -> Self {
        WeightedCounts {
            n_words,
            n_devs,
            class_mass: vec![0.0; n_devs],
            word_mass: vec![0.0; n_words * n_devs],
            doc_weight: 0.0,
        }
    }

    /// Adds `weight` of the report to class `dev`. Does not touch `doc_weight`.
    pub fn add(&mut self, report: &TokenizedReport, dev: usize, weight: f64) {
        self.class_mass[dev] += weight;
        for &(k, c) in &report.counts {
            self.word_mass[k * self.n_devs + dev] += weight * f64::from(c);
        }
    }

    pub fn into_model(
        self,
        vocabulary: Vocabulary,
        developers: Vec<String>,
        alpha: f64,
        provenance: Provenance,
    ) -> NBModel {
        let (w, d) = (self.n_words, self.n_devs);
        let prior_denom = alpha * d as f64 + self.doc_weight;
        let log_prior = self
            .class_mass
            .iter()
            .map(|&m| ((alpha + m) / prior_denom).ln())
            .collect();

        let mut dev_total = vec![0.0; d];
        for row in self.word_mass.chunks_exact(d.max(1)) {
            for (t, m) in dev_total.iter_mut().zip(row) {
                *t += m;
            }
        }
        let mut log_word_given_dev = vec![0.0; w * d];
        for j in 0..d {
            let denom = alpha * w as f64 + dev_total[j];
            for k in 0..w {
                let num = alpha + self.word_mass[k * d + j];
                log_word_given_dev[k * d + j] = if denom > 0.0 {
                    (num / denom).ln()
                } else {
                    // No mass and no smoothing: the class can never generate text.
                    f64::NEG_INFINITY
                };
            }
        }
        NBModel {
            vocabulary,
            developers,
            alpha,
            log_prior,
            log_word_given_dev,
            provenance,
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Usage(format!("smoothing alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

/// Supervised training on the labeled reports of `data`; unlabeled ones are
/// ignored.
pub fn train_nb(data: &ProcessedDataset, alpha: f64) -> Result<NBModel> {
    let labeled: Vec<&TokenizedReport> = data.labeled().collect();
    train_nb_on(
        &data.vocabulary,
        &data.developers,
        labeled.iter().copied(),
        alpha,
    )
}

/// Supervised training on explicit labeled reports over a given vocabulary
/// and developer index.
pub fn train_nb_on<'a, I>(
    vocabulary: &Vocabulary,
    developers: &[String],
    labeled: I,
    alpha: f64,
) -> Result<NBModel>
where
    I: IntoIterator<Item = &'a TokenizedReport>,
{
    check_alpha(alpha)?;
    let counts = labeled_counts(vocabulary, developers, labeled)?;
    if counts.doc_weight == 0.0 {
        return Err(Error::Data("no labeled reports to train on".into()));
    }
    Ok(counts.into_model(
        vocabulary.clone(),
        developers.to_vec(),
        alpha,
        Provenance::supervised(),
    ))
}

pub(crate) fn labeled_counts<'a, I>(
    vocabulary: &Vocabulary,
    developers: &[String],
    labeled: I,
) -> Result<WeightedCounts>
where
    I: IntoIterator<Item = &'a TokenizedReport>,
{
    if developers.is_empty() {
        return Err(Error::Data("no developers to train on".into()));
    }
    let mut counts = WeightedCounts::new(vocabulary.len(), developers.len());
    let mut n = 0usize;
    for r in labeled {
        let dev = r
            .label
            .ok_or_else(|| Error::Internal(format!("report {} has no label", r.report_id)))?;
        if dev >= developers.len() {
            return Err(Error::Data(format!("report {}: label {dev} out of range", r.report_id)));
        }
        if let Some(&(k, _)) = r.counts.last() {
            if k >= vocabulary.len() {
                return Err(Error::Data(format!("report {}: word index {k} out of range", r.report_id)));
            }
        }
        counts.add(r, dev, 1.0);
        n += 1;
    }
    counts.doc_weight = n as f64;
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// Unnormalized log P(d_j) + log P(r | d_j).
    pub log_scores: Vec<f64>,
    pub probs: Vec<f64>,
    /// Developer indices by descending probability, ties by ascending index.
    pub ranking: Vec<usize>,
}

impl Posterior {
    pub fn from_log_scores(log_scores: Vec<f64>) -> Self {
        let max = log_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let probs = if max == f64::NEG_INFINITY {
            vec![1.0 / log_scores.len() as f64; log_scores.len()]
        } else {
            let exps: Vec<f64> = log_scores.iter().map(|&s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / total).collect()
        };
        let ranking = rank_desc(&log_scores);
        Posterior {
            log_scores,
            probs,
            ranking,
        }
    }

    pub fn top(&self) -> usize {
        self.ranking[0]
    }
}

/// Indices sorted by descending value; equal values keep ascending index.
pub fn rank_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| match values[b].partial_cmp(&values[a]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    idx
}

impl NBModel {
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn developers(&self) -> &[String] {
        &self.developers
    }

    pub fn developer_count(&self) -> usize {
        self.developers.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    pub fn log_word_given_dev(&self, word: usize, dev: usize) -> f64 {
        self.log_word_given_dev[word * self.developers.len() + dev]
    }

    /// Every stored log-probability, prior first then the word table.
    pub fn stored_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_prior.iter().chain(self.log_word_given_dev.iter()).copied()
    }

    pub fn log_scores(&self, report: &TokenizedReport) -> Vec<f64> {
        let d = self.developers.len();
        let mut scores = self.log_prior.clone();
        for &(k, c) in &report.counts {
            let row = &self.log_word_given_dev[k * d..(k + 1) * d];
            let c = f64::from(c);
            for (s, &lw) in scores.iter_mut().zip(row) {
                *s += c * lw;
            }
        }
        scores
    }

    pub fn posterior(&self, report: &TokenizedReport) -> Posterior {
        Posterior::from_log_scores(self.log_scores(report))
    }

    /// Top `min(n, |D|)` developers with their posterior probabilities.
    pub fn recommend(&self, report: &TokenizedReport, n: usize) -> Vec<(usize, f64)> {
        let post = self.posterior(report);
        post.ranking
            .iter()
            .take(n)
            .map(|&j| (j, post.probs[j]))
            .collect()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let d = self.developers.len();
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            alpha: Exact(self.alpha),
            provenance: self.provenance.clone(),
            developers: self.developers.clone(),
            vocabulary: self.vocabulary.words().to_vec(),
            log_prior: self.log_prior.iter().copied().map(Exact).collect(),
            log_word_given_dev: self
                .log_word_given_dev
                .chunks(d.max(1))
                .map(|row| row.iter().copied().map(Exact).collect())
                .collect(),
        };
        serde_json::to_writer(out, &file).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let bad = |message: String| Error::Format {
            what: "model",
            message,
        };
        let file: ModelFile = serde_json::from_reader(input).map_err(|e| bad(e.to_string()))?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", file.version)));
        }
        let n_words = file.vocabulary.len();
        let vocabulary = Vocabulary::from_words(file.vocabulary)?;
        if vocabulary.len() != n_words {
            return Err(bad("vocabulary must be sorted and distinct".into()));
        }
        let d = file.developers.len();
        if d == 0 || file.log_prior.len() != d {
            return Err(bad("log_prior length must equal the developer count".into()));
        }
        if file.log_word_given_dev.len() != n_words
            || file.log_word_given_dev.iter().any(|row| row.len() != d)
        {
            return Err(bad("log_word_given_dev must be |vocabulary| rows of |developers| values".into()));
        }
        Ok(NBModel {
            vocabulary,
            developers: file.developers,
            alpha: file.alpha.0,
            log_prior: file.log_prior.into_iter().map(|x| x.0).collect(),
            log_word_given_dev: file
                .log_word_given_dev
                .into_iter()
                .flatten()
                .map(|x| x.0)
                .collect(),
            provenance: file.provenance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_json(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_json(std::io::BufReader::new(f))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    alpha: Exact,
    provenance: Provenance,
    developers: Vec<String>,
    vocabulary: Vec<String>,
    log_prior: Vec<Exact>,
    log_word_given_dev: Vec<Vec<Exact>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{vectorize, LabeledBag, TokenBag};

    fn bag(text: &str) -> TokenBag {
        let mut b = TokenBag::new();
        for w in text.split_whitespace() {
            *b.entry(w.to_string()).or_insert(0) += 1;
        }
        b
    }

    /// Dev A: "crash ui", "crash editor"; dev B: "network timeout".
    fn fixture() -> ProcessedDataset {
        let items: Vec<LabeledBag> = [("A", "crash ui"), ("A", "crash editor"), ("B", "network timeout")]
            .iter()
            .enumerate()
            .map(|(i, &(d, t))| LabeledBag {
                report_id: i as u64 + 1,
                submit_order: i,
                developer: Some(d.into()),
                bag: bag(t),
            })
            .collect();
        let vocab = Vocabulary::from_words(["crash", "editor", "network", "timeout", "ui"]).unwrap();
        vectorize(&items, &vocab).unwrap().dataset
    }

    fn query(model: &NBModel, text: &str) -> TokenizedReport {
        let mut counts: Vec<(usize, u32)> = bag(text)
            .iter()
            .filter_map(|(w, &c)| model.vocabulary().get(w).map(|k| (k, c)))
            .collect();
        counts.sort_unstable();
        TokenizedReport {
            report_id: 99,
            submit_order: 0,
            label: None,
            counts,
        }
    }

    #[test]
    fn single_class_prior_is_one() {
        let mut ds = fixture();
        ds.reports.truncate(1);
        ds.developers.truncate(1);
        for alpha in [0.0, 1.0, 2.5] {
            let m = train_nb(&ds, alpha).unwrap();
            assert!(m.log_prior()[0].abs() < 1e-15);
        }
    }

    #[test]
    fn unsmoothed_priors_are_label_frequencies() {
        let mut ds = fixture();
        let extra = ds.reports[0].clone();
        for id in [10, 11] {
            ds.reports.push(TokenizedReport { report_id: id, ..extra.clone() });
        }
        // A: 2 + 2 copies - 1 removed = 3 reports, B: 1.
        ds.reports.retain(|r| r.report_id != 1);
        let m = train_nb(&ds, 0.0).unwrap();
        assert!((m.log_prior()[0].exp() - 0.75).abs() < 1e-15);
        assert!((m.log_prior()[1].exp() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn smoothed_fixture_cells_match_hand_computation() {
        let m = train_nb(&fixture(), 1.0).unwrap();
        // Priors: (1+2)/(2+3) and (1+1)/(2+3).
        assert!((m.log_prior()[0].exp() - 3.0 / 5.0).abs() < 1e-15);
        assert!((m.log_prior()[1].exp() - 2.0 / 5.0).abs() < 1e-15);
        // Word order: crash editor network timeout ui. A has 4 tokens, B has 2.
        let a = [3.0 / 9.0, 2.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0, 2.0 / 9.0];
        let b = [1.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for k in 0..5 {
            assert!((m.log_word_given_dev(k, 0).exp() - a[k]).abs() < 1e-15, "A word {k}");
            assert!((m.log_word_given_dev(k, 1).exp() - b[k]).abs() < 1e-15, "B word {k}");
        }
    }

    #[test]
    fn crash_goes_to_a_network_ranks_b_first() {
        let m = train_nb(&fixture(), 1.0).unwrap();
        let p = m.posterior(&query(&m, "crash"));
        // A: 3/5 * 1/3 = 1/5; B: 2/5 * 1/7 = 2/35.
        assert_eq!(p.top(), 0);
        assert!((p.probs[0] - (1.0 / 5.0) / (1.0 / 5.0 + 2.0 / 35.0)).abs() < 1e-12);
        let rec = m.recommend(&query(&m, "network"), 2);
        assert_eq!(rec.iter().map(|&(j, _)| j).collect::<Vec<_>>(), vec![1, 0]);
        assert_eq!(m.recommend(&query(&m, "network"), 1).len(), 1);
        assert_eq!(m.recommend(&query(&m, "network"), 10).len(), 2);
    }

    #[test]
    fn empty_report_posterior_is_prior() {
        let m = train_nb(&fixture(), 1.0).unwrap();
        let p = m.posterior(&query(&m, ""));
        for j in 0..2 {
            assert!((p.probs[j] - m.log_prior()[j].exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_alpha_handles_impossible_classes() {
        let m = train_nb(&fixture(), 0.0).unwrap();
        // "crash" never seen for B.
        let p = m.posterior(&query(&m, "crash"));
        assert_eq!(p.probs, vec![1.0, 0.0]);
        // "crash network": impossible for both → uniform.
        let p = m.posterior(&query(&m, "crash network"));
        assert_eq!(p.probs, vec![0.5, 0.5]);
        assert_eq!(p.ranking, vec![0, 1]);
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(rank_desc(&[1.0, 2.0, 2.0, 0.5]), vec![1, 2, 0, 3]);
        assert_eq!(rank_desc(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), vec![0, 1]);
    }

    #[test]
    fn empty_training_set_is_error() {
        let mut ds = fixture();
        ds.reports.clear();
        assert!(train_nb(&ds, 1.0).is_err());
        assert!(train_nb(&fixture(), -1.0).is_err());
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let m = train_nb(&fixture(), 1.0).unwrap();
        let mut buf = Vec::new();
        m.write_json(&mut buf).unwrap();
        let back = NBModel::read_json(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"version\":1"));

        let m0 = train_nb(&fixture(), 0.0).unwrap();
        let mut buf = Vec::new();
        m0.write_json(&mut buf).unwrap();
        assert_eq!(NBModel::read_json(buf.as_slice()).unwrap(), m0);
    }
}

//! Text to sparse word-count vectors.
//!
//! Pipeline: split on non-alphabetic characters, lowercase, drop short
//! tokens and stopwords (no stemming), prune words that occur in too few
//! reports, then count in-vocabulary occurrences per report.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::RawCorpus;
use crate::error::{Error, Result};

const DEFAULT_STOPLIST: &str = include_str!("stoplist_en.txt");

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Multiset of tokens. Ordered so iteration is deterministic.
pub type TokenBag = BTreeMap<String, u32>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stoplist(HashSet<String>);

impl Stoplist {
    pub fn empty() -> Self {
        Stoplist(HashSet::new())
    }

    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPLIST)
    }

    /// One word per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(|line| line.split('#').next().unwrap_or("").trim())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        Stoplist(words)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stoplist {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Stoplist(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    pub stoplist: Stoplist,
    /// Tokens shorter than this many characters are dropped.
    pub min_token_len: usize,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer {
            stoplist: Stoplist::english(),
            min_token_len: 2,
        }
    }
}

impl Tokenizer {
    pub fn new(stoplist: Stoplist, min_token_len: usize) -> Self {
        Tokenizer {
            stoplist,
            min_token_len,
        }
    }

    pub fn tokenize(&self, text: &str) -> TokenBag {
        let mut bag = TokenBag::new();
        for raw in text.split(|c: char| !c.is_alphabetic()) {
            if raw.is_empty() {
                continue;
            }
            let token = raw.to_lowercase();
            // Lowercasing can expand into non-letters for a handful of code points.
            if !token.chars().all(char::is_alphabetic) {
                continue;
            }
            if token.chars().count() < self.min_token_len || self.stoplist.contains(&token) {
                continue;
            }
            *bag.entry(token).or_insert(0) += 1;
        }
        bag
    }
}

/// Splits on non-alphabetic characters and lowercases; no length rule.
pub fn tokenize(text: &str, stoplist: &Stoplist) -> TokenBag {
    Tokenizer::new(stoplist.clone(), 1).tokenize(text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from distinct words; sorted lexicographically.
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = words.into_iter().map(Into::into).collect();
        for w in &set {
            if w.is_empty() || !w.chars().all(|c| c.is_alphabetic() && !c.is_uppercase()) {
                return Err(Error::Format {
                    what: "vocabulary",
                    message: format!("`{w}` is not a lowercase alphabetic word"),
                });
            }
        }
        let words: Vec<String> = set.into_iter().collect();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }
}

/// Keeps tokens present in at least `min_report_freq` distinct reports.
pub fn build_vocabulary<'a, I>(bags: I, min_report_freq: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a TokenBag>,
{
    if min_report_freq == 0 {
        return Err(Error::Usage("min_report_freq must be at least 1".into()));
    }
    let mut report_freq: HashMap<&str, usize> = HashMap::new();
    for bag in bags {
        for word in bag.keys() {
            *report_freq.entry(word.as_str()).or_insert(0) += 1;
        }
    }
    let vocab = Vocabulary::from_words(
        report_freq
            .into_iter()
            .filter(|&(_, df)| df >= min_report_freq)
            .map(|(w, _)| w.to_string()),
    )?;
    if vocab.is_empty() {
        return Err(Error::Data(format!(
            "vocabulary is empty after pruning words seen in fewer than {min_report_freq} reports; \
             try a lower --min-report-freq"
        )));
    }
    Ok(vocab)
}

/// A report as sparse counts over a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedReport {
    #[serde(rename = "id")]
    pub report_id: u64,
    #[serde(rename = "order")]
    pub submit_order: usize,
    /// Developer index, if known.
    pub label: Option<usize>,
    /// (word index, count) pairs, ascending by index, counts ≥ 1.
    pub counts: Vec<(usize, u32)>,
}

impl TokenizedReport {
    /// In-vocabulary token count.
    pub fn len(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| u64::from(c)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn without_label(&self) -> TokenizedReport {
        TokenizedReport {
            label: None,
            ..self.clone()
        }
    }
}

/// Token bag plus the metadata that travels with it into a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledBag {
    pub report_id: u64,
    pub submit_order: usize,
    pub developer: Option<String>,
    pub bag: TokenBag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedDataset {
    pub vocabulary: Vocabulary,
    /// Sorted developer identifiers; labels index into this.
    pub developers: Vec<String>,
    pub reports: Vec<TokenizedReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vectorized {
    pub dataset: ProcessedDataset,
    /// Ids of reports dropped because no token survived.
    pub excluded: Vec<u64>,
}

/// Vectorizes bags against `vocab`; the developer index is built from the
/// labels present, in lexicographic order.
pub fn vectorize(items: &[LabeledBag], vocab: &Vocabulary) -> Result<Vectorized> {
    let developers: Vec<String> = items
        .iter()
        .filter_map(|it| it.developer.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    vectorize_with_developers(items, vocab, &developers)
}

/// Like [`vectorize`] but against a fixed developer index. A label missing
/// from `developers` is a data error.
pub fn vectorize_with_developers(
    items: &[LabeledBag],
    vocab: &Vocabulary,
    developers: &[String],
) -> Result<Vectorized> {
    if vocab.is_empty() {
        return Err(Error::Data("cannot vectorize against an empty vocabulary".into()));
    }
    let dev_index: HashMap<&str, usize> = developers
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();

    let converted: Vec<Result<Option<TokenizedReport>>> = items
        .par_iter()
        .map(|item| {
            let label = match &item.developer {
                None => None,
                Some(d) => Some(*dev_index.get(d.as_str()).ok_or_else(|| {
                    Error::Data(format!("report {}: unknown developer `{d}`", item.report_id))
                })?),
            };
            let mut counts: Vec<(usize, u32)> = item
                .bag
                .iter()
                .filter_map(|(w, &c)| vocab.get(w).map(|k| (k, c)))
                .collect();
            if counts.is_empty() {
                return Ok(None);
            }
            counts.sort_unstable_by_key(|&(k, _)| k);
            Ok(Some(TokenizedReport {
                report_id: item.report_id,
                submit_order: item.submit_order,
                label,
                counts,
            }))
        })
        .collect();

    let mut reports = Vec::with_capacity(items.len());
    let mut excluded = Vec::new();
    for (item, r) in items.iter().zip(converted) {
        match r? {
            Some(r) => reports.push(r),
            None => excluded.push(item.report_id),
        }
    }
    if reports.is_empty() && !items.is_empty() {
        return Err(Error::Data(
            "every report is empty after vectorization; the vocabulary shares no words with the input".into(),
        ));
    }
    Ok(Vectorized {
        dataset: ProcessedDataset {
            vocabulary: vocab.clone(),
            developers: developers.to_vec(),
            reports,
        },
        excluded,
    })
}

/// Tokenizes each report's summary and description.
pub fn tokenize_corpus(corpus: &RawCorpus, tokenizer: &Tokenizer) -> Vec<LabeledBag> {
    corpus
        .reports
        .par_iter()
        .map(|r| LabeledBag {
            report_id: r.id,
            submit_order: r.submit_order,
            developer: r.developer.clone(),
            bag: tokenizer.tokenize(&r.text()),
        })
        .collect()
}

/// Tokenize, prune and vectorize a whole corpus with the vocabulary built
/// from all of it.
pub fn preprocess_corpus(
    corpus: &RawCorpus,
    tokenizer: &Tokenizer,
    min_report_freq: usize,
) -> Result<Vectorized> {
    if corpus.is_empty() {
        return Err(Error::Data("corpus is empty".into()));
    }
    let bags = tokenize_corpus(corpus, tokenizer);
    let vocab = build_vocabulary(bags.iter().map(|b| &b.bag), min_report_freq)?;
    vectorize(&bags, &vocab)
}

impl ProcessedDataset {
    pub fn labeled(&self) -> impl Iterator<Item = &TokenizedReport> {
        self.reports.iter().filter(|r| r.label.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::Format {
            what: "dataset",
            message,
        };
        for w in self.developers.windows(2) {
            if w[0] >= w[1] {
                return Err(bad("developers must be sorted and distinct".into()));
            }
        }
        let mut ids = HashSet::with_capacity(self.reports.len());
        for r in &self.reports {
            if !ids.insert(r.report_id) {
                return Err(bad(format!("duplicate report id {}", r.report_id)));
            }
            if let Some(l) = r.label {
                if l >= self.developers.len() {
                    return Err(bad(format!("report {}: label {l} out of range", r.report_id)));
                }
            }
            if r.counts.is_empty() {
                return Err(bad(format!("report {} has no words", r.report_id)));
            }
            let mut prev = None;
            for &(k, c) in &r.counts {
                if k >= self.vocabulary.len() || c == 0 || prev.is_some_and(|p| p >= k) {
                    return Err(bad(format!("report {}: bad count entry ({k}, {c})", r.report_id)));
                }
                prev = Some(k);
            }
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let file = DatasetFile {
            version: DATASET_FORMAT_VERSION,
            vocabulary: self.vocabulary.words().to_vec(),
            developers: self.developers.clone(),
            reports: self.reports.clone(),
        };
        serde_json::to_writer(out, &file).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let file: DatasetFile = serde_json::from_reader(input).map_err(|e| Error::Format {
            what: "dataset",
            message: e.to_string(),
        })?;
        if file.version != DATASET_FORMAT_VERSION {
            return Err(Error::Format {
                what: "dataset",
                message: format!("unsupported version {}", file.version),
            });
        }
        let n_words = file.vocabulary.len();
        let vocabulary = Vocabulary::from_words(file.vocabulary)?;
        if vocabulary.len() != n_words {
            return Err(Error::Format {
                what: "dataset",
                message: "vocabulary must be sorted and distinct".into(),
            });
        }
        let ds = ProcessedDataset {
            vocabulary,
            developers: file.developers,
            reports: file.reports,
        };
        ds.validate()?;
        Ok(ds)
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
struct DatasetFile {
    version: u32,
    vocabulary: Vec<String>,
    developers: Vec<String>,
    reports: Vec<TokenizedReport>,
}

//! Seeded multinomial-mixture corpora with known labels.
//!
//! Each developer class has its own word distribution: a mix of a shared
//! background distribution and a class-specific Dirichlet draw. Documents
//! pick a class, a Poisson length, then i.i.d. words, which is exactly the
//! generative model naive Bayes assumes.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Poisson};

use crate::corpus::{BugReport, RawCorpus};
use crate::preprocess::{TokenizedReport, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureConfig {
    pub classes: usize,
    pub vocabulary: usize,
    pub mean_length: f64,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
    /// Weight of the class-specific component against the shared background.
    pub separation: f64,
    /// Dirichlet concentration of each word distribution.
    pub concentration: f64,
    pub seed: u64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            classes: 5,
            vocabulary: 200,
            mean_length: 30.0,
            labeled: 50,
            unlabeled: 1000,
            test: 500,
            separation: 0.25,
            concentration: 0.5,
            seed: 0,
        }
    }
}

/// Generated split with ground truth. `unlabeled` carries no labels;
/// their true classes are in `unlabeled_truth`.
#[derive(Debug, Clone)]
pub struct MixtureCorpus {
    pub vocabulary: Vocabulary,
    pub developers: Vec<String>,
    pub labeled: Vec<TokenizedReport>,
    pub unlabeled: Vec<TokenizedReport>,
    pub unlabeled_truth: Vec<usize>,
    pub test: Vec<TokenizedReport>,
}

/// Lowercase alphabetic pseudo-word for index `i`: "qaa", "qab", ...
pub fn word_name(i: usize) -> String {
    let mut s = String::from("q");
    let mut rest = i;
    let mut letters = Vec::new();
    loop {
        letters.push((b'a' + (rest % 26) as u8) as char);
        rest /= 26;
        if rest == 0 {
            break;
        }
    }
    while letters.len() < 2 {
        letters.push('a');
    }
    s.extend(letters.iter().rev());
    s
}

pub fn developer_name(c: usize) -> String {
    format!("dev{c:02}@example.org")
}

struct Generator {
    rng: ChaCha8Rng,
    class_words: Vec<WeightedIndex<f64>>,
    length: Poisson<f64>,
    classes: usize,
}

impl Generator {
    fn new(cfg: &MixtureConfig) -> Self {
        assert!(cfg.classes >= 1 && cfg.vocabulary >= 1 && cfg.mean_length > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dirichlet = Dirichlet::new_with_size(cfg.concentration, cfg.vocabulary)
            .expect("valid Dirichlet parameters");
        let background: Vec<f64> = dirichlet.sample(&mut rng);
        let class_words = (0..cfg.classes)
            .map(|_| {
                let own: Vec<f64> = dirichlet.sample(&mut rng);
                let mixed: Vec<f64> = background
                    .iter()
                    .zip(&own)
                    .map(|(&b, &o)| (1.0 - cfg.separation) * b + cfg.separation * o + 1e-12)
                    .collect();
                WeightedIndex::new(mixed).expect("positive weights")
            })
            .collect();
        Generator {
            rng,
            class_words,
            length: Poisson::new(cfg.mean_length).expect("positive mean"),
            classes: cfg.classes,
        }
    }

    fn document(&mut self, id: u64, class: usize) -> TokenizedReport {
        let len = (self.length.sample(&mut self.rng) as usize).max(1);
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..len {
            *counts.entry(self.class_words[class].sample(&mut self.rng)).or_insert(0u32) += 1;
        }
        TokenizedReport {
            report_id: id,
            submit_order: id as usize,
            label: Some(class),
            counts: counts.into_iter().collect(),
        }
    }

    fn random_class(&mut self) -> usize {
        self.rng.gen_range(0..self.classes)
    }
}

/// Labeled reports are spread round-robin over the classes so every class
/// is represented; unlabeled and test classes are drawn uniformly.
pub fn generate(cfg: &MixtureConfig) -> MixtureCorpus {
    let mut g = Generator::new(cfg);
    let mut next_id = 1u64;
    let mut take_id = || {
        let id = next_id;
        next_id += 1;
        id
    };

    let labeled: Vec<_> = (0..cfg.labeled)
        .map(|i| g.document(take_id(), i % cfg.classes))
        .collect();
    let mut unlabeled = Vec::with_capacity(cfg.unlabeled);
    let mut unlabeled_truth = Vec::with_capacity(cfg.unlabeled);
    for _ in 0..cfg.unlabeled {
        let c = g.random_class();
        let doc = g.document(take_id(), c);
        unlabeled.push(doc.without_label());
        unlabeled_truth.push(c);
    }
    let test: Vec<_> = (0..cfg.test)
        .map(|_| {
            let c = g.random_class();
            g.document(take_id(), c)
        })
        .collect();

    MixtureCorpus {
        vocabulary: Vocabulary::from_words((0..cfg.vocabulary).map(word_name))
            .expect("generated words are alphabetic"),
        developers: (0..cfg.classes).map(developer_name).collect(),
        labeled,
        unlabeled,
        unlabeled_truth,
        test,
    }
}

/// A raw corpus of `per_class` reports for each class, interleaved in
/// submission order, every report labeled and resolved.
pub fn generate_raw_corpus(cfg: &MixtureConfig, per_class: usize) -> RawCorpus {
    let mut g = Generator::new(cfg);
    let words: Vec<String> = (0..cfg.vocabulary).map(word_name).collect();
    let mut reports = Vec::with_capacity(per_class * cfg.classes);
    for i in 0..per_class * cfg.classes {
        let class = i % cfg.classes;
        let doc = g.document(i as u64 + 1, class);
        let mut tokens: Vec<&str> = Vec::new();
        for &(k, c) in &doc.counts {
            tokens.extend(std::iter::repeat_n(words[k].as_str(), c as usize));
        }
        let split = tokens.len().min(4);
        reports.push(BugReport {
            id: 100_000 + i as u64,
            summary: tokens[..split].join(" "),
            description: tokens[split..].join(" "),
            developer: Some(developer_name(class)),
            status: "RESOLVED".into(),
            resolution: "FIXED".into(),
            submit_order: i,
        });
    }
    RawCorpus {
        reports,
        source_note: format!("synthetic mixture (seed {})", cfg.seed),
    }
}

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::preprocess::ProcessedDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Each developer's reports in submission order.
    Chronological,
    /// Each developer's reports shuffled with the seed.
    Random { seed: u64 },
}

/// Partition of report ids into labeled, test and unlabeled subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub labeled: Vec<u64>,
    pub test: Vec<u64>,
    /// Training reports whose labels are hidden from every trainer.
    pub unlabeled: Vec<u64>,
    pub labeled_frac: f64,
    pub test_frac: f64,
}

impl Split {
    pub fn unlabeled_frac(&self) -> f64 {
        1.0 - self.labeled_frac - self.test_frac
    }
}

/// What the splitter needs to know about a report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitItem<D> {
    pub id: u64,
    pub developer: D,
    pub submit_order: usize,
}

pub fn split_dataset(data: &ProcessedDataset, labeled_frac: f64, test_frac: f64, mode: SplitMode) -> Result<Split> {
    let items = data
        .reports
        .iter()
        .map(|r| {
            Ok(SplitItem {
                id: r.report_id,
                developer: r.label.ok_or_else(|| {
                    Error::Data(format!("report {} is unlabeled; splitting needs labels", r.report_id))
                })?,
                submit_order: r.submit_order,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    split_items(&items, labeled_frac, test_frac, mode)
}

/// Per developer: the first `max(1, round(labeled_frac * m))` reports are
/// labeled, the next `floor(test_frac * m)` are test, the rest unlabeled.
pub fn split_items<D: Ord + Clone + std::fmt::Debug>(
    items: &[SplitItem<D>],
    labeled_frac: f64,
    test_frac: f64,
    mode: SplitMode,
) -> Result<Split> {
    if !(labeled_frac > 0.0 && test_frac > 0.0 && labeled_frac + test_frac < 1.0) {
        return Err(Error::Usage(format!(
            "split fractions must be positive with labeled + test < 1 (got {labeled_frac}, {test_frac})"
        )));
    }
    let mut per_dev: BTreeMap<&D, Vec<&SplitItem<D>>> = BTreeMap::new();
    for it in items {
        per_dev.entry(&it.developer).or_default().push(it);
    }
    let mut rng = match mode {
        SplitMode::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        SplitMode::Chronological => None,
    };

    let mut split = Split {
        labeled: Vec::new(),
        test: Vec::new(),
        unlabeled: Vec::new(),
        labeled_frac,
        test_frac,
    };
    for (dev, mut reports) in per_dev {
        let m = reports.len();
        if m < 2 {
            return Err(Error::Data(format!(
                "developer {dev:?} has {m} report(s); at least 2 are needed to split"
            )));
        }
        reports.sort_by_key(|r| (r.submit_order, r.id));
        if let Some(rng) = rng.as_mut() {
            reports.shuffle(rng);
        }
        let n_labeled = ((labeled_frac * m as f64).round() as usize).clamp(1, m);
        let n_test = ((test_frac * m as f64).floor() as usize).min(m - n_labeled);
        for (i, r) in reports.iter().enumerate() {
            let bucket = if i < n_labeled {
                &mut split.labeled
            } else if i < n_labeled + n_test {
                &mut split.test
            } else {
                &mut split.unlabeled
            };
            bucket.push(r.id);
        }
    }
    Ok(split)
}

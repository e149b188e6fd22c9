use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::preprocess::TokenizedReport;
use crate::semisupervised::{train_semisupervised, EMConfig, TrainingData};

/// 0.0, 0.1, ..., 1.0.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Parses `start:end:step` (inclusive) or a comma-separated list.
pub fn parse_lambda_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("bad lambda grid `{spec}` (use start:end:step or a,b,c)"));
    let grid: Vec<f64> = if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, end, step] = parts[..] else { return Err(bad()) };
        if step.is_nan() || step <= 0.0 || end < start {
            return Err(bad());
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| {
                let v = start + i as f64 * step;
                // snap 0.30000000000000004 to 0.3
                (v * 1e9).round() / 1e9
            })
            .collect()
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if grid.is_empty() || grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::Usage(format!("lambda grid `{spec}` must be non-empty and within [0, 1]")));
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// (lambda, mean validation accuracy@1) for every grid point, in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Stratified fold index per labeled report: each developer's reports are
/// shuffled and dealt round-robin, continuing where the previous developer
/// stopped so fold sizes stay balanced.
fn assign_folds(labeled: &[TokenizedReport], folds: usize, seed: u64) -> Vec<usize> {
    let mut per_dev: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for (i, r) in labeled.iter().enumerate() {
        per_dev.entry(r.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labeled.len()];
    let mut next = 0;
    for idx in per_dev.values_mut() {
        idx.shuffle(&mut rng);
        for &i in idx.iter() {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    fold_of
}

/// k-fold cross-validation over the labeled reports for each weight in
/// `grid`. Every fold trains on the other labeled folds plus all unlabeled
/// reports and is scored by accuracy@1 on its held-out reports. Held-out
/// reports whose developer has no report in the training folds count as
/// misses. Returns the best mean accuracy, preferring the smaller weight on
/// ties.
pub fn select_lambda(
    data: &TrainingData<'_>,
    grid: &[f64],
    folds: usize,
    template: &EMConfig,
    seed: u64,
) -> Result<LambdaSelection> {
    if grid.is_empty() {
        return Err(Error::Usage("lambda grid is empty".into()));
    }
    if folds < 2 {
        return Err(Error::Usage("cross-validation needs at least 2 folds".into()));
    }
    if data.labeled.len() < folds {
        return Err(Error::Data(format!(
            "{} labeled reports cannot fill {folds} folds",
            data.labeled.len()
        )));
    }
    for &l in grid {
        EMConfig {
            lambda: l,
            ..template.clone()
        }
        .validate()?;
    }

    let fold_of = assign_folds(data.labeled, folds, seed);
    let fold_sets: Vec<(Vec<TokenizedReport>, Vec<TokenizedReport>)> = (0..folds)
        .map(|f| {
            let (held, train): (Vec<_>, Vec<_>) = data
                .labeled
                .iter()
                .zip(&fold_of)
                .partition(|(_, &g)| g == f);
            (
                train.into_iter().map(|(r, _)| r.clone()).collect(),
                held.into_iter().map(|(r, _)| r.clone()).collect(),
            )
        })
        .collect();

    let scores: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&lambda| {
            let config = EMConfig {
                lambda,
                ..template.clone()
            };
            let mut sum = 0.0;
            for (train, held) in &fold_sets {
                let trained_devs: HashSet<usize> = train.iter().filter_map(|r| r.label).collect();
                let fold_data = TrainingData {
                    labeled: train,
                    ..*data
                };
                let (model, _) = train_semisupervised(&fold_data, &config)?;
                let hits = held
                    .iter()
                    .filter(|r| {
                        let truth = r.label.expect("labeled report");
                        trained_devs.contains(&truth) && model.posterior(r).top() == truth
                    })
                    .count();
                sum += hits as f64 / held.len() as f64;
            }
            Ok((lambda, sum / folds as f64))
        })
        .collect::<Result<_>>()?;

    let mut best = scores[0];
    for &(l, acc) in &scores[1..] {
        if acc > best.1 || (acc == best.1 && l < best.0) {
            best = (l, acc);
        }
    }
    Ok(LambdaSelection {
        lambda: best.0,
        scores,
    })
}

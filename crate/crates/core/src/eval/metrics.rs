use crate::classifier::NBModel;
use crate::error::{Error, Result};
use crate::preprocess::TokenizedReport;

/// Zero-based position of the report's true developer in the model's
/// ranking.
pub fn true_rank(model: &NBModel, report: &TokenizedReport) -> Result<usize> {
    let truth = report
        .label
        .ok_or_else(|| Error::Data(format!("test report {} has no label", report.report_id)))?;
    model
        .posterior(report)
        .ranking
        .iter()
        .position(|&j| j == truth)
        .ok_or_else(|| Error::Data(format!("test report {}: unknown developer {truth}", report.report_id)))
}

/// Fraction of test reports whose true developer is among the top `n`
/// recommendations.
pub fn accuracy_at_n(model: &NBModel, test: &[TokenizedReport], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Usage("list size must be at least 1".into()));
    }
    Ok(accuracy_curve(model, test, n)?[n - 1])
}

/// accuracy@1 ..= accuracy@n_max from one ranking per test report.
pub fn accuracy_curve(model: &NBModel, test: &[TokenizedReport], n_max: usize) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let mut hits_at_rank = vec![0usize; model.developer_count()];
    for r in test {
        hits_at_rank[true_rank(model, r)?] += 1;
    }
    let total = test.len() as f64;
    let mut cumulative = 0usize;
    Ok((0..n_max)
        .map(|i| {
            cumulative += hits_at_rank.get(i).copied().unwrap_or(0);
            cumulative as f64 / total
        })
        .collect())
}

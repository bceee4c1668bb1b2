use std::collections::BTreeMap;

use crate::error::{ensure, Result};

/// Support-weighted mean of per-class F1 scores.
///
/// Classes are those appearing in either `labels` or `predictions`; a class
/// that is predicted but never present has zero support and so zero weight.
/// Undefined precision or recall counts as 0.
pub fn weighted_f1(predictions: &[u32], labels: &[u32]) -> Result<f64> {
    ensure!(
        predictions.len() == labels.len(),
        "{} predictions for {} labels",
        predictions.len(),
        labels.len()
    );
    ensure!(!labels.is_empty(), "weighted F1 of an empty sample");

    #[derive(Default)]
    struct Counts {
        tp: usize,
        predicted: usize,
        support: usize,
    }
    let mut per_class: BTreeMap<u32, Counts> = BTreeMap::new();
    for (&p, &y) in predictions.iter().zip(labels) {
        per_class.entry(p).or_default().predicted += 1;
        let c = per_class.entry(y).or_default();
        c.support += 1;
        if p == y {
            c.tp += 1;
        }
    }
    // F1 = 2·tp / (predicted + support), summed with support weights
    let weighted: f64 = per_class
        .values()
        .filter(|c| c.support > 0)
        .map(|c| 2.0 * c.tp as f64 / (c.predicted + c.support) as f64 * c.support as f64)
        .sum();
    Ok(weighted / labels.len() as f64)
}

/// Fraction of matching entries.
pub fn accuracy(predictions: &[u32], labels: &[u32]) -> Result<f64> {
    ensure!(
        predictions.len() == labels.len() && !labels.is_empty(),
        "accuracy needs equal, non-empty inputs"
    );
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

//! Exemplar selection over one class's feature matrix.
//!
//! Two strategies pick `m` of a class's `n` samples:
//!
//! - [`herding_select`]: greedy herding. Step `k` picks the sample whose
//!   inclusion brings the running exemplar mean closest to the class mean.
//!   The running sum is re-accumulated for every candidate, exactly as the
//!   recurrence is written, which costs `O(n·m²·d)`.
//! - [`fast_select`]: the `m` samples nearest to the class mean, found with a
//!   bounded max-heap in `O(n·d + n·log m + m·log m)`.
//!
//! Both break ties toward the lowest sample index and never pick a sample
//! twice.

mod heap;

use serde::{Deserialize, Serialize};

pub use heap::{BoundedMaxHeap, HeapEntry, HeapStats};

use crate::error::{ensure, Result};
use crate::tensor_nn::Tensor2;

/// `n × d` matrix of feature vectors, one row per sample.
pub type FeatureMatrix = Tensor2<f32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Herding,
    Fast,
}

impl SelectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMethod::Herding => "herding",
            SelectionMethod::Fast => "fast",
        }
    }
}

impl std::fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMean {
    pub mean: Vec<f32>,
    pub sample_count: usize,
}

/// Outcome of selecting `m` exemplars.
///
/// For [`SelectionMethod::Fast`] `distances[k]` is `‖F(x) − μ‖` of the k-th
/// pick and is non-decreasing. For [`SelectionMethod::Herding`] it is the
/// distance between `μ` and the mean of the first `k + 1` picks.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub indices: Vec<usize>,
    pub distances: Vec<f32>,
    pub method: SelectionMethod,
}

/// Componentwise mean, accumulated in `f64`.
pub fn compute_class_mean(features: &FeatureMatrix) -> Result<ClassMean> {
    ensure!(features.rows() >= 1, "class mean of an empty feature matrix");
    let mut acc = vec![0f64; features.cols()];
    for row in features.iter_rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    let n = features.rows() as f64;
    Ok(ClassMean {
        mean: acc.into_iter().map(|s| (s / n) as f32).collect(),
        sample_count: features.rows(),
    })
}

/// Euclidean distance with an `f64` accumulator.
#[inline]
pub fn l2_distance(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    acc.sqrt() as f32
}

fn check_inputs(features: &FeatureMatrix, mean: &ClassMean, m: usize) -> Result<()> {
    ensure!(m >= 1, "exemplar count m must be at least 1");
    ensure!(
        m <= features.rows(),
        "cannot select {m} exemplars from {} samples",
        features.rows()
    );
    ensure!(
        mean.mean.len() == features.cols(),
        "class mean has {} components but features have {}",
        mean.mean.len(),
        features.cols()
    );
    Ok(())
}

/// Dispatches to [`herding_select`] or [`fast_select`].
pub fn select(
    features: &FeatureMatrix,
    mean: &ClassMean,
    m: usize,
    method: SelectionMethod,
) -> Result<SelectionResult> {
    match method {
        SelectionMethod::Herding => herding_select(features, mean, m),
        SelectionMethod::Fast => fast_select(features, mean, m),
    }
}

/// Greedy herding selection.
///
/// At step `k` every not-yet-chosen sample `x` is scored by
/// `‖μ − (F(x) + Σ_{i<k} F(p_i)) / k‖`, with the sum rebuilt from scratch for
/// each candidate. The lowest score wins, ties go to the lower index.
pub fn herding_select(features: &FeatureMatrix, mean: &ClassMean, m: usize) -> Result<SelectionResult> {
    check_inputs(features, mean, m)?;
    let n = features.rows();
    let d = features.cols();
    let mu: Vec<f64> = mean.mean.iter().map(|&v| v as f64).collect();
    let mut chosen = vec![false; n];
    let mut indices = Vec::with_capacity(m);
    let mut distances = Vec::with_capacity(m);
    let mut sum = vec![0f64; d];

    for k in 1..=m {
        let inv_k = 1.0 / k as f64;
        let mut best: Option<(f64, usize)> = None;
        for (x, row) in features.iter_rows().enumerate() {
            if chosen[x] {
                continue;
            }
            for (s, &v) in sum.iter_mut().zip(row) {
                *s = v as f64;
            }
            for &p in &indices {
                for (s, &v) in sum.iter_mut().zip(features.row(p)) {
                    *s += v as f64;
                }
            }
            let mut dist2 = 0f64;
            for (s, u) in sum.iter().zip(&mu) {
                let diff = u - s * inv_k;
                dist2 += diff * diff;
            }
            ensure!(dist2.is_finite(), "non-finite feature in row {x}");
            if best.is_none_or(|(bd, _)| dist2 < bd) {
                best = Some((dist2, x));
            }
        }
        let (dist2, pick) = best.expect("m <= n leaves a candidate");
        chosen[pick] = true;
        indices.push(pick);
        distances.push(dist2.sqrt() as f32);
    }
    Ok(SelectionResult {
        indices,
        distances,
        method: SelectionMethod::Herding,
    })
}

/// The `m` samples nearest to the class mean, ascending by distance.
pub fn fast_select(features: &FeatureMatrix, mean: &ClassMean, m: usize) -> Result<SelectionResult> {
    fast_select_instrumented(features, mean, m).map(|(r, _)| r)
}

/// [`fast_select`] that also reports the heap's operation counters.
pub fn fast_select_instrumented(
    features: &FeatureMatrix,
    mean: &ClassMean,
    m: usize,
) -> Result<(SelectionResult, HeapStats)> {
    check_inputs(features, mean, m)?;
    let mut dists = Vec::with_capacity(features.rows());
    for (i, row) in features.iter_rows().enumerate() {
        let d = l2_distance(row, &mean.mean);
        ensure!(d.is_finite(), "non-finite feature in row {i}");
        dists.push(d);
    }

    let mut heap = BoundedMaxHeap::with_capacity(m);
    for (index, &dist) in dists[..m].iter().enumerate() {
        heap.push(HeapEntry { dist, index });
    }
    for (index, &dist) in dists.iter().enumerate().skip(m) {
        let worst = heap.peek().expect("heap holds m >= 1 entries").dist;
        if dist < worst {
            heap.replace_top(HeapEntry { dist, index });
        }
    }

    let stats = heap.stats();
    let (indices, distances) = heap.into_sorted_vec().into_iter().map(|e| (e.index, e.dist)).unzip();
    Ok((
        SelectionResult {
            indices,
            distances,
            method: SelectionMethod::Fast,
        },
        stats,
    ))
}

/// Closed-form operation count used to sanity-check benchmark scaling:
/// `n·m²` for herding and `n·(1 + log₂ m) + m·log₂ m` for the heap method.
pub fn selection_cost_model(n: usize, m: usize, method: SelectionMethod) -> f64 {
    let (n, m) = (n as f64, m as f64);
    match method {
        SelectionMethod::Herding => n * m * m,
        SelectionMethod::Fast => {
            let lg = if m > 0.0 { m.log2() } else { 0.0 };
            n * (1.0 + lg) + m * lg
        }
    }
}

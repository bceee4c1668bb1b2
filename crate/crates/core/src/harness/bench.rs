use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::stats::summarize;
use crate::error::{ensure, Error, Result};
use crate::selection::{compute_class_mean, select, selection_cost_model, ClassMean, FeatureMatrix, SelectionMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    pub ms: Vec<usize>,
    pub dims: usize,
    pub methods: Vec<SelectionMethod>,
    /// Timed samples per cell; at least 5.
    pub repetitions: usize,
    /// Untimed runs before sampling.
    pub warmups: usize,
    /// Each timed sample repeats the selection until at least this many
    /// seconds have elapsed and reports the per-call average.
    pub min_sample_secs: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ns: vec![2000],
            ms: vec![100, 200, 400, 800],
            dims: 32,
            methods: vec![SelectionMethod::Herding, SelectionMethod::Fast],
            repetitions: 5,
            warmups: 2,
            min_sample_secs: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub method: SelectionMethod,
    pub n: usize,
    pub m: usize,
    pub dims: usize,
    pub repetitions: usize,
    pub inner_iterations: usize,
    pub median_secs: f64,
    pub q1_secs: f64,
    pub q3_secs: f64,
    pub iqr_secs: f64,
    /// Predicted comparison count.
    pub cost_model: f64,
}

/// Standard-normal `n × dims` matrix shared by all methods and `m` values.
pub fn bench_matrix(n: usize, dims: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).rotate_left(32));
    let data = (0..n * dims).map(|_| rng.sample(StandardNormal)).collect();
    FeatureMatrix::from_vec(n, dims, data).expect("shape matches")
}

/// Median and spread of `repetitions` timed samples of one selection call,
/// after `warmups` discarded calls.
pub fn time_selection(
    features: &FeatureMatrix,
    mean: &ClassMean,
    m: usize,
    method: SelectionMethod,
    cfg: &BenchConfig,
) -> Result<BenchResult> {
    let call = || select(features, mean, m, method).map(|r| std::hint::black_box(r.indices.len()));
    let mut probe = f64::INFINITY;
    for _ in 0..cfg.warmups.max(1) {
        let t = Instant::now();
        call()?;
        probe = probe.min(t.elapsed().as_secs_f64());
    }
    let inner = ((cfg.min_sample_secs / probe.max(1e-9)).ceil() as usize).max(1);
    let mut samples = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let t = Instant::now();
        for _ in 0..inner {
            call()?;
        }
        samples.push(t.elapsed().as_secs_f64() / inner as f64);
    }
    let s = summarize(&samples).expect("repetitions >= 5");
    Ok(BenchResult {
        method,
        n: features.rows(),
        m,
        dims: features.cols(),
        repetitions: cfg.repetitions,
        inner_iterations: inner,
        median_secs: s.median,
        q1_secs: s.q1,
        q3_secs: s.q3,
        iqr_secs: s.iqr,
        cost_model: selection_cost_model(features.rows(), m, method),
    })
}

/// Times every (n, m, method) cell serially on this thread. Cells with
/// `m > n` are skipped.
pub fn bench_selection(cfg: &BenchConfig) -> Result<Vec<BenchResult>> {
    ensure!(cfg.repetitions >= 5, "at least 5 timed repetitions are required, got {}", cfg.repetitions);
    ensure!(cfg.dims >= 1, "feature dimension must be at least 1");
    let mut out = Vec::new();
    for &n in &cfg.ns {
        let features = bench_matrix(n, cfg.dims, cfg.seed);
        let mean = compute_class_mean(&features)?;
        for &m in &cfg.ms {
            if m == 0 || m > n {
                log::warn!("skipping m={m} for n={n}");
                continue;
            }
            for &method in &cfg.methods {
                let r = time_selection(&features, &mean, m, method, cfg)?;
                log::info!("{method} n={n} m={m}: median {:.6}s", r.median_secs);
                out.push(r);
            }
        }
    }
    Ok(out)
}

pub fn bench_csv(results: &[BenchResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Config(format!("writing benchmark table: {e}"));
    w.write_record([
        "method", "n", "m", "dims", "repetitions", "inner_iterations", "median_secs", "q1_secs", "q3_secs",
        "iqr_secs", "cost_model",
    ])
    .map_err(err)?;
    for r in results {
        w.write_record([
            r.method.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.dims.to_string(),
            r.repetitions.to_string(),
            r.inner_iterations.to_string(),
            format!("{:.9}", r.median_secs),
            format!("{:.9}", r.q1_secs),
            format!("{:.9}", r.q3_secs),
            format!("{:.9}", r.iqr_secs),
            format!("{:.0}", r.cost_model),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("writing benchmark table: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

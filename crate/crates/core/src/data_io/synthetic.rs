use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{ensure, Error, Result};
use crate::tensor_nn::Tensor2;

/// Parameters of an isotropic Gaussian-blob dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: u32,
    pub per_class: usize,
    pub dims: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 6,
            per_class: 200,
            dims: 16,
            separation: 6.0,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn generate(&self) -> Result<LabeledDataset> {
        generate_blobs(self.classes, self.per_class, self.dims, self.separation, self.seed)
    }
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

fn class_means(classes: usize, dims: usize, separation: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let half_width = separation * (classes as f64).powf(1.0 / dims as f64);
    class_means_in_box(classes, dims, separation, half_width, rng)
}

/// Means placed in `[-half_width, half_width]^dims`: axis-aligned when
/// `classes <= dims`, otherwise by rejection sampling.
fn class_means_in_box(
    classes: usize,
    dims: usize,
    separation: f64,
    half_width: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    if classes <= dims {
        // scaled, sign-flipped basis vectors on random axes: every pair is
        // exactly `separation` apart
        let mut axes: Vec<usize> = (0..dims).collect();
        axes.shuffle(rng);
        let r = separation / std::f64::consts::SQRT_2;
        return Ok(axes[..classes]
            .iter()
            .map(|&a| {
                let mut m = vec![0.0; dims];
                m[a] = if rng.random::<bool>() { r } else { -r };
                m
            })
            .collect());
    }
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while means.len() < classes {
        let placed = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let cand: Vec<f64> = (0..dims).map(|_| rng.random_range(-half_width..=half_width)).collect();
            let ok = means.iter().all(|m| {
                m.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= separation
            });
            ok.then_some(cand)
        });
        match placed {
            Some(c) => means.push(c),
            None => {
                return Err(Error::contract(format!(
                    "could not place {classes} means {separation} apart in {dims} dimensions"
                )))
            }
        }
    }
    Ok(means)
}

/// `classes` unit-variance Gaussian clusters of `per_class` samples each,
/// with cluster means pairwise at least `separation` apart. Rows are grouped
/// by class. Identical arguments give identical datasets.
pub fn generate_blobs(
    classes: u32,
    per_class: usize,
    dims: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    ensure!(classes >= 2, "need at least 2 classes, got {classes}");
    ensure!(per_class >= 4, "need at least 4 samples per class, got {per_class}");
    ensure!(dims >= 2, "need at least 2 dimensions, got {dims}");
    ensure!(separation.is_finite() && separation >= 0.0, "separation must be finite and non-negative");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = class_means(classes as usize, dims, separation, &mut rng)?;
    let n = classes as usize * per_class;
    let mut data = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &mu in mean {
                let z: f64 = rng.sample(StandardNormal);
                data.push((mu + z) as f32);
            }
            labels.push(c as u32);
        }
    }
    let name = format!("blobs-c{classes}-n{per_class}-d{dims}-s{separation}");
    LabeledDataset::new(name, Tensor2::from_vec(n, dims, data)?, labels, classes)
}

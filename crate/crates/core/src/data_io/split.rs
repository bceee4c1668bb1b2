use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{ensure, Error, Result};

/// Stratified hold-out split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.10,
            seed: 0,
        }
    }
}

impl SplitSpec {
    /// Test samples taken from a class of `size`: `max(1, round(fraction × size))`.
    pub fn test_count(&self, size: usize) -> usize {
        ((self.test_fraction * size as f64).round() as usize).max(1)
    }
}

/// Splits every class independently into test and train parts.
///
/// Returns `(train, test)`; both keep the original row order.
pub fn split(dataset: &LabeledDataset, spec: &SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    ensure!(
        spec.test_fraction > 0.0 && spec.test_fraction < 1.0,
        "test fraction must lie in (0, 1), got {}",
        spec.test_fraction
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut is_test = vec![false; dataset.len()];
    for c in 0..dataset.class_count() {
        let mut idx = dataset.class_indices(c);
        if idx.len() < 2 {
            return Err(Error::contract(format!(
                "class {c} has {} samples; at least 2 are needed to split",
                idx.len()
            )));
        }
        let k = spec.test_count(idx.len());
        ensure!(k < idx.len(), "class {c}: test fraction leaves no training samples");
        idx.shuffle(&mut rng);
        for &i in &idx[..k] {
            is_test[i] = true;
        }
    }
    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| is_test[i]);
    let train = dataset.subset(&train_idx, format!("{}-train", dataset.name()));
    let test = dataset.subset(&test_idx, format!("{}-test", dataset.name()));
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_nn::Tensor2;

    fn dataset(sizes: &[usize]) -> LabeledDataset {
        let labels: Vec<u32> = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c as u32, n))
            .collect();
        let x: Vec<f32> = (0..labels.len()).map(|i| i as f32).collect();
        LabeledDataset::new("t", Tensor2::from_vec(labels.len(), 1, x).unwrap(), labels, sizes.len() as u32).unwrap()
    }

    #[test]
    fn ten_percent_per_class() {
        let d = dataset(&[100, 100, 9]);
        let (train, test) = split(&d, &SplitSpec::default()).unwrap();
        assert_eq!(test.class_sizes(), vec![10, 10, 1]);
        assert_eq!(train.class_sizes(), vec![90, 90, 8]);
    }

    #[test]
    fn partition_property() {
        let d = dataset(&[17, 33, 5, 2]);
        let (train, test) = split(&d, &SplitSpec { test_fraction: 0.25, seed: 4 }).unwrap();
        // features are the original row ids
        let mut all: Vec<f32> = train.features().data().iter().chain(test.features().data()).copied().collect();
        all.sort_by(f32::total_cmp);
        assert_eq!(all, (0..d.len()).map(|i| i as f32).collect::<Vec<_>>());
        assert!(train.features().data().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn deterministic_per_seed() {
        let d = dataset(&[50, 50]);
        let a = split(&d, &SplitSpec { test_fraction: 0.1, seed: 1 }).unwrap();
        let b = split(&d, &SplitSpec { test_fraction: 0.1, seed: 1 }).unwrap();
        let c = split(&d, &SplitSpec { test_fraction: 0.1, seed: 2 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn rejects_tiny_classes() {
        assert!(split(&dataset(&[10, 1]), &SplitSpec::default()).is_err());
        assert!(split(&dataset(&[10, 0]), &SplitSpec::default()).is_err());
        assert!(split(&dataset(&[10, 10]), &SplitSpec { test_fraction: 1.0, seed: 0 }).is_err());
        assert!(split(&dataset(&[2, 2]), &SplitSpec { test_fraction: 0.8, seed: 0 }).is_err());
    }
}

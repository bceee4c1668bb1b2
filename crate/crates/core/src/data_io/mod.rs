//! Datasets: the `FDSF` feature-file format, synthetic generators, and
//! stratified train/test splitting.

mod fdsf;
mod split;
mod synthetic;

pub use fdsf::{FDSF_MAGIC, FDSF_VERSION};
pub use split::{split, SplitSpec};
pub use synthetic::{generate_blobs, BlobSpec};

use crate::error::{ensure, Result};
use crate::tensor_nn::Tensor2;

/// Feature rows with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    name: String,
    features: Tensor2<f32>,
    labels: Vec<u32>,
    class_count: u32,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, features: Tensor2<f32>, labels: Vec<u32>, class_count: u32) -> Result<Self> {
        ensure!(
            labels.len() == features.rows(),
            "{} labels for {} rows",
            labels.len(),
            features.rows()
        );
        ensure!(class_count <= u16::MAX as u32 + 1, "at most 65536 classes, got {class_count}");
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= class_count) {
            return Err(crate::Error::contract(format!(
                "label {y} at row {i} is not below class count {class_count}"
            )));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            class_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Tensor2<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    /// Samples per class id, indexed by class.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count as usize];
        for &y in &self.labels {
            sizes[y as usize] += 1;
        }
        sizes
    }

    /// Row indices belonging to `class_id`, ascending.
    pub fn class_indices(&self, class_id: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &y)| (y == class_id).then_some(i))
            .collect()
    }

    /// Feature rows of one class.
    pub fn class_rows(&self, class_id: u32) -> Tensor2<f32> {
        self.features.select_rows(&self.class_indices(class_id))
    }

    /// Rows whose label is in `classes`, with their labels.
    pub fn rows_of_classes(&self, classes: &[u32]) -> (Tensor2<f32>, Vec<u32>) {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| classes.contains(&self.labels[i])).collect();
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        (self.features.select_rows(&idx), labels)
    }

    /// New dataset made of the given rows (in the given order).
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::quantization::{storage_bytes, Bits, StorageBytes};

/// Dataset shape used for storage accounting without loading any data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoragePreset {
    pub name: String,
    pub clips: usize,
    pub classes: usize,
    /// Elements per sample.
    pub input_dims: usize,
    pub test_fraction: f64,
    pub budget_fraction: f64,
}

impl StoragePreset {
    /// 8 732 clips, 10 classes, 128 × 85 filter-bank frames, 10% test
    /// split, 20% exemplar budget.
    pub fn urbansound8k() -> Self {
        Self {
            name: "UrbanSound8K".into(),
            clips: 8732,
            classes: 10,
            input_dims: 128 * 85,
            test_fraction: 0.10,
            budget_fraction: 0.20,
        }
    }

    pub fn train_samples(&self) -> usize {
        self.clips - (self.test_fraction * self.clips as f64).round() as usize
    }

    /// `floor(budget × train samples)`.
    pub fn total_exemplars(&self) -> usize {
        (self.budget_fraction * self.train_samples() as f64).floor() as usize
    }

    /// Exemplars per class: equal shares, remainder to the lowest ids.
    pub fn per_class(&self) -> Vec<usize> {
        let t = self.total_exemplars();
        let k = self.classes.max(1);
        (0..k).map(|c| t / k + usize::from(c < t % k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageRow {
    pub bits: Bits,
    /// Model bytes M (f32 parameters).
    pub model_bytes: u64,
    /// Exemplar bytes B.
    pub exemplar: StorageBytes,
}

impl StorageRow {
    pub fn total(&self) -> u64 {
        self.model_bytes + self.exemplar.total()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub preset: StoragePreset,
    pub train_samples: usize,
    pub exemplars: usize,
    pub model_params: usize,
    pub rows: Vec<StorageRow>,
}

/// Parameter count of the MLP used by the learner: `input → hidden… →
/// feature → classes`.
pub fn mlp_param_count(input: usize, hidden: &[usize], feature_dim: usize, classes: usize) -> usize {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(feature_dim);
    dims.push(classes);
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

pub fn verify_storage(preset: &StoragePreset, bits: &[Bits], hidden: &[usize], feature_dim: usize) -> StorageReport {
    let model_params = mlp_param_count(preset.input_dims, hidden, feature_dim, preset.classes);
    let per_class = preset.per_class();
    let rows = bits
        .iter()
        .map(|&b| StorageRow {
            bits: b,
            model_bytes: model_params as u64 * 4,
            exemplar: per_class.iter().map(|&m| storage_bytes(m as u64, preset.input_dims as u64, b)).sum(),
        })
        .collect();
    StorageReport {
        preset: preset.clone(),
        train_samples: preset.train_samples(),
        exemplars: preset.total_exemplars(),
        model_params,
        rows,
    }
}

impl std::fmt::Display for StorageReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mb = |b: u64| b as f64 / 1e6;
        writeln!(
            f,
            "{}: {} train samples, {} exemplars over {} classes, {} elements each",
            self.preset.name, self.train_samples, self.exemplars, self.preset.classes, self.preset.input_dims
        )?;
        writeln!(f, "{:>4}  {:>12}  {:>14}  {:>10}  {:>14}  {:>10}", "bits", "M (bytes)", "B payload", "B meta", "B total", "B (MB)")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>4}  {:>12}  {:>14}  {:>10}  {:>14}  {:>10.2}",
                r.bits,
                r.model_bytes,
                r.exemplar.payload,
                r.exemplar.metadata(),
                r.exemplar.total(),
                mb(r.exemplar.total())
            )?;
        }
        Ok(())
    }
}

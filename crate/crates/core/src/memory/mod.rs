//! Replay memory: per-class exemplar sets kept under a global budget.
//!
//! Exemplars are stored in raw input space (quantized), so they can be mixed
//! into later training batches and re-featurized whenever the extractor
//! changes. Sets are ordered so that any prefix is itself a valid selection,
//! which makes shrinking a set to a smaller quota a plain truncation.

mod snapshot;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use snapshot::{SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use crate::error::{ensure, Error, Result};
use crate::quantization::{dequantize, quantize_fitted, storage_bytes, Bits, QuantizedVector, StorageBytes};
use crate::selection::{compute_class_mean, select, SelectionMethod};
use crate::tensor_nn::{MlpModel, Tensor2};

/// Exemplars retained for one class, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarSet {
    class_id: u32,
    method: SelectionMethod,
    bits: Bits,
    dims: usize,
    exemplars: Vec<QuantizedVector>,
    distances: Vec<f32>,
    source_indices: Vec<u32>,
}

/// Wall time spent in each phase of [`build_exemplar_set_timed`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BuildTiming {
    pub feature_extraction: Duration,
    /// class mean plus exemplar search
    pub selection: Duration,
    pub quantization: Duration,
}

impl ExemplarSet {
    /// Assembles a set from parts, checking the structural invariants.
    pub fn from_parts(
        class_id: u32,
        method: SelectionMethod,
        bits: Bits,
        dims: usize,
        exemplars: Vec<QuantizedVector>,
        distances: Vec<f32>,
        source_indices: Vec<u32>,
    ) -> Result<Self> {
        ensure!(
            distances.len() == exemplars.len() && source_indices.len() == exemplars.len(),
            "class {class_id}: {} exemplars, {} distances, {} indices",
            exemplars.len(),
            distances.len(),
            source_indices.len()
        );
        for (k, e) in exemplars.iter().enumerate() {
            ensure!(e.bits() == bits, "class {class_id}: exemplar {k} stored at {} bits, set is {bits}", e.bits());
            ensure!(e.len() == dims, "class {class_id}: exemplar {k} has {} elements, expected {dims}", e.len());
        }
        if method == SelectionMethod::Fast {
            ensure!(
                distances.windows(2).all(|w| w[0] <= w[1]),
                "class {class_id}: fast-selected distances must be non-decreasing"
            );
        }
        Ok(Self {
            class_id,
            method,
            bits,
            dims,
            exemplars,
            distances,
            source_indices,
        })
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn method(&self) -> SelectionMethod {
        self.method
    }

    pub fn bits(&self) -> Bits {
        self.bits
    }

    /// Elements per exemplar.
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn exemplars(&self) -> &[QuantizedVector] {
        &self.exemplars
    }

    pub fn distances(&self) -> &[f32] {
        &self.distances
    }

    /// Row of each exemplar within the class data it was selected from.
    pub fn source_indices(&self) -> &[u32] {
        &self.source_indices
    }

    /// Exemplars decoded back to `f32`, one per row.
    pub fn dequantized(&self) -> Tensor2<f32> {
        let mut data = Vec::with_capacity(self.len() * self.dims);
        for e in &self.exemplars {
            data.extend(dequantize(e));
        }
        Tensor2::from_vec(self.len(), self.dims, data).expect("exemplar lengths checked")
    }

    pub fn storage(&self) -> StorageBytes {
        storage_bytes(self.len() as u64, self.dims as u64, self.bits)
    }

    /// Keeps the first `new_m` exemplars.
    pub fn trim(&mut self, new_m: usize) -> Result<()> {
        ensure!(new_m >= 1, "class {}: cannot trim to zero exemplars", self.class_id);
        ensure!(
            new_m <= self.len(),
            "class {}: cannot trim {} exemplars up to {new_m}",
            self.class_id,
            self.len()
        );
        self.exemplars.truncate(new_m);
        self.distances.truncate(new_m);
        self.source_indices.truncate(new_m);
        Ok(())
    }

    /// Copy of the set trimmed to `new_m`.
    pub fn trimmed(&self, new_m: usize) -> Result<Self> {
        let mut s = self.clone();
        s.trim(new_m)?;
        Ok(s)
    }
}

/// Selects `m` exemplars of `class_data` in the model's feature space and
/// stores the corresponding raw inputs at `bits` precision.
pub fn build_exemplar_set(
    class_id: u32,
    class_data: &Tensor2<f32>,
    model: &MlpModel<f32>,
    m: usize,
    bits: Bits,
    method: SelectionMethod,
) -> Result<ExemplarSet> {
    build_exemplar_set_timed(class_id, class_data, model, m, bits, method).map(|(s, _)| s)
}

/// [`build_exemplar_set`] with a per-phase timing breakdown.
pub fn build_exemplar_set_timed(
    class_id: u32,
    class_data: &Tensor2<f32>,
    model: &MlpModel<f32>,
    m: usize,
    bits: Bits,
    method: SelectionMethod,
) -> Result<(ExemplarSet, BuildTiming)> {
    ensure!(class_data.rows() > 0, "class {class_id}: no samples to select exemplars from");
    let t0 = Instant::now();
    let features = model.forward_features(class_data)?;
    let t1 = Instant::now();
    let mean = compute_class_mean(&features)?;
    let picked = select(&features, &mean, m, method)?;
    let t2 = Instant::now();
    let exemplars = picked
        .indices
        .iter()
        .map(|&i| quantize_fitted(class_data.row(i), bits))
        .collect::<Result<Vec<_>>>()?;
    let t3 = Instant::now();

    let set = ExemplarSet {
        class_id,
        method,
        bits,
        dims: class_data.cols(),
        exemplars,
        distances: picked.distances,
        source_indices: picked.indices.iter().map(|&i| i as u32).collect(),
    };
    let timing = BuildTiming {
        feature_extraction: t1 - t0,
        selection: t2 - t1,
        quantization: t3 - t2,
    };
    Ok((set, timing))
}

/// Scales a vector to unit Euclidean length (zero vectors are left as is).
pub fn l2_normalize(v: &mut [f32]) {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x = (*x as f64 / norm) as f32;
        }
    }
}

/// Mean feature vector of the (dequantized) exemplars under `model`.
///
/// With `normalize`, each feature vector is L2-normalized before averaging
/// and the mean is normalized again.
pub fn exemplar_class_mean(set: &ExemplarSet, model: &MlpModel<f32>, normalize: bool) -> Result<Vec<f32>> {
    ensure!(!set.is_empty(), "class {}: empty exemplar set has no mean", set.class_id);
    let mut features = model.forward_features(&set.dequantized())?;
    if normalize {
        for i in 0..features.rows() {
            l2_normalize(features.row_mut(i));
        }
    }
    let mut mean = compute_class_mean(&features)?.mean;
    if normalize {
        l2_normalize(&mut mean);
    }
    Ok(mean)
}

/// Total exemplar budget as a fraction of the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPolicy {
    fraction: f64,
    total_budget: usize,
}

impl BudgetPolicy {
    /// `total_budget = floor(fraction × training_samples)`.
    pub fn from_fraction(fraction: f64, training_samples: usize) -> Result<Self> {
        ensure!(
            fraction > 0.0 && fraction <= 1.0,
            "budget fraction must lie in (0, 1], got {fraction}"
        );
        Ok(Self {
            fraction,
            total_budget: (fraction * training_samples as f64).floor() as usize,
        })
    }

    pub fn with_total(fraction: f64, total_budget: usize) -> Self {
        Self {
            fraction,
            total_budget,
        }
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn total_budget(&self) -> usize {
        self.total_budget
    }

    /// Per-class quotas: `floor(total / k)` each, with the remainder handed
    /// out one apiece to the lowest class ids.
    pub fn quotas(&self, class_ids: &[u32]) -> Result<BTreeMap<u32, usize>> {
        let mut ids = class_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let k = ids.len();
        ensure!(k >= 1, "quotas need at least one class");
        ensure!(
            self.total_budget >= k,
            "budget of {} exemplars cannot give {k} classes one exemplar each",
            self.total_budget
        );
        let base = self.total_budget / k;
        let extra = self.total_budget % k;
        Ok(ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, base + usize::from(i < extra)))
            .collect())
    }
}

/// All exemplar sets plus the budget they share.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMemory {
    budget: BudgetPolicy,
    sets: BTreeMap<u32, ExemplarSet>,
}

impl ReplayMemory {
    pub fn new(budget: BudgetPolicy) -> Self {
        Self {
            budget,
            sets: BTreeMap::new(),
        }
    }

    pub fn budget(&self) -> &BudgetPolicy {
        &self.budget
    }

    /// Sets in ascending class-id order.
    pub fn sets(&self) -> impl ExactSizeIterator<Item = &ExemplarSet> + '_ {
        self.sets.values()
    }

    pub fn get(&self, class_id: u32) -> Option<&ExemplarSet> {
        self.sets.get(&class_id)
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.sets.keys().copied().collect()
    }

    pub fn num_classes(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn total_exemplars(&self) -> usize {
        self.sets.values().map(ExemplarSet::len).sum()
    }

    /// Replay storage summed over all sets.
    pub fn storage(&self) -> StorageBytes {
        self.sets.values().map(ExemplarSet::storage).sum()
    }

    pub fn insert(&mut self, set: ExemplarSet) -> Result<()> {
        ensure!(!set.is_empty(), "class {}: refusing to store an empty exemplar set", set.class_id);
        if self.sets.contains_key(&set.class_id) {
            return Err(Error::contract(format!("class {} already has an exemplar set", set.class_id)));
        }
        if let Some(other) = self.sets.values().next() {
            ensure!(
                other.dims == set.dims,
                "class {}: exemplars have {} elements, memory holds {}",
                set.class_id,
                set.dims,
                other.dims
            );
        }
        self.sets.insert(set.class_id, set);
        Ok(())
    }

    /// Trims every stored set to its quota over `class_ids` (which may include
    /// classes not yet stored) and returns the quotas. Sets already below
    /// quota are left alone.
    pub fn rebalance(&mut self, class_ids: &[u32]) -> Result<BTreeMap<u32, usize>> {
        let mut all: Vec<u32> = self.sets.keys().copied().chain(class_ids.iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        let quotas = self.budget.quotas(&all)?;
        for (id, set) in self.sets.iter_mut() {
            let q = quotas[id];
            if set.len() > q {
                set.trim(q)?;
            }
        }
        Ok(quotas)
    }

    /// Every exemplar decoded, with the class id of each row.
    pub fn replay_data(&self) -> (Tensor2<f32>, Vec<u32>) {
        let dims = self.sets.values().next().map_or(0, |s| s.dims);
        let mut data = Vec::with_capacity(self.total_exemplars() * dims);
        let mut labels = Vec::with_capacity(self.total_exemplars());
        for set in self.sets.values() {
            for e in &set.exemplars {
                data.extend(dequantize(e));
                labels.push(set.class_id);
            }
        }
        let rows = labels.len();
        (
            Tensor2::from_vec(rows, if rows == 0 { 0 } else { dims }, data).expect("uniform dims"),
            labels,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::fast_select;
    use crate::tensor_nn::Dense;

    /// Model whose feature layer is the identity on 2-D inputs.
    fn identity_model(classes: usize) -> MlpModel<f32> {
        let mut feat = Dense::zeros(2, 2);
        feat.weight.set(0, 0, 1.0);
        feat.weight.set(1, 1, 1.0);
        MlpModel::from_layers(vec![feat, Dense::zeros(2, classes)]).unwrap()
    }

    fn data() -> Tensor2<f32> {
        let rows: Vec<[f32; 2]> = (0..10)
            .map(|i| [((i * 7) % 11) as f32 - 5.0, ((i * 3) % 5) as f32])
            .collect();
        Tensor2::from_rows(&rows).unwrap()
    }

    #[test]
    fn full_set_at_32_bits_is_lossless() {
        let x = data();
        let set = build_exemplar_set(4, &x, &identity_model(2), 10, Bits::B32, SelectionMethod::Fast).unwrap();
        assert_eq!(set.len(), 10);
        let mut idx = set.source_indices().to_vec();
        idx.sort();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
        let back = set.dequantized();
        for (k, &i) in set.source_indices().iter().enumerate() {
            assert_eq!(back.row(k), x.row(i as usize));
        }
    }

    #[test]
    fn two_clusters_m1_picks_sample_nearest_combined_mean() {
        let rows = [[-10.0f32, 0.0], [-9.0, 1.0], [-11.0, -1.0], [10.0, 0.0], [9.5, 0.5], [0.8, 0.1], [11.0, 0.0]];
        let x = Tensor2::from_rows(&rows).unwrap();
        // combined mean ≈ (0.19, 0.09); by full sort the nearest sample is row 5
        let mu = [rows.iter().map(|r| r[0] as f64).sum::<f64>() / 7.0, rows.iter().map(|r| r[1] as f64).sum::<f64>() / 7.0];
        let mut order: Vec<usize> = (0..7).collect();
        order.sort_by(|&a, &b| {
            let da = (rows[a][0] as f64 - mu[0]).hypot(rows[a][1] as f64 - mu[1]);
            let db = (rows[b][0] as f64 - mu[0]).hypot(rows[b][1] as f64 - mu[1]);
            da.total_cmp(&db).then(a.cmp(&b))
        });
        let model = identity_model(2);
        let fast = build_exemplar_set(0, &x, &model, 1, Bits::B32, SelectionMethod::Fast).unwrap();
        let herd = build_exemplar_set(0, &x, &model, 1, Bits::B32, SelectionMethod::Herding).unwrap();
        assert_eq!(fast.source_indices(), &[order[0] as u32]);
        assert_eq!(herd.source_indices(), fast.source_indices());
    }

    #[test]
    fn trim_examples() {
        let x = data();
        let model = identity_model(2);
        let set = build_exemplar_set(1, &x, &model, 10, Bits::B8, SelectionMethod::Fast).unwrap();
        assert_eq!(set.trimmed(10).unwrap(), set);
        let small = build_exemplar_set(1, &x, &model, 4, Bits::B8, SelectionMethod::Fast).unwrap();
        assert_eq!(set.trimmed(4).unwrap(), small);
        assert!(set.trimmed(0).is_err());
        assert!(small.trimmed(5).is_err());

        let features = model.forward_features(&x).unwrap();
        let mu = compute_class_mean(&features).unwrap();
        let direct = fast_select(&features, &mu, 4).unwrap();
        assert_eq!(small.source_indices(), direct.indices.iter().map(|&i| i as u32).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn exemplar_mean_examples() {
        let x = data();
        let model = identity_model(2);
        let one = build_exemplar_set(0, &x, &model, 1, Bits::B32, SelectionMethod::Fast).unwrap();
        let i = one.source_indices()[0] as usize;
        assert_eq!(exemplar_class_mean(&one, &model, false).unwrap(), x.row(i));

        let all = build_exemplar_set(0, &x, &model, 10, Bits::B32, SelectionMethod::Herding).unwrap();
        let got = exemplar_class_mean(&all, &model, false).unwrap();
        let want = compute_class_mean(&x).unwrap().mean;
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-5);
        }

        let normed = exemplar_class_mean(&all, &model, true).unwrap();
        let norm: f32 = normed.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quotas_hand_out_remainder_to_low_ids() {
        let b = BudgetPolicy::with_total(0.1, 10);
        let q = b.quotas(&[7, 2, 5]).unwrap();
        assert_eq!(q.into_iter().collect::<Vec<_>>(), vec![(2, 4), (5, 3), (7, 3)]);
        assert!(BudgetPolicy::with_total(0.1, 2).quotas(&[0, 1, 2]).is_err());
        assert!(BudgetPolicy::from_fraction(0.0, 100).is_err());
        assert!(BudgetPolicy::from_fraction(1.5, 100).is_err());
    }

    #[test]
    fn five_percent_of_two_hundred() {
        let b = BudgetPolicy::from_fraction(0.05, 200).unwrap();
        assert_eq!(b.total_budget(), 10);
        assert_eq!(b.quotas(&[0, 1]).unwrap().values().copied().collect::<Vec<_>>(), vec![5, 5]);
    }

    #[test]
    fn rebalance_trims_to_new_quota() {
        let model = identity_model(2);
        let rows: Vec<[f32; 2]> = (0..20).map(|i| [i as f32 * 0.1, (i % 3) as f32]).collect();
        let x = Tensor2::from_rows(&rows).unwrap();
        let mut mem = ReplayMemory::new(BudgetPolicy::with_total(0.1, 60));
        for c in 0..5 {
            mem.insert(build_exemplar_set(c, &x, &model, 12, Bits::B16, SelectionMethod::Fast).unwrap()).unwrap();
        }
        let quotas = mem.rebalance(&[5]).unwrap();
        assert_eq!(quotas.len(), 6);
        assert!(quotas.values().all(|&q| q == 10));
        assert!(mem.sets().all(|s| s.len() == 10));
        assert_eq!(mem.total_exemplars(), 50);
        assert!(mem.insert(build_exemplar_set(0, &x, &model, 2, Bits::B16, SelectionMethod::Fast).unwrap()).is_err());
        let (replay, labels) = mem.replay_data();
        assert_eq!(replay.shape(), (50, 2));
        assert_eq!(labels.iter().filter(|&&l| l == 3).count(), 10);
    }
}

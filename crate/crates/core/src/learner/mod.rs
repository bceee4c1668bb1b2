//! Class-incremental protocol: base task, replay training with
//! distillation, exemplar maintenance and nearest-class-mean inference.

mod metrics;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{accuracy, weighted_f1};

use crate::data_io::LabeledDataset;
use crate::error::{ensure, Error, Result};
use crate::memory::{build_exemplar_set_timed, exemplar_class_mean, l2_normalize, BudgetPolicy, ReplayMemory};
use crate::quantization::Bits;
use crate::selection::SelectionMethod;
use crate::tensor_nn::{loss_and_grads, AdamConfig, AdamState, MlpModel, Tensor2};

/// How old classes are protected while new ones are learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IlMethod {
    /// Plain fine-tuning; no exemplars, no distillation.
    None,
    /// Herding-selected exemplars.
    Icarl,
    /// Heap-selected nearest-to-mean exemplars.
    FastIcarl,
}

impl IlMethod {
    pub fn selection(self) -> Option<SelectionMethod> {
        match self {
            IlMethod::None => None,
            IlMethod::Icarl => Some(SelectionMethod::Herding),
            IlMethod::FastIcarl => Some(SelectionMethod::Fast),
        }
    }
}

/// Ordered groups of classes, one group per task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchedule {
    class_groups: Vec<Vec<u32>>,
}

impl TaskSchedule {
    /// Classes `0..N/2` as the base task, then one class per task:
    /// `1 + N/2` tasks in total. `N` must be even and at least 2.
    pub fn half_then_single(num_classes: u32) -> Result<Self> {
        ensure!(
            num_classes >= 2 && num_classes.is_multiple_of(2),
            "the class-incremental schedule needs an even class count >= 2, got {num_classes}"
        );
        let half = num_classes / 2;
        let mut groups = vec![(0..half).collect::<Vec<_>>()];
        groups.extend((half..num_classes).map(|c| vec![c]));
        Self::from_groups(groups)
    }

    /// Arbitrary non-empty, pairwise disjoint groups.
    pub fn from_groups(class_groups: Vec<Vec<u32>>) -> Result<Self> {
        ensure!(!class_groups.is_empty(), "schedule has no tasks");
        let mut seen = std::collections::BTreeSet::new();
        for (t, g) in class_groups.iter().enumerate() {
            ensure!(!g.is_empty(), "task {t} has no classes");
            for &c in g {
                ensure!(seen.insert(c), "class {c} appears in more than one task");
            }
        }
        Ok(Self { class_groups })
    }

    pub fn groups(&self) -> &[Vec<u32>] {
        &self.class_groups
    }

    pub fn num_tasks(&self) -> usize {
        self.class_groups.len()
    }

    pub fn all_classes(&self) -> Vec<u32> {
        self.class_groups.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub method: IlMethod,
    pub bits: Bits,
    /// Exemplar budget as a fraction of all training samples.
    pub budget_fraction: f64,
    pub adam: AdamConfig,
    /// Widths of the ReLU hidden layers.
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub epochs_base: usize,
    pub epochs_incremental: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// L2-normalize feature vectors for nearest-class-mean classification.
    pub normalize_features: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            method: IlMethod::FastIcarl,
            bits: Bits::B32,
            budget_fraction: 0.10,
            adam: AdamConfig::default(),
            hidden: vec![64, 64],
            feature_dim: 32,
            epochs_base: 50,
            epochs_incremental: 30,
            batch_size: 32,
            seed: 0,
            normalize_features: false,
        }
    }
}

/// Non-training time spent incorporating a task, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IlTiming {
    /// teacher snapshot and decoding exemplars into the training set
    pub replay_setup: f64,
    /// forward passes over class data ahead of selection
    pub feature_extraction: f64,
    /// class mean and exemplar search
    pub selection: f64,
    pub quantization: f64,
    pub trim: f64,
    /// recomputing exemplar class means for classification
    pub class_means: f64,
}

impl IlTiming {
    pub fn total(&self) -> f64 {
        self.replay_setup + self.feature_extraction + self.selection + self.quantization + self.trim + self.class_means
    }
}

/// Time spent on one task, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskTiming {
    /// forward/backward passes and optimizer steps
    pub train: f64,
    pub il: IlTiming,
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// A model plus replay memory that learns classes task by task.
#[derive(Debug, Clone)]
pub struct IncrementalLearner {
    config: LearnerConfig,
    model: Option<MlpModel<f32>>,
    memory: ReplayMemory,
    /// `classes[j]` is the class id of output unit `j`
    classes: Vec<u32>,
    class_means: BTreeMap<u32, Vec<f32>>,
    input_dim: usize,
    rng: ChaCha8Rng,
}

impl IncrementalLearner {
    /// `training_samples` is the size of the full training set, which fixes
    /// the exemplar budget.
    pub fn new(config: LearnerConfig, input_dim: usize, training_samples: usize) -> Result<Self> {
        ensure!(config.batch_size >= 1, "batch size must be at least 1");
        ensure!(config.feature_dim >= 1, "feature dimension must be at least 1");
        ensure!(input_dim >= 1, "input dimension must be at least 1");
        let budget = if config.method == IlMethod::None {
            BudgetPolicy::with_total(config.budget_fraction, 0)
        } else {
            BudgetPolicy::from_fraction(config.budget_fraction, training_samples)?
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            config,
            model: None,
            memory: ReplayMemory::new(budget),
            classes: Vec::new(),
            class_means: BTreeMap::new(),
            input_dim,
            rng,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn model(&self) -> Option<&MlpModel<f32>> {
        self.model.as_ref()
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    /// Learned class ids in output-unit order.
    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    /// Exemplar class means as of the end of the last task.
    pub fn class_means(&self) -> &BTreeMap<u32, Vec<f32>> {
        &self.class_means
    }

    fn layer_dims(&self, outputs: usize) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.config.hidden);
        dims.push(self.config.feature_dim);
        dims.push(outputs);
        dims
    }

    fn class_data(data: &LabeledDataset, classes: &[u32]) -> Result<Vec<Tensor2<f32>>> {
        classes
            .iter()
            .map(|&c| {
                let rows = data.class_rows(c);
                ensure!(rows.rows() > 0, "no training samples for class {c}");
                Ok(rows)
            })
            .collect()
    }

    /// Trains a fresh model on the first task's classes and stores their
    /// exemplars.
    pub fn train_base_task(&mut self, data: &LabeledDataset, classes: &[u32]) -> Result<TaskTiming> {
        ensure!(self.model.is_none(), "base task already trained");
        ensure!(!classes.is_empty(), "base task has no classes");
        ensure!(data.dims() == self.input_dim, "data has {} features, learner expects {}", data.dims(), self.input_dim);
        let per_class = Self::class_data(data, classes)?;

        let mut model = MlpModel::new(&self.layer_dims(classes.len()), self.config.seed)?;
        self.classes = classes.to_vec();
        let (x, y) = self.stack(&per_class, classes, None)?;
        let train = self.fit(&mut model, &x, &y, self.config.epochs_base, None)?;
        self.model = Some(model);

        let mut il = IlTiming::default();
        self.add_exemplars(classes, &per_class, &mut il)?;
        self.refresh_class_means(&mut il)?;
        Ok(TaskTiming { train, il })
    }

    /// Learns one new class on top of everything learned so far.
    pub fn learn_new_class(&mut self, data: &LabeledDataset, class_id: u32) -> Result<TaskTiming> {
        self.learn_task(data, &[class_id])
    }

    /// Learns a group of new classes: snapshot the current model as the
    /// distillation teacher, widen the head, train on exemplars plus the new
    /// data, then trim old exemplar sets and build the new ones.
    pub fn learn_task(&mut self, data: &LabeledDataset, new_classes: &[u32]) -> Result<TaskTiming> {
        ensure!(self.model.is_some(), "train the base task before adding classes");
        ensure!(!new_classes.is_empty(), "task has no classes");
        for &c in new_classes {
            if self.classes.contains(&c) {
                return Err(Error::contract(format!("class {c} has already been learned")));
            }
        }
        let per_class = Self::class_data(data, new_classes)?;
        let replaying = self.config.method != IlMethod::None;
        let mut il = IlTiming::default();

        let t = Instant::now();
        let mut model = self.model.take().expect("checked above");
        let teacher = replaying.then(|| model.clone());
        let replay = replaying.then(|| self.memory.replay_data());
        il.replay_setup += secs(t.elapsed());

        model.expand_outputs(new_classes.len())?;
        self.classes.extend_from_slice(new_classes);

        let t = Instant::now();
        let (x, y) = self.stack(&per_class, new_classes, replay)?;
        il.replay_setup += secs(t.elapsed());

        let train = self.fit(&mut model, &x, &y, self.config.epochs_incremental, teacher.as_ref());
        self.model = Some(model);
        let train = train?;

        if replaying {
            let t = Instant::now();
            let mut seen = self.memory.class_ids();
            seen.extend_from_slice(new_classes);
            self.memory.rebalance(&seen)?;
            il.trim += secs(t.elapsed());
        }
        self.add_exemplars(new_classes, &per_class, &mut il)?;
        self.refresh_class_means(&mut il)?;
        Ok(TaskTiming { train, il })
    }

    /// Training matrix and output-unit targets: replayed exemplars first,
    /// then the new classes' data.
    fn stack(
        &self,
        per_class: &[Tensor2<f32>],
        classes: &[u32],
        replay: Option<(Tensor2<f32>, Vec<u32>)>,
    ) -> Result<(Tensor2<f32>, Vec<usize>)> {
        let unit = |c: u32| self.classes.iter().position(|&k| k == c).expect("class registered");
        let (mut x, mut y) = match replay {
            Some((rx, ry)) => (rx, ry.into_iter().map(unit).collect()),
            None => (Tensor2::zeros(0, self.input_dim), Vec::new()),
        };
        for (rows, &c) in per_class.iter().zip(classes) {
            x = x.vstack(rows)?;
            y.extend(std::iter::repeat_n(unit(c), rows.rows()));
        }
        Ok((x, y))
    }

    /// Mini-batch Adam over shuffled data; returns the training time in seconds.
    fn fit(
        &mut self,
        model: &mut MlpModel<f32>,
        x: &Tensor2<f32>,
        y: &[usize],
        epochs: usize,
        teacher: Option<&MlpModel<f32>>,
    ) -> Result<f64> {
        let start = Instant::now();
        let mut opt = AdamState::new(model, self.config.adam);
        let mut order: Vec<usize> = (0..x.rows()).collect();
        for epoch in 0..epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.config.batch_size) {
                let bx = x.select_rows(chunk);
                let by: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                let targets = teacher.map(|t| t.forward_logits(&bx)).transpose()?;
                let out = loss_and_grads(model, &bx, &by, targets.as_ref())?;
                if !out.loss.is_finite() {
                    return Err(Error::contract(format!("training diverged in epoch {epoch}: loss {}", out.loss)));
                }
                opt.step(model, &out.grads)?;
            }
        }
        Ok(secs(start.elapsed()))
    }

    fn add_exemplars(&mut self, classes: &[u32], per_class: &[Tensor2<f32>], il: &mut IlTiming) -> Result<()> {
        let Some(method) = self.config.method.selection() else {
            return Ok(());
        };
        let mut seen = self.memory.class_ids();
        seen.extend_from_slice(classes);
        let quotas = self.memory.budget().quotas(&seen)?;
        let model = self.model.as_ref().expect("model trained");
        for (rows, &c) in per_class.iter().zip(classes) {
            let m = quotas[&c].min(rows.rows());
            let (set, timing) = build_exemplar_set_timed(c, rows, model, m, self.config.bits, method)?;
            il.feature_extraction += secs(timing.feature_extraction);
            il.selection += secs(timing.selection);
            il.quantization += secs(timing.quantization);
            self.memory.insert(set)?;
        }
        Ok(())
    }

    fn refresh_class_means(&mut self, il: &mut IlTiming) -> Result<()> {
        if self.config.method == IlMethod::None {
            return Ok(());
        }
        let t = Instant::now();
        let model = self.model.as_ref().expect("model trained");
        self.class_means = self
            .memory
            .sets()
            .map(|s| Ok((s.class_id(), exemplar_class_mean(s, model, self.config.normalize_features)?)))
            .collect::<Result<_>>()?;
        il.class_means += secs(t.elapsed());
        Ok(())
    }

    /// Class predictions: nearest exemplar class mean in feature space for
    /// the replay methods (ties go to the lowest class id), arg-max logit for
    /// [`IlMethod::None`].
    pub fn classify(&self, inputs: &Tensor2<f32>) -> Result<Vec<u32>> {
        let model = self.model.as_ref().ok_or_else(|| Error::contract("classify before training"))?;
        if self.config.method == IlMethod::None {
            return self.predict_argmax(inputs);
        }
        ensure!(!self.class_means.is_empty(), "no exemplar class means to classify against");
        let mut features = model.forward_features(inputs)?;
        (0..features.rows())
            .map(|i| {
                let f = features.row_mut(i);
                if self.config.normalize_features {
                    l2_normalize(f);
                }
                Ok(nearest_mean(f, &self.class_means))
            })
            .collect()
    }

    /// Arg-max over logits, mapped to class ids (ties to the lower output unit).
    pub fn predict_argmax(&self, inputs: &Tensor2<f32>) -> Result<Vec<u32>> {
        let model = self.model.as_ref().ok_or_else(|| Error::contract("predict before training"))?;
        let logits = model.forward_logits(inputs)?;
        Ok(logits
            .iter_rows()
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                self.classes[best]
            })
            .collect())
    }
}

/// Class id whose mean is nearest to `feature`; ties to the lowest id.
pub fn nearest_mean(feature: &[f32], means: &BTreeMap<u32, Vec<f32>>) -> u32 {
    let mut best: Option<(f32, u32)> = None;
    for (&c, mu) in means {
        let d = crate::selection::l2_distance(feature, mu);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, c));
        }
    }
    best.expect("at least one class mean").1
}

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ensure_even_classes, GridMethod, RunConfig};
use super::stats::{summarize, Summary};
use crate::data_io::{split, LabeledDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::learner::{weighted_f1, IlMethod, IlTiming, IncrementalLearner, TaskSchedule, TaskTiming};
use crate::quantization::{Bits, StorageBytes};

/// One (method, bits, budget) combination of the grid. Joint and None
/// cells carry no bits or budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: GridMethod,
    pub bits: Option<Bits>,
    pub budget: Option<f64>,
}

impl Cell {
    /// Summary-table row label, e.g. `FastICARL (8 bits)`.
    pub fn row_label(&self) -> String {
        match (self.method, self.bits) {
            (GridMethod::Joint, _) => "Joint".into(),
            (GridMethod::None, _) => "None".into(),
            (GridMethod::Icarl, Some(b)) => format!("ICARL ({b} bits)"),
            (GridMethod::FastIcarl, Some(b)) => format!("FastICARL ({b} bits)"),
            (m, None) => m.to_string(),
        }
    }

    /// Report file stem, e.g. `fasticarl_8bit_budget0.1`.
    pub fn file_stem(&self) -> String {
        match (self.bits, self.budget) {
            (Some(b), Some(p)) => format!("{}_{b}bit_budget{p}", self.method),
            _ => self.method.to_string(),
        }
    }
}

/// All cells in config order: methods, then bits, then budgets.
pub fn grid_cells(cfg: &RunConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        if method.uses_memory() {
            for &bits in &cfg.bits {
                for &budget in &cfg.budgets {
                    cells.push(Cell { method, bits: Some(bits), budget: Some(budget) });
                }
            }
        } else {
            cells.push(Cell { method, bits: None, budget: None });
        }
    }
    cells
}

/// Measurements after one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: usize,
    /// Every class learned so far, in learning order.
    pub classes: Vec<u32>,
    /// On the test samples of `classes`.
    pub weighted_f1: f64,
    /// Seconds of gradient-based training.
    pub train_time: f64,
    /// Seconds of all other incremental-learning work; equals `il.total()`.
    pub il_time: f64,
    pub il: IlTiming,
    /// Model parameters at 4 bytes each.
    pub model_bytes: u64,
    /// Exemplar memory including metadata.
    pub exemplar_bytes: u64,
    pub exemplar_storage: StorageBytes,
    pub exemplar_counts: BTreeMap<u32, usize>,
    pub total_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repetition: usize,
    pub seed: u64,
    pub tasks: Vec<TaskRecord>,
}

impl RunRecord {
    pub fn final_f1(&self) -> f64 {
        self.tasks.last().map_or(f64::NAN, |t| t.weighted_f1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub final_f1: Summary,
    pub final_f1_per_run: Vec<f64>,
    /// Mean over runs of the summed training seconds.
    pub mean_train_time: f64,
    /// Mean over runs of the summed IL seconds.
    pub mean_il_time: f64,
}

/// Everything measured for one grid cell across its repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: Cell,
    pub label: String,
    pub dataset: String,
    pub config: RunConfig,
    pub runs: Vec<RunRecord>,
    pub aggregate: CellAggregate,
}

impl CellReport {
    fn new(cfg: &RunConfig, cell: Cell, dataset: String, runs: Vec<RunRecord>) -> Self {
        let finals: Vec<f64> = runs.iter().map(RunRecord::final_f1).collect();
        let n = runs.len().max(1) as f64;
        let sum = |f: fn(&TaskRecord) -> f64| runs.iter().flat_map(|r| &r.tasks).map(f).sum::<f64>() / n;
        let aggregate = CellAggregate {
            final_f1: summarize(&finals).expect("at least one repetition"),
            final_f1_per_run: finals,
            mean_train_time: sum(|t| t.train_time),
            mean_il_time: sum(|t| t.il_time),
        };
        Self {
            cell,
            label: cell.row_label(),
            dataset,
            config: cfg.clone(),
            runs,
            aggregate,
        }
    }
}

fn run_seed(cfg: &RunConfig, repetition: usize) -> u64 {
    cfg.seed.wrapping_add(repetition as u64)
}

fn dataset_for_run(cfg: &RunConfig, file: Option<&LabeledDataset>, seed: u64) -> Result<LabeledDataset> {
    let data = match file {
        Some(d) => d.clone(),
        None => cfg.dataset.blob_spec(seed).generate()?,
    };
    ensure_even_classes(data.class_count())?;
    Ok(data)
}

fn record(
    task: usize,
    learner: &IncrementalLearner,
    test: &LabeledDataset,
    timing: TaskTiming,
) -> Result<TaskRecord> {
    let classes = learner.classes().to_vec();
    let (x, y) = test.rows_of_classes(&classes);
    let pred = learner.classify(&x)?;
    let model = learner.model().expect("trained");
    let memory = learner.memory();
    let storage = memory.storage();
    Ok(TaskRecord {
        task,
        classes,
        weighted_f1: weighted_f1(&pred, &y)?,
        train_time: timing.train,
        il_time: timing.il.total(),
        il: timing.il,
        model_bytes: model.num_params() as u64 * 4,
        exemplar_bytes: storage.total(),
        exemplar_storage: storage,
        exemplar_counts: memory.sets().map(|s| (s.class_id(), s.len())).collect(),
        total_budget: memory.budget().total_budget(),
    })
}

/// Runs one repetition of one cell. Depends only on the config, the cell
/// and the repetition index.
pub fn run_single(cfg: &RunConfig, cell: Cell, repetition: usize, file: Option<&LabeledDataset>) -> Result<RunRecord> {
    let seed = run_seed(cfg, repetition);
    let data = dataset_for_run(cfg, file, seed)?;
    let (train, test) = split(&data, &SplitSpec { test_fraction: cfg.dataset.test_fraction, seed })?;
    let schedule = TaskSchedule::half_then_single(data.class_count())?;
    let bits = cell.bits.unwrap_or(Bits::B32);
    let budget = cell.budget.unwrap_or(0.0);

    let mut tasks = Vec::new();
    if cell.method == GridMethod::Joint {
        let mut lc = cfg.learner_config(IlMethod::None, bits, budget, seed);
        lc.epochs_base = cfg.epochs.base * schedule.num_tasks();
        let mut learner = IncrementalLearner::new(lc, train.dims(), train.len())?;
        let timing = learner.train_base_task(&train, &schedule.all_classes())?;
        tasks.push(record(0, &learner, &test, timing)?);
    } else {
        let lc = cfg.learner_config(cell.method.il_method(), bits, budget, seed);
        let mut learner = IncrementalLearner::new(lc, train.dims(), train.len())?;
        for (t, group) in schedule.groups().iter().enumerate() {
            let timing = if t == 0 {
                learner.train_base_task(&train, group)?
            } else {
                learner.learn_task(&train, group)?
            };
            tasks.push(record(t, &learner, &test, timing)?);
        }
    }
    log::info!(
        "{} repetition {repetition} (seed {seed}): final weighted F1 {:.4}",
        cell.row_label(),
        tasks.last().map_or(f64::NAN, |t| t.weighted_f1)
    );
    Ok(RunRecord { repetition, seed, tasks })
}

/// Runs every cell of the grid, `repetitions` times each.
pub fn run_grid(cfg: &RunConfig) -> Result<Vec<CellReport>> {
    cfg.validate()?;
    let file = cfg.dataset.load_file()?;
    let dataset_name = file.as_ref().map_or_else(|| "synthetic-blobs".to_string(), |d| d.name().to_string());
    let cells = grid_cells(cfg);
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..cfg.repetitions).map(move |r| (c, r))).collect();
    let run = |&(c, r): &(usize, usize)| run_single(cfg, cells[c], r, file.as_ref());
    let results: Vec<Result<RunRecord>> = if cfg.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };

    let mut per_cell: Vec<Vec<RunRecord>> = vec![Vec::new(); cells.len()];
    for (&(c, _), res) in jobs.iter().zip(results) {
        per_cell[c].push(res?);
    }
    Ok(cells
        .into_iter()
        .zip(per_cell)
        .map(|(cell, runs)| CellReport::new(cfg, cell, dataset_name.clone(), runs))
        .collect())
}

/// Mean final weighted F1 per row label and budget, shaped with one row per
/// method/bits combination and one column per budget. Joint and None repeat
/// their single value across the budget columns.
pub fn summary_csv(cfg: &RunConfig, reports: &[CellReport]) -> Result<String> {
    let csv_err = |e: csv::Error| Error::Config(format!("writing summary: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method".to_string()];
    header.extend(cfg.budgets.iter().map(|b| b.to_string()));
    w.write_record(&header).map_err(csv_err)?;

    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    for r in reports {
        let value = format!("{:.4}", r.aggregate.final_f1.mean);
        let col = match r.cell.budget {
            Some(b) => cfg.budgets.iter().position(|&x| x == b),
            None => None,
        };
        let idx = match rows.iter().position(|(l, _)| *l == r.label) {
            Some(i) => i,
            None => {
                rows.push((r.label.clone(), vec![String::new(); cfg.budgets.len()]));
                rows.len() - 1
            }
        };
        match col {
            Some(c) => rows[idx].1[c] = value,
            None => rows[idx].1.iter_mut().for_each(|v| *v = value.clone()),
        }
    }
    for (label, values) in rows {
        let mut rec = vec![label];
        rec.extend(values);
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("writing summary: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `<stem>.json` per cell and `summary.csv` into the output
/// directory; returns the written paths.
pub fn write_reports(cfg: &RunConfig, reports: &[CellReport]) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for r in reports {
        let path = dir.join(format!("{}.json", r.cell.file_stem()));
        let json = serde_json::to_string_pretty(r)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    let path = dir.join("summary.csv");
    std::fs::write(&path, summary_csv(cfg, reports)?).map_err(|e| Error::io(&path, e))?;
    paths.push(path);
    Ok(paths)
}

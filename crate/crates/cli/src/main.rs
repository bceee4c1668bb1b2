use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fasticarl::data_io::BlobSpec;
use fasticarl::harness::{
    bench_csv, bench_selection, run_grid, summary_csv, verify_storage, write_reports, BenchConfig, RunConfig,
    StoragePreset,
};
use fasticarl::memory::ReplayMemory;
use fasticarl::quantization::Bits;
use fasticarl::selection::SelectionMethod;

#[derive(Parser)]
#[command(name = "fasticarl", version, about = "Class-incremental learning experiments with compact replay memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid described by a TOML config file.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run grid cells one after another.
        #[arg(long)]
        serial: bool,
    },
    /// Time herding against heap selection on random feature matrices.
    BenchSelection {
        #[arg(long = "n", value_delimiter = ',', default_value = "2000")]
        ns: Vec<usize>,
        #[arg(long = "m", value_delimiter = ',', default_value = "100,200,400,800")]
        ms: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "herding,fast", value_parser = parse_method)]
        methods: Vec<SelectionMethod>,
        #[arg(long, default_value_t = 32)]
        dims: usize,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 2)]
        warmups: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print model and exemplar memory sizes for a dataset shape.
    VerifyStorage {
        /// Start from the UrbanSound8K shape; other flags override it.
        #[arg(long, default_value = "urbansound8k")]
        preset: String,
        #[arg(long)]
        clips: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        /// Elements per sample.
        #[arg(long)]
        dims: Option<usize>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "32,16,8", value_parser = parse_bits)]
        bits: Vec<Bits>,
        #[arg(long, value_delimiter = ',', default_value = "64,64")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 32)]
        feature_dim: usize,
    },
    /// Write a synthetic Gaussian-blob dataset as an FDSF file.
    GenDataset {
        output: PathBuf,
        #[arg(long, default_value_t = 6)]
        classes: u32,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 16)]
        dims: usize,
        #[arg(long, default_value_t = 6.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize an exemplar memory snapshot.
    SnapshotInspect { path: PathBuf },
}

fn parse_method(s: &str) -> Result<SelectionMethod, String> {
    match s.to_ascii_lowercase().as_str() {
        "herding" | "icarl" => Ok(SelectionMethod::Herding),
        "fast" | "fasticarl" => Ok(SelectionMethod::Fast),
        other => Err(format!("unknown selection method `{other}` (expected herding or fast)")),
    }
}

fn parse_bits(s: &str) -> Result<Bits, String> {
    let v: u8 = s.parse().map_err(|_| format!("`{s}` is not a bit width"))?;
    Bits::try_from(v).map_err(|e| e.to_string())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = dispatch(Cli::parse().command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, output_dir, serial } => {
            let mut cfg = RunConfig::from_file(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            if serial {
                cfg.parallel = false;
            }
            let reports = run_grid(&cfg)?;
            let paths = write_reports(&cfg, &reports)?;
            for p in &paths {
                log::info!("wrote {}", p.display());
            }
            print!("{}", summary_csv(&cfg, &reports)?);
        }
        Command::BenchSelection { ns, ms, methods, dims, repetitions, warmups, seed, output } => {
            let cfg = BenchConfig {
                ns,
                ms,
                dims,
                methods,
                repetitions,
                warmups,
                seed,
                ..BenchConfig::default()
            };
            let csv = bench_csv(&bench_selection(&cfg)?)?;
            match output {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::VerifyStorage { preset, clips, classes, dims, test_fraction, budget, bits, hidden, feature_dim } => {
            let mut p = match preset.to_ascii_lowercase().as_str() {
                "urbansound8k" => StoragePreset::urbansound8k(),
                other => bail!("unknown preset `{other}` (available: urbansound8k)"),
            };
            if let Some(v) = clips {
                p.clips = v;
            }
            if let Some(v) = classes {
                p.classes = v;
            }
            if let Some(v) = dims {
                p.input_dims = v;
            }
            if let Some(v) = test_fraction {
                p.test_fraction = v;
            }
            if let Some(v) = budget {
                p.budget_fraction = v;
            }
            if !(0.0..1.0).contains(&p.test_fraction) || !(0.0..=1.0).contains(&p.budget_fraction) {
                bail!("test fraction must be in [0, 1) and budget in [0, 1]");
            }
            print!("{}", verify_storage(&p, &bits, &hidden, feature_dim));
        }
        Command::GenDataset { output, classes, per_class, dims, separation, seed } => {
            let data = BlobSpec { classes, per_class, dims, separation, seed }.generate()?;
            data.save(&output)?;
            println!("wrote {} samples x {} features, {} classes to {}", data.len(), data.dims(), classes, output.display());
        }
        Command::SnapshotInspect { path } => {
            let memory = ReplayMemory::load_snapshot(&path)?;
            let budget = memory.budget();
            println!(
                "{}: {} classes, {} exemplars, budget {} ({} of training set)",
                path.display(),
                memory.num_classes(),
                memory.total_exemplars(),
                budget.total_budget(),
                budget.fraction()
            );
            println!("{:>6}  {:>8}  {:>4}  {:>6}  {:>6}  {:>12}  {:>10}", "class", "method", "bits", "count", "dims", "bytes", "max dist");
            for s in memory.sets() {
                let max_dist = s.distances().iter().copied().fold(0.0f32, f32::max);
                println!(
                    "{:>6}  {:>8}  {:>4}  {:>6}  {:>6}  {:>12}  {:>10.4}",
                    s.class_id(),
                    s.method(),
                    s.bits(),
                    s.len(),
                    s.dims(),
                    s.storage().total(),
                    max_dist
                );
            }
            println!("total exemplar bytes: {}", memory.storage().total());
        }
    }
    Ok(())
}

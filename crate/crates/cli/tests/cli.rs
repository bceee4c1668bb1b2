use std::path::Path;
use std::process::{Command, Output};

use fasticarl::data_io::generate_blobs;
use fasticarl::memory::{build_exemplar_set, BudgetPolicy, ReplayMemory};
use fasticarl::quantization::Bits;
use fasticarl::selection::SelectionMethod;
use fasticarl::tensor_nn::MlpModel;

fn fasticarl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fasticarl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn verify_storage_urbansound() {
    let o = fasticarl(&["verify-storage", "--bits", "32,8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("UrbanSound8K"));
    assert!(out.contains("1571 exemplars"));
    assert!(out.contains("68369920"), "{out}");
    assert!(out.contains("17092480"), "{out}");
}

#[test]
fn verify_storage_zero_budget() {
    let o = fasticarl(&["verify-storage", "--budget", "0", "--bits", "32"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // ten empty per-class headers of 14 bytes
    assert!(stdout(&o).lines().last().unwrap().contains(" 0  "));
    assert!(stdout(&o).contains("140"));
}

#[test]
fn run_grid_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    std::fs::write(
        &cfg,
        "methods = [\"fasticarl\"]\nbits = [32, 8]\nbudgets = [0.1]\nrepetitions = 2\noutput_dir = \"out\"\n[epochs]\nbase = 3\nincremental = 2\n",
    )
    .unwrap();
    let o = fasticarl(&["run", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out_dir = dir.path().join("out");
    let mut names: Vec<String> =
        std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, vec!["fasticarl_32bit_budget0.1.json", "fasticarl_8bit_budget0.1.json", "summary.csv"]);

    for name in &names[..2] {
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join(name)).unwrap()).unwrap();
        let runs = report["runs"].as_array().unwrap();
        assert_eq!(runs.len(), 2);
        for run in runs {
            let tasks = run["tasks"].as_array().unwrap();
            assert_eq!(tasks.len(), 1 + 6 / 2);
            assert_eq!(tasks.last().unwrap()["classes"].as_array().unwrap().len(), 6);
        }
        assert_eq!(report["config"]["seed"], 0);
    }
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary, stdout(&o));
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "method,0.1");
    assert!(lines[1].starts_with("FastICARL (32 bits),"));
    assert!(lines[2].starts_with("FastICARL (8 bits),"));
}

#[test]
fn run_reports_every_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "method = [\"none\"]\nrepetitions = 1\n[epochs]\nbase_epochs = 2\n").unwrap();
    let o = fasticarl(&["run", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("method") && err.contains("epochs.base_epochs"), "{err}");
}

#[test]
fn gen_dataset_then_run_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("blobs.fdsf");
    let o = fasticarl(&["gen-dataset", data.to_str().unwrap(), "--classes", "4", "--per-class", "20", "--dims", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::metadata(&data).unwrap().len(), 4 + 2 + 12 + 80 * 3 * 4 + 80 * 2);

    let cfg = dir.path().join("grid.toml");
    std::fs::write(
        &cfg,
        "methods = [\"none\", \"joint\"]\nrepetitions = 1\n[dataset]\npath = \"blobs.fdsf\"\n[epochs]\nbase = 2\nincremental = 1\n",
    )
    .unwrap();
    let o = fasticarl(&["run", cfg.to_str().unwrap(), "--output-dir", dir.path().join("r").to_str().unwrap(), "--serial"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let none: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/none.json")).unwrap()).unwrap();
    for t in none["runs"][0]["tasks"].as_array().unwrap() {
        assert_eq!(t["exemplar_bytes"], 0);
    }
    let joint: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/joint.json")).unwrap()).unwrap();
    assert_eq!(joint["runs"][0]["tasks"].as_array().unwrap().len(), 1);
    assert_eq!(joint["dataset"], "blobs");
}

fn write_snapshot(path: &Path) {
    let data = generate_blobs(2, 10, 3, 4.0, 1).unwrap();
    let model = MlpModel::<f32>::new(&[3, 4, 2, 2], 1).unwrap();
    let mut memory = ReplayMemory::new(BudgetPolicy::with_total(0.5, 10));
    for c in 0..2 {
        memory.insert(build_exemplar_set(c, &data.class_rows(c), &model, 5, Bits::B8, SelectionMethod::Fast).unwrap()).unwrap();
    }
    memory.save_snapshot(path).unwrap();
}

#[test]
fn snapshot_inspect_summarizes_sets() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ficl");
    write_snapshot(&path);
    let o = fasticarl(&["snapshot-inspect", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("2 classes, 10 exemplars"), "{out}");
    assert_eq!(out.lines().filter(|l| l.contains(" fast ")).count(), 2);

    std::fs::write(&path, b"FICL\x01").unwrap();
    let o = fasticarl(&["snapshot-inspect", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("truncated"), "{}", stderr(&o));
}

#[test]
fn bench_selection_small_grid() {
    let o = fasticarl(&["bench-selection", "--n", "100", "--m", "1,10,200", "--dims", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    // m=200 exceeds n and is skipped
    assert_eq!(out.lines().count(), 1 + 2 * 2);
    assert!(out.lines().skip(1).all(|l| l.split(',').nth(4) == Some("5")));
}

#[test]
fn rejects_bad_arguments() {
    assert!(!fasticarl(&["verify-storage", "--bits", "4"]).status.success());
    assert!(!fasticarl(&["bench-selection", "--methods", "random"]).status.success());
    assert!(!fasticarl(&["bench-selection", "--repetitions", "3", "--n", "10", "--m", "2"]).status.success());
    assert!(!fasticarl(&["run", "/nonexistent/config.toml"]).status.success());
}

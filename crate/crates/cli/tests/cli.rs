//! Binary-level tests: subcommand wiring, exit codes and output provenance.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_pomdp-rec")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_toy_dataset(path: &Path) {
    // Deterministic toy log: 8 windows of ratings over 30 users x 20 items.
    let mut body = String::new();
    let mut state = 9u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    for window in 0..8i64 {
        for step in 0..220i64 {
            let user = next() % 30 + 1;
            let item = next() % 20 + 1;
            let value = next() % 5 + 1;
            body.push_str(&format!(
                "{user}::{item}::{value}::{}\n",
                window * 1000 + step
            ));
        }
    }
    fs::write(path, body).unwrap();
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let dataset = dir.join("ratings.dat");
    write_toy_dataset(&dataset);
    let config = format!(
        r#"
seed = 5

[dataset]
path = {dataset:?}

[windows]
count = 5

[pmf]
latent_dim = 3
epochs = 10

[qtrain]
iterations = 2
epochs_per_iteration = 2
hidden_dim = 8
successor_samples = 4
diagnostic_interval = 500

[policy]
n_candidates = 2

[sim]
n_users = 20
n_items = 15
k_true = 2
epochs = 2
top_n = 3
n_seeds = 2
probe_fraction = 0.05
strategy_latent_dim = 2
strategy_epochs = 5

[output]
dir = {out:?}
"#,
        out = dir.join("out")
    );
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    path
}

#[test]
fn full_command_sequence_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let config = config.to_str().unwrap();

    let ingest = run(&["ingest", "--config", config]);
    assert!(ingest.status.success(), "{}", String::from_utf8_lossy(&ingest.stderr));
    let stdout = String::from_utf8_lossy(&ingest.stdout);
    assert!(stdout.contains("ingested 1760 records"), "stdout: {stdout}");

    let train = run(&["train", "--config", config]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));

    let evaluate = run(&["evaluate", "--config", config]);
    assert!(evaluate.status.success(), "{}", String::from_utf8_lossy(&evaluate.stderr));
    let stdout = String::from_utf8_lossy(&evaluate.stdout);
    assert!(stdout.contains("baseline pooled rmse"), "stdout: {stdout}");
    assert!(stdout.contains("pomdp-rec pooled rmse"), "stdout: {stdout}");

    let simulate = run(&["simulate-rd", "--config", config]);
    assert!(simulate.status.success(), "{}", String::from_utf8_lossy(&simulate.stderr));

    // Every output file starts with the config-hash provenance line.
    for entry in fs::read_dir(dir.path().join("out")).unwrap() {
        let path = entry.unwrap().path();
        let first = fs::read_to_string(&path).unwrap();
        assert!(
            first.starts_with("# config_hash="),
            "{} lacks provenance line",
            path.display()
        );
    }
}

#[test]
fn baseline_only_flag_skips_the_q_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let config = config.to_str().unwrap();
    assert!(run(&["ingest", "--config", config]).status.success());
    let evaluate = run(&["evaluate", "--config", config, "--baseline-only"]);
    assert!(evaluate.status.success());
    let stdout = String::from_utf8_lossy(&evaluate.stdout);
    assert!(stdout.contains("baseline pooled rmse"));
    assert!(!stdout.contains("pomdp-rec pooled rmse"));
}

#[test]
fn missing_config_file_exits_with_io_code() {
    let output = run(&["ingest", "--config", "/nonexistent/config.toml"]);
    assert_eq!(output.status.code(), Some(6));
}

#[test]
fn invalid_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seed = 1\n").unwrap();
    let output = run(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn train_before_ingest_exits_with_state_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let output = run(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn malformed_dataset_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    fs::write(dir.path().join("ratings.dat"), "not a rating line\n").unwrap();
    let output = run(&["ingest", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn seed_override_changes_outputs_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let config = config.to_str().unwrap();

    assert!(run(&["ingest", "--config", config]).status.success());
    assert!(run(&["train", "--config", config]).status.success());
    let diagnostics = dir.path().join("out/diagnostics.csv");
    let first = fs::read(&diagnostics).unwrap();

    assert!(run(&["ingest", "--config", config]).status.success());
    assert!(run(&["train", "--config", config]).status.success());
    assert_eq!(first, fs::read(&diagnostics).unwrap(), "rerun differs");

    assert!(run(&["ingest", "--config", config, "--seed", "99"]).status.success());
    assert!(run(&["train", "--config", config, "--seed", "99"]).status.success());
    assert_ne!(first, fs::read(&diagnostics).unwrap(), "seed override ignored");
}

#[test]
fn windows_override_changes_the_partition() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let output = run(&[
        "ingest",
        "--config",
        config.to_str().unwrap(),
        "--windows",
        "4",
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("4 train"), "stdout: {stdout}");
}

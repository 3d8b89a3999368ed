//! End-to-end checks of the binary: exit codes, determinism of the emitted
//! CSVs, help defaults, round-trip exports, and the metric recomputation
//! path.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_treelora"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("treelora-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.cfg");
    std::fs::write(
        &path,
        "[stream]\n\
         n_tasks = 3\n\
         n_clusters = 2\n\
         samples_per_task = 32\n\
         test_per_task = 16\n\
         input_dim = 8\n\
         num_classes = 4\n\
         seed = 5\n\
         \n\
         [train]\n\
         epochs = 2\n\
         batch_size = 16\n\
         rank = 4\n\
         hidden_dim = 16\n\
         hidden_layers = 2\n\
         adapter_layer = 1\n\
         pretrain_steps = 50\n\
         pretrain_samples = 96\n\
         seed = 5\n",
    )
    .unwrap();
    path
}

fn bench_config(dir: &Path) -> PathBuf {
    let path = dir.join("bench.cfg");
    std::fs::write(
        &path,
        "[bench]\n\
         n_values = 4,8,16\n\
         rounds = 2000\n\
         seeds = 10\n\
         seed = 7\n",
    )
    .unwrap();
    path
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn missing_config_exits_2_and_names_path() {
    let dir = tmp_dir("missing");
    let out = bin()
        .args(["train", "--config", "does-not-exist.cfg", "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("does-not-exist.cfg"), "stderr: {stderr}");
    assert_eq!(stderr.lines().count(), 1, "single-line error expected");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bad_flags_exit_2() {
    let out = bin().args(["train", "--definitely-not-a-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_lists_violations() {
    let dir = tmp_dir("invalid");
    let path = dir.join("bad.cfg");
    std::fs::write(&path, "[train]\nlambda = -1\nwat = 3\n").unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&path)
        .args(["--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("lambda must be nonnegative"), "stderr: {stderr}");
    assert!(stderr.contains("unknown key"), "stderr: {stderr}");
    assert!(stderr.contains("[stream]"), "missing-section violation absent: {stderr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let dir = tmp_dir("determinism");
    let cfg = small_config(&dir);
    for run in ["a", "b"] {
        let out = bin()
            .args(["train", "--config"])
            .arg(&cfg)
            .args(["--out"])
            .arg(dir.join(run))
            .args(["--seed", "7"])
            .output()
            .unwrap();
        assert_success(&out);
    }
    for file in ["metrics.csv", "eval_matrix.csv", "observations.csv", "tree.json", "stream.txt"] {
        let a = std::fs::read(dir.join("a").join(file)).unwrap();
        let b = std::fs::read(dir.join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_recomputation_matches_recorded_metrics() {
    let dir = tmp_dir("eval");
    let cfg = small_config(&dir);
    let out_dir = dir.join("run");
    assert_success(
        &bin()
            .args(["train", "--config"])
            .arg(&cfg)
            .args(["--out"])
            .arg(&out_dir)
            .output()
            .unwrap(),
    );
    let out = bin()
        .args(["eval", "--matrix"])
        .arg(out_dir.join("eval_matrix.csv"))
        .args(["--compare"])
        .arg(out_dir.join("metrics.csv"))
        .output()
        .unwrap();
    assert_success(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("eval comparison ok"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn tree_export_round_trips() {
    let dir = tmp_dir("export");
    let cfg = small_config(&dir);
    let out_dir = dir.join("run");
    assert_success(
        &bin()
            .args(["train", "--config"])
            .arg(&cfg)
            .args(["--out"])
            .arg(&out_dir)
            .output()
            .unwrap(),
    );
    // JSON fixpoint through the export command.
    let json1 = bin()
        .args(["tree-export", "--input"])
        .arg(out_dir.join("tree.json"))
        .args(["--format", "json", "--out"])
        .arg(dir.join("tree2.json"))
        .output()
        .unwrap();
    assert_success(&json1);
    assert_eq!(
        std::fs::read(out_dir.join("tree.json")).unwrap(),
        std::fs::read(dir.join("tree2.json")).unwrap()
    );
    let dot = bin()
        .args(["tree-export", "--input"])
        .arg(out_dir.join("tree.json"))
        .args(["--format", "dot"])
        .output()
        .unwrap();
    assert_success(&dot);
    assert!(String::from_utf8_lossy(&dot.stdout).starts_with("digraph"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn baseline_runs_on_saved_stream() {
    let dir = tmp_dir("stream-reuse");
    let cfg = small_config(&dir);
    let a = dir.join("a");
    assert_success(
        &bin().args(["train", "--config"]).arg(&cfg).args(["--out"]).arg(&a).output().unwrap(),
    );
    let b = dir.join("b");
    let out = bin()
        .args(["baseline", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&b)
        .args(["--stream"])
        .arg(a.join("stream.txt"))
        .output()
        .unwrap();
    assert_success(&out);
    assert_eq!(
        std::fs::read(a.join("stream.txt")).unwrap(),
        std::fs::read(b.join("stream.txt")).unwrap()
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn help_lists_hyperparameter_defaults() {
    for mode in ["train", "baseline", "pretrain", "bandit-bench"] {
        let out = bin().args([mode, "--help"]).output().unwrap();
        assert_success(&out);
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--seed"), "{mode} help misses --seed");
        assert!(text.contains("--jobs"), "{mode} help misses --jobs");
        assert!(text.contains("learning_rate = 0.005"), "{mode} help misses defaults");
        assert!(text.contains("lambda = 0.1"), "{mode} help misses lambda default");
        assert!(text.contains("exploration_coef = 2"), "{mode} help misses exploration");
    }
}

/// Small-fixture benchmark completes quickly end to end.
#[test]
fn bandit_bench_small_fixture_is_fast() {
    let dir = tmp_dir("bench");
    let cfg = bench_config(&dir);
    let started = std::time::Instant::now();
    let out = bin()
        .args(["bandit-bench", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.join("out"))
        .args(["--jobs", "2"])
        .output()
        .unwrap();
    assert_success(&out);
    assert!(started.elapsed().as_secs() < 10, "took {:?}", started.elapsed());
    let summary = std::fs::read_to_string(dir.join("out/regret_summary.csv")).unwrap();
    assert!(summary.lines().count() > 60);
    assert!(std::fs::read_to_string(dir.join("out/regret_curves.csv")).unwrap().contains("tree_lcb"));
    std::fs::remove_dir_all(&dir).ok();
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_metaprior"));
    c.env_remove("METAPRIOR_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn metaprior")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Trains a small checkpoint into `dir` and returns its path.
fn small_checkpoint(dir: &Path, extra: &[&str]) -> PathBuf {
    let ck = dir.join("small.ckpt");
    let mut args = vec!["train", "--outer-iters", "10", "--checkpoint-out", p(&ck), "--set", "verbosity=quiet"];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    ck
}

const FAST_EVAL: [&str; 8] = [
    "--set",
    "mc_samples=500",
    "--set",
    "eval_iterations=2",
    "--set",
    "eval_batch=2",
    "--set",
    "include_standard_normal=false",
];

#[test]
fn missing_config_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.conf");
    let o = run(&["train", "--config", p(&missing)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nope.conf"), "{}", stderr(&o));
}

#[test]
fn bad_config_line_names_key() {
    let dir = TempDir::new().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# comment\nseed = 3\nmeta_batch = many\n").unwrap();
    let o = run(&["train", "--config", p(&conf)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("meta_batch"), "{}", stderr(&o));
}

#[test]
fn train_writes_loadable_checkpoint() {
    let dir = TempDir::new().unwrap();
    let ck = small_checkpoint(dir.path(), &[]);
    let out = dir.path().join("prior.csv");
    let o = run(&["emit-prior", "--checkpoint", p(&ck), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(sidecar["checkpoint"]["outer_iters"], 10);
}

#[test]
fn train_reports_progress_as_json() {
    let dir = TempDir::new().unwrap();
    let ck = dir.path().join("a.ckpt");
    let o = run(&["train", "--outer-iters", "4", "--checkpoint-out", p(&ck), "--set", "progress_every=2"]);
    assert_eq!(code(&o), 0);
    let lines: Vec<serde_json::Value> = stderr(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let iters: Vec<u64> = lines
        .iter()
        .filter(|v| v["event"] == "progress")
        .map(|v| v["iteration"].as_u64().unwrap())
        .collect();
    assert_eq!(iters, [2, 4]);
}

#[test]
fn divergent_training_exits_3() {
    let dir = TempDir::new().unwrap();
    let ck = dir.path().join("d.ckpt");
    let o = run(&["train", "--outer-iters", "3", "--checkpoint-out", p(&ck), "--set", "inner_step=1e30"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn corrupted_checkpoint_exits_4_without_results() {
    let dir = TempDir::new().unwrap();
    let ck = small_checkpoint(dir.path(), &[]);
    let mut bytes = std::fs::read(&ck).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x5a;
    std::fs::write(&ck, &bytes).unwrap();
    let results = dir.path().join("res");
    let mut args = vec!["eval", "--checkpoint", p(&ck), "--results-out", p(&results)];
    args.extend_from_slice(&FAST_EVAL);
    let o = run(&args);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(!dir.path().join("res.csv").exists());
}

#[test]
fn version_mismatch_exits_4() {
    let dir = TempDir::new().unwrap();
    let ck = small_checkpoint(dir.path(), &[]);
    let mut bytes = std::fs::read(&ck).unwrap();
    bytes[4] = 9;
    std::fs::write(&ck, &bytes).unwrap();
    let out = dir.path().join("prior.csv");
    let o = run(&["emit-prior", "--checkpoint", p(&ck), "--out", p(&out)]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("version"), "{}", stderr(&o));
}

#[test]
fn layout_mismatch_exits_4() {
    let dir = TempDir::new().unwrap();
    let ck = small_checkpoint(dir.path(), &["--set", "model_size=8"]);
    let out = dir.path().join("prior.csv");
    let o = run(&["emit-prior", "--checkpoint", p(&ck), "--out", p(&out)]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("layout"), "{}", stderr(&o));
}

#[test]
fn missing_checkpoint_exits_4() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("prior.csv");
    let o = run(&["emit-prior", "--checkpoint", p(&dir.path().join("absent.ckpt")), "--out", p(&out)]);
    assert_eq!(code(&o), 4);
}

#[test]
fn uniform_only_eval_needs_no_checkpoint() {
    let dir = TempDir::new().unwrap();
    let results = dir.path().join("base");
    let mut args = vec!["eval", "--prior", "uniform-only", "--results-out", p(&results)];
    args.extend_from_slice(&FAST_EVAL);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("base.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,mse_uniform,mse_meta");
    assert_eq!(lines.len(), 11);
    for (k, line) in lines[1..].iter().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], (k + 1).to_string());
        assert!(f[1].parse::<f64>().unwrap() > 0.0);
        assert_eq!(f[2], "");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("base.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 0);
    assert_eq!(report["config"]["mc_samples"], 500);
}

#[test]
fn eval_with_meta_prior_fills_both_columns() {
    let dir = TempDir::new().unwrap();
    let ck = small_checkpoint(dir.path(), &[]);
    let results = dir.path().join("meta");
    let mut args = vec!["eval", "--checkpoint", p(&ck), "--results-out", p(&results)];
    args.extend_from_slice(&FAST_EVAL);
    assert_eq!(code(&run(&args)), 0);
    let csv = std::fs::read_to_string(dir.path().join("meta.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert!(line.split(',').all(|f| !f.is_empty()), "{line}");
    }
}

#[test]
fn untrained_prior_is_normalized() {
    let dir = TempDir::new().unwrap();
    let ck = small_checkpoint(dir.path(), &[]);
    let out = dir.path().join("prior.csv");
    assert_eq!(code(&run(&["emit-prior", "--checkpoint", p(&ck), "--out", p(&out)])), 0);
    let rows: Vec<(f64, f64)> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (x, d) = l.split_once(',').unwrap();
            (x.parse().unwrap(), d.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 1024);
    assert_eq!(rows[0].0, -4.0);
    assert_eq!(rows[rows.len() - 1].0, 4.0);
    let integral: f64 = rows.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    assert!((integral - 1.0).abs() < 1e-6, "{integral}");
    assert!(rows.iter().all(|r| r.1 > 0.0));
}

fn bo_run(dir: &Path, name: &str, extra: &[&str]) -> Output {
    let prefix = dir.join(name);
    let mut args = vec!["bo-run", "--prior", "uniform", "--task-mean", "-1.5", "--task-std", "0.8", "--out", p(&prefix)];
    args.extend_from_slice(&["--mc-samples", "2000"]);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn bo_run_writes_trace_and_posterior() {
    let dir = TempDir::new().unwrap();
    let o = bo_run(dir.path(), "one", &["--shots", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = std::fs::read_to_string(dir.path().join("one_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    assert_eq!(trace.lines().next().unwrap(), "step,x,y,acquisition_score");
    let post = std::fs::read_to_string(dir.path().join("one_posterior.csv")).unwrap();
    assert_eq!(post.lines().count(), 257);

    let o = bo_run(dir.path(), "grid", &["--shots", "3", "--set", "eval_grid_size=64"]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(dir.path().join("grid_trace.csv")).unwrap().lines().count(), 4);
    assert_eq!(std::fs::read_to_string(dir.path().join("grid_posterior.csv")).unwrap().lines().count(), 65);
}

#[test]
fn bo_run_is_reproducible() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&bo_run(dir.path(), "a", &["--shots", "4", "--workers", "1"])), 0);
    assert_eq!(code(&bo_run(dir.path(), "b", &["--shots", "4", "--workers", "3"])), 0);
    for suffix in ["_trace.csv", "_posterior.csv"] {
        let a = std::fs::read(dir.path().join(format!("a{suffix}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix}");
    }
}

#[test]
fn bo_run_rejects_mean_outside_boundary() {
    let dir = TempDir::new().unwrap();
    let prefix = dir.path().join("x");
    let o = run(&["bo-run", "--prior", "uniform", "--task-mean", "5.5", "--task-std", "1", "--shots", "2", "--out", p(&prefix)]);
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("x_trace.csv").exists());
}

#[test]
fn seed_env_overrides_file_and_flag_overrides_env() {
    let dir = TempDir::new().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "seed = 1\n").unwrap();
    let seed_of = |name: &str, env: Option<&str>, flag: Option<&str>| {
        let results = dir.path().join(name);
        let mut cmd = bin();
        cmd.args(["eval", "--prior", "uniform-only", "--config", p(&conf), "--results-out", p(&results)]);
        cmd.args(FAST_EVAL).args(["--set", "k_max=1"]);
        if let Some(e) = env {
            cmd.env("METAPRIOR_SEED", e);
        }
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.status().unwrap().success());
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{name}.json"))).unwrap()).unwrap();
        v["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of("file", None, None), 1);
    assert_eq!(seed_of("env", Some("17"), None), 17);
    assert_eq!(seed_of("flag", Some("17"), Some("23")), 23);
}

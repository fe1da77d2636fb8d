use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY_BANDIT: &str = r#"
seeds = [0]
[data]
synthetic_per_class = 10
[bandit]
steps = 12
batch = 8
eval_batch = 50
eval_every = 4
layers = 2
width = 12
neuron_dim = 3
slots = 2
parents = 2
"#;

const TINY_LABYRINTH: &str = r#"
[labyrinth]
maze_height = 2
maze_width = 2
batches = 2
n_envs = 3
width = 8
neuron_dim = 3
slots = 2
parents = 2
input_neurons = 4
embed_dim = 8
"#;

const TINY_SWEEP: &str = r#"
d = [3, 4]
k = [2]
m = 2
trials = 4
n = 1
seed = 5
cases = [{ case = "noisy", sigma = 1.0 }]
"#;

fn sgprop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgprop"))
        .current_dir(dir)
        .env_remove("SGPROP_DATA")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn print_config(dir: &Path, cmd: &str, config: Option<&Path>) -> Value {
    let mut args = vec![cmd, "--print-config"];
    let p;
    if let Some(c) = config {
        p = c.to_str().unwrap().to_string();
        args.extend(["--config", &p]);
    }
    let o = sgprop(dir, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn expert_sweep_writes_ratio_csv_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.toml", TINY_SWEEP);
    let o = sgprop(dir.path(), &["--out", "res", "expert-sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("expert-sweep: 2 rows"));
    let first = std::fs::read_to_string(dir.path().join("res/ratio.csv")).unwrap();
    let mut lines = first.lines();
    assert_eq!(lines.next().unwrap(), "d,k,case,trials,n,ratio_mean,ratio_sem,mse_bp,mse_sg,ratio_of_means");
    assert_eq!(lines.count(), 2);
    let manifest: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("res/expert-sweep.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"][0], 5);

    let o = sgprop(dir.path(), &["--out", "res", "--threads", "1", "expert-sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("res/ratio.csv")).unwrap(), first);
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.json", r#"{"d": [5], "k": [2], "trials": 3}"#);
    let v = print_config(dir.path(), "expert-sweep", Some(&cfg));
    assert_eq!(v["d"], serde_json::json!([5]));
    assert_eq!(v["m"], 5);
}

#[test]
fn bandit_writes_run_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.toml", TINY_BANDIT);
    let args = ["--out", "o", "bandit", "--config", cfg.to_str().unwrap(), "--method", "sparsenet-sgprop", "--seed", "0"];
    let o = sgprop(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("synthetic digits"), "fallback warning missing: {}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("o/bandit-sparsenet-sgprop-seed0.csv")).unwrap();
    assert!(csv.starts_with("step,samples_seen,metric,lambda_mean,"));
    assert_eq!(csv.lines().count(), 13);
    let m: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("o/bandit-sparsenet-sgprop.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["method"], "sparsenet-sgprop");
    assert_eq!(m["runs"][0]["seed"], 0);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(m["version"].as_str().unwrap().starts_with('v'));

    let o = sgprop(dir.path(), &args);
    assert!(o.status.success());
    let again = std::fs::read_to_string(dir.path().join("o/bandit-sparsenet-sgprop-seed0.csv")).unwrap();
    assert_eq!(again, csv);
}

#[test]
fn bandit_seed_list_gives_one_csv_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.toml", TINY_BANDIT);
    let o = sgprop(dir.path(), &["bandit", "--config", cfg.to_str().unwrap(), "--method", "dense-mlp", "--seed", "3,4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for s in [3, 4] {
        assert!(dir.path().join(format!("out/bandit-dense-mlp-seed{s}.csv")).is_file());
    }
}

#[test]
fn missing_idx_directory_falls_back_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.toml", TINY_BANDIT);
    let o = Command::new(env!("CARGO_BIN_EXE_sgprop"))
        .current_dir(dir.path())
        .env("SGPROP_DATA", dir.path().join("nowhere"))
        .args(["bandit", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("nowhere"));
}

#[test]
fn labyrinth_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "l.toml", TINY_LABYRINTH);
    let o = sgprop(dir.path(), &["labyrinth", "--config", cfg.to_str().unwrap(), "--method", "sparsenet-backprop"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("labyrinth sparsenet-backprop: 1 seed(s)"));
    let csv = std::fs::read_to_string(dir.path().join("out/labyrinth-sparsenet-backprop-seed0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("out/labyrinth-sparsenet-backprop.manifest.json").is_file());
}

#[test]
fn empty_bandit_config_takes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.toml", "");
    let v = print_config(dir.path(), "bandit", Some(&cfg));
    let b = &v["bandit"];
    assert_eq!(b["p_flip"], 0.4);
    assert_eq!(b["batch"], 64);
    assert_eq!(b["layers"], 5);
    assert_eq!(b["width"], 200);
    assert_eq!(v["seeds"], serde_json::json!([0]));
}

#[test]
fn labyrinth_gamma_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "l.toml", "[labyrinth]\nlr = 0.01\n");
    let v = print_config(dir.path(), "labyrinth", Some(&cfg));
    assert_eq!(v["labyrinth"]["gamma"], 0.95);
    assert_eq!(v["labyrinth"]["lr"], 0.01);
}

#[test]
fn shipped_configs_match_builtin_defaults() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    for (cmd, file) in [("expert-sweep", "sweep.toml"), ("bandit", "bandit.toml"), ("labyrinth", "labyrinth.toml")] {
        assert_eq!(print_config(dir.path(), cmd, Some(&root.join(file))), print_config(dir.path(), cmd, None), "{file}");
    }
}

#[test]
fn unknown_key_is_rejected_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.toml", "[bandit]\nwidht = 10\n");
    let o = sgprop(dir.path(), &["bandit", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("widht"), "{}", stderr(&o));
    let cfg = write(dir.path(), "top.toml", "seedz = [1]\n");
    assert!(!sgprop(dir.path(), &["labyrinth", "--config", cfg.to_str().unwrap()]).status.success());
}

#[test]
fn negative_learning_rate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.toml", "[bandit]\nlr_backprop = -0.1\n");
    let o = sgprop(dir.path(), &["bandit", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("lr_backprop"), "{}", stderr(&o));
    let cfg = write(dir.path(), "l.toml", "[labyrinth]\nlr = -1e-3\n");
    assert!(!sgprop(dir.path(), &["labyrinth", "--config", cfg.to_str().unwrap()]).status.success());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_invocations_fail() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!sgprop(dir.path(), &["frobnicate"]).status.success());
    assert!(!sgprop(dir.path(), &["bandit", "--config", "missing.toml"]).status.success());
    assert!(!sgprop(dir.path(), &["bandit", "--method", "sgd"]).status.success());
    let o = sgprop(dir.path(), &["expert-sweep", "--trials", "0"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn tabular_checks_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = sgprop(dir.path(), &["tabular-checks"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.matches("PASS").count(), 4, "{out}");
    assert!(out.contains("tabular-checks: 4/4 passed"));
}

#[test]
fn idx_inspect_reports_dims() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = vec![0, 0, 8, 1, 0, 0, 0, 4];
    bytes.extend([1u8, 2, 2, 7]);
    let p = write(dir.path(), "labels.idx", "");
    std::fs::write(&p, &bytes).unwrap();
    let o = sgprop(dir.path(), &["idx-inspect", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("labels dims [4]"), "{out}");
    assert!(out.contains("1:1 2:2 7:1"), "{out}");

    std::fs::write(&p, [0u8, 0, 8, 9]).unwrap();
    assert!(!sgprop(dir.path(), &["idx-inspect", p.to_str().unwrap()]).status.success());
}

use std::path::Path;
use std::process::{Command, Output};

use allact::cli::{blob_digest, RunManifest, CURVE_HEADER, DECOMP_HEADER, MSE_HEADER};

fn allact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_allact"))
        .args(args)
        .env_remove("ALLACT_SEED")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

const SHORT_BANDIT: &str = "[env]\nkind = \"bandit\"\n[train]\nepisodes = 30\nwindow = 10\nseeds = 2\n";

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn train_writes_curve_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT_BANDIT);
    let out = tmp.path().join("run");
    let o = allact(&["train", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("curve_seed7.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CURVE_HEADER));
    assert_eq!(lines.count(), 30);

    let m = manifest(&out);
    assert_eq!(m.master_seed, 0);
    assert_eq!(m.outputs["curve_seed7.csv"], blob_digest(csv.as_bytes()));
    assert!(m.config.contains("kind = \"bandit\""));
    assert!(m.versions.contains_key("estimators"));
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT_BANDIT);
    let mut texts = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = allact(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        texts.push((
            std::fs::read(out.join("curve_seed0.csv")).unwrap(),
            std::fs::read(out.join("curve_seed1.csv")).unwrap(),
        ));
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn seed_variable_overrides_config_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT_BANDIT);
    let out = tmp.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_allact"))
        .args(["train", "--config", &cfg, "--out", out.to_str().unwrap()])
        .env("ALLACT_SEED", "40")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("curve_seed40.csv").exists());
    assert!(out.join("curve_seed41.csv").exists());
    assert_eq!(manifest(&out).master_seed, 40);
}

#[test]
fn missing_config_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let o = allact(&["train", "--config", missing.to_str().unwrap(), "--out", "unused"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[env]\nkind = \"bandit\"\n[policy]\nlearning_rate = 0.1\n");
    let o = allact(&["train", "--config", &cfg, "--out", "unused"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cfg.toml"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(allact(&["train"]).status.code(), Some(1));
    assert_eq!(allact(&["theorem-check", "--which", "4", "--out", "x"]).status.code(), Some(1));
    assert_eq!(allact(&["--help"]).status.code(), Some(0));
}

#[test]
fn help_lists_config_keys() {
    let o = allact(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("value_scale"));
    assert!(text.contains("solve_threshold"));
}

#[test]
fn diverging_run_exits_with_numeric_status() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[env]\nkind = \"bandit\"\n[critic]\nlr_v = 1e300\n[train]\nepisodes = 20\nwindow = 5\nseeds = 1\n",
    );
    let out = tmp.path().join("run");
    let o = allact(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    // the partial curve is still written
    assert!(out.join("curve_seed0.csv").exists());
}

#[test]
fn mse_sweep_writes_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[env]\nkind = \"bandit\"\n[sweep]\nwarmup_episodes = 20\nreference_rollouts = 200\n",
    );
    let out = tmp.path().join("sweep");
    let o = allact(&[
        "mse-sweep",
        "--config",
        &cfg,
        "--ns",
        "1,4,16",
        "--estimates",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("mse.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], MSE_HEADER);
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("1,"));
    assert!(out.join("fit.json").exists());
}

#[test]
fn variance_decomp_writes_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[env]\nkind = \"lqr\"\n[sweep]\nwarmup_episodes = 5\n");
    let out = tmp.path().join("decomp");
    let o = allact(&[
        "variance-decomp",
        "--config",
        &cfg,
        "--ns",
        "1,4",
        "--reps",
        "20",
        "--states",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("decomp.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(DECOMP_HEADER));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn theorem_three_report_has_the_json_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t3");
    let o = allact(&["theorem-check", "--which", "3", "--trials", "200", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("theorem3.json")).unwrap()).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    for k in ["lhs", "rhs", "terms", "satisfied", "se"] {
        assert!(keys.contains(&k), "missing {k} in {keys:?}");
    }
    assert!(out.join("theorem3_grid.csv").exists());
}

#[test]
fn theorem_check_on_pendulum_is_unsupported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[env]\nkind = \"pendulum\"\n[sweep]\nwarmup_episodes = 1\n");
    let o = allact(&["theorem-check", "--which", "1", "--config", &cfg, "--out", tmp.path().join("t").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_then_report_summarizes_each_estimator() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT_BANDIT);
    let out = tmp.path().join("cmp");
    let o = allact(&[
        "compare",
        "--config",
        &cfg,
        "--samples",
        "8",
        "--points",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for kind in ["reinforce", "mc-8", "quad-9"] {
        assert!(out.join(kind).join("curve_seed1.csv").exists(), "{kind}");
    }
    let o = allact(&["report", "--dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("report/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.lines().any(|l| l.starts_with("mc-8,2,")));
    assert!(out.join("report/band_quad-9.csv").exists());
}

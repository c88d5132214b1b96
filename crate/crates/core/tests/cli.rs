//! End-to-end CLI checks: exit codes, reproducibility, config round-trips.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bounder() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bounder"))
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    let base = format!(
        "run.seed = 11\nrun.out_dir = {}\nprefit.dataset_steps = 2400\n\
         prefit.schedule = sgd:0.01:30,adam:0.001:30\n\
         ppo.n_envs = 2\nppo.iterations = 2\nppo.rollout_length = 40\n\
         ppo.checkpoint_interval = 0\neval.episodes = 1\n{extra}",
        dir.join("out").display()
    );
    std::fs::write(&path, base).unwrap();
    path
}

#[test]
fn missing_config_exits_1() {
    let status = bounder()
        .args(["collect", "--config", "/nonexistent/nope.cfg"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&status.stderr);
    assert!(stderr.contains("error:"), "stderr: {stderr}");
}

#[test]
fn unknown_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "run.sneed = 5\n").unwrap();
    let out = bounder()
        .args(["collect", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreadable_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = bounder()
        .args([
            "eval",
            "--config",
            cfg.to_str().unwrap(),
            "--weights",
            "/nonexistent/weights.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn schema_mismatched_trace_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let traces = dir.path().join("traces");
    std::fs::create_dir_all(&traces).unwrap();
    std::fs::write(traces.join("episode_000.csv"), "time,bogus\n0.01,1\n").unwrap();
    let out = bounder()
        .args([
            "metrics",
            "--config",
            cfg.to_str().unwrap(),
            "--traces",
            traces.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn collect_is_byte_reproducible() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let cfg = write_config(dir.path(), "");
        let out = bounder()
            .args(["collect", "--config", cfg.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir_a.path().join("out/dataset.csv")).unwrap();
    let b = std::fs::read(dir_b.path().join("out/dataset.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = bounder()
        .args(["collect", "--config", cfg.to_str().unwrap(), "--seed", "99"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let resolved =
        std::fs::read_to_string(dir.path().join("out/resolved_config.cfg")).unwrap();
    assert!(resolved.contains("run.seed = 99"));
}

#[test]
fn resolved_config_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert!(bounder()
        .args(["collect", "--config", cfg.to_str().unwrap()])
        .status()
        .unwrap()
        .success());
    let first = std::fs::read(dir.path().join("out/dataset.csv")).unwrap();

    // Re-run from the resolved config into a fresh directory.
    let dir2 = tempfile::tempdir().unwrap();
    let resolved = dir.path().join("out/resolved_config.cfg");
    assert!(bounder()
        .args([
            "collect",
            "--config",
            resolved.to_str().unwrap(),
            "--out",
            dir2.path().join("out2").to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let second = std::fs::read(dir2.path().join("out2/dataset.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn out_dir_env_var_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let override_dir = dir.path().join("elsewhere");
    let out = bounder()
        .args(["collect", "--config", cfg.to_str().unwrap()])
        .env("BOUNDER_OUT_DIR", override_dir.to_str().unwrap())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(override_dir.join("dataset.csv").exists());
    assert!(!dir.path().join("out/dataset.csv").exists());
}

#[test]
fn full_pipeline_smoke_and_plot_data_purity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("out");
    let run = |args: &[&str]| {
        let out = bounder().args(args).output().unwrap();
        assert!(
            out.status.success(),
            "{:?}: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(&["collect", "--config", cfg.to_str().unwrap()]);
    run(&["prefit", "--config", cfg.to_str().unwrap()]);
    run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--init-weights",
        out_dir.join("prefit_weights.csv").to_str().unwrap(),
        "--quiet",
    ]);
    let checkpoint = out_dir.join("checkpoints/iter_000002");
    assert!(checkpoint.join("actor.csv").exists());
    assert!(checkpoint.join("critic.csv").exists());
    assert!(checkpoint.join("meta.txt").exists());
    run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--weights",
        checkpoint.join("actor.csv").to_str().unwrap(),
    ]);
    assert!(out_dir.join("traces/episode_000.csv").exists());
    run(&[
        "metrics",
        "--config",
        cfg.to_str().unwrap(),
        "--traces",
        out_dir.join("traces").to_str().unwrap(),
    ]);
    assert!(out_dir.join("traces/metrics.csv").exists());

    let exported = dir.path().join("exported.csv");
    run(&[
        "export",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--out",
        exported.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(&exported).unwrap(),
        std::fs::read(checkpoint.join("actor.csv")).unwrap()
    );

    // plot-data is a pure projection: running it twice changes nothing.
    run(&[
        "plot-data",
        "--config",
        cfg.to_str().unwrap(),
        "--run",
        out_dir.to_str().unwrap(),
    ]);
    let plot_dir = out_dir.join("plot_data");
    let mut first = std::collections::BTreeMap::new();
    for entry in std::fs::read_dir(&plot_dir).unwrap() {
        let p = entry.unwrap().path();
        first.insert(p.clone(), std::fs::read(&p).unwrap());
    }
    assert!(first.len() >= 3);
    run(&[
        "plot-data",
        "--config",
        cfg.to_str().unwrap(),
        "--run",
        out_dir.to_str().unwrap(),
    ]);
    for (p, bytes) in &first {
        assert_eq!(&std::fs::read(p).unwrap(), bytes, "{p:?} changed");
    }
}

#[test]
fn train_reward_curve_is_reproducible() {
    let make = |dir: &Path| {
        let cfg = write_config(dir, "");
        let out = bounder()
            .args(["collect", "--config", cfg.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success());
        let out = bounder()
            .args(["train", "--config", cfg.to_str().unwrap(), "--quiet"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.join("out/reward_curve.csv")).unwrap()
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    assert_eq!(make(dir_a.path()), make(dir_b.path()));
}

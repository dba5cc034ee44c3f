use std::path::Path;
use std::process::{Command, Output};

fn herdpipe(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_herdpipe"));
    cmd.current_dir(dir).args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("HERDPIPE_")) {
        cmd.env_remove(k);
    }
    cmd.envs(env.iter().copied());
    cmd.output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = herdpipe(dir, args, &[]);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [
        "synth",
        "features",
        "train-classifier",
        "classify",
        "summarize",
        "train-estrus",
        "detect",
        "eval",
    ] {
        let out = herdpipe(dir.path(), &[sub, "--help"], &[]);
        assert!(out.status.success(), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn estrus_day_outside_herd_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = herdpipe(
        dir.path(),
        &["synth", "--days", "30", "--estrus-days", "99", "--out", "d"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("d").exists());
}

#[test]
fn missing_input_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = herdpipe(dir.path(), &["train-classifier", "--features", "nope.csv"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_env_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = herdpipe(
        dir.path(),
        &["synth", "--days", "1", "--out", "d"],
        &[("HERDPIPE_FOREST_N_TRESS", "3")],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn schema_mismatch_is_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--days", "1", "--out", "data"]);
    ok(
        d,
        &[
            "features", "--data", "data", "--mode", "raw6", "--stride", "50", "--out", "raw.csv",
        ],
    );
    ok(
        d,
        &[
            "features",
            "--data",
            "data",
            "--mode",
            "stats24",
            "--stride",
            "50",
            "--out",
            "stats.csv",
        ],
    );
    ok(
        d,
        &[
            "train-classifier",
            "--features",
            "raw.csv",
            "--trees",
            "3",
            "--model-dir",
            "m",
        ],
    );
    let out = herdpipe(
        d,
        &[
            "classify",
            "--model-dir",
            "m",
            "--features",
            "stats.csv",
            "--out",
            "p.csv",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn flags_beat_env_beat_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for seed in ["1", "2", "3"] {
        ok(
            d,
            &["synth", "--days", "1", "--seed", seed, "--out", &format!("ref{seed}")],
        );
    }
    std::fs::write(d.join("herd.toml"), "seed = 1\n[paths]\ndata_dir = \"from_file\"\n").unwrap();
    let read = |p: &str| std::fs::read(d.join(p).join("cow0_day000.csv")).unwrap();

    ok(d, &["--config", "herd.toml", "synth", "--days", "1"]);
    assert_eq!(read("from_file"), read("ref1"));

    let env = [("HERDPIPE_SEED", "2"), ("HERDPIPE_CONFIG", "herd.toml")];
    let out = herdpipe(d, &["synth", "--days", "1", "--out", "env"], &env);
    assert!(out.status.success());
    assert_eq!(read("env"), read("ref2"));

    let out = herdpipe(d, &["synth", "--days", "1", "--out", "flag", "--seed", "3"], &env);
    assert!(out.status.success());
    assert_eq!(read("flag"), read("ref3"));
}

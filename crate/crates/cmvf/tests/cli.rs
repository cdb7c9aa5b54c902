use std::fs;
use std::path::Path;
use std::process::Command;

use cmvf::report::parse_kv;

const TINY: [&str; 12] = [
    "--data", "synth", "--synth.students", "12", "--synth.max_len", "15", "--d", "4", "--capsules", "2",
    "--max_epochs", "2",
];

fn cmvf(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cmvf")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn with_out<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = TINY.to_vec();
    v.extend_from_slice(&["--out", out]);
    v.extend_from_slice(extra);
    v
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(cmvf(&[]).0, 2);
    assert_eq!(cmvf(&["frobnicate"]).0, 2);
    assert_eq!(cmvf(&["train", "--dropout", "0.1"]).0, 2);
    let (code, _, err) = cmvf(&["train", "--out", "/tmp/unused"]);
    assert_eq!(code, 2);
    assert!(err.contains("`data`"), "{err}");
    assert_eq!(cmvf(&["train", "--data", "synth", "--out", "/tmp/unused", "--alpha", "-1"]).0, 2);
    assert_eq!(cmvf(&["train", "--data", "synth", "--out", "/tmp/unused", "--variant", "sparse"]).0, 2);
    assert_eq!(cmvf(&["train", "--data", "/nonexistent.csv", "--out", "/tmp/unused"]).0, 2);
    assert_eq!(cmvf(&["--help"]).0, 0);
}

#[test]
fn unknown_config_file_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "data = synth\nlearning_rate = 0.01\nwarmup = 3\n").unwrap();
    let (code, _, err) = cmvf(&["train", "--config", cfg.to_str().unwrap(), "--out", "/tmp/unused"]);
    assert_eq!(code, 2);
    assert!(err.contains("warmup"), "{err}");
}

#[test]
fn train_writes_outputs_and_eval_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["train"];
    args.extend(with_out(out, &["--seed", "3"]));
    let (code, stdout, err) = cmvf(&args);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("infrequent"));
    for f in ["checkpoint.bin", "history.csv", "report.kv", "config.resolved"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let report = parse_kv(&fs::read_to_string(dir.path().join("report.kv")).unwrap());
    let get = |k: &str| report.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone()).unwrap();
    let overall = get("overall.auc");

    let mut args = vec!["eval"];
    args.extend(with_out(out, &["--seed", "3", "--base", "0.6"]));
    let (code, stdout, err) = cmvf(&args);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("RealImpr"));
    let again = parse_kv(&fs::read_to_string(dir.path().join("report.kv")).unwrap());
    assert!(again.contains(&("overall.auc".to_string(), overall)));
    assert!(again.iter().any(|(k, _)| k == "overall.real_impr"));
    assert!(again.iter().any(|(k, _)| k == "valid.auc"));

    // the resolved config replays the run
    let resolved = dir.path().join("config.resolved");
    let (code, _, err) = cmvf(&["eval", "--config", resolved.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn eval_rejects_a_different_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["train"];
    args.extend(with_out(out, &[]));
    assert_eq!(cmvf(&args).0, 0);
    let ck = dir.path().join("checkpoint.bin");
    let (code, _, err) = cmvf(&[
        "eval", "--data", "synth", "--synth.students", "13", "--synth.max_len", "15", "--checkpoint",
        ck.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("vocabulary"), "{err}");
}

#[test]
fn runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let mut args = vec!["train"];
        args.extend(with_out(d.path().to_str().unwrap(), &[]));
        assert_eq!(cmvf(&args).0, 0);
    }
    for f in ["checkpoint.bin", "history.csv", "report.kv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn synth_writes_a_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["synth"];
    args.extend(with_out(dir.path().to_str().unwrap(), &[]));
    assert_eq!(cmvf(&args).0, 0);
    let csv = dir.path().join("data.csv");
    let data = cmvf::csvio::load_csv(Path::new(&csv)).unwrap();
    assert_eq!(data.student_count(), 12);
}

#[test]
fn gradcheck_passes_and_catches_a_broken_gradient() {
    let (code, stdout, err) = cmvf(&["gradcheck"]);
    assert_eq!(code, 0, "{err}");
    for g in ["encoder", "heads", "capsules", "predictor"] {
        assert_eq!(stdout.lines().filter(|l| l.starts_with(&format!("group {g} "))).count(), 1, "{g}");
    }
    let (code, _, _) = cmvf(&["gradcheck", "--corrupt", "predictor.out.weight"]);
    assert_eq!(code, 3);
}

#[test]
fn divergence_exits_3_and_keeps_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train"];
    args.extend(with_out(dir.path().to_str().unwrap(), &["--learning_rate", "1e300"]));
    let (code, _, err) = cmvf(&args);
    assert_eq!(code, 3, "{err}");
    assert!(dir.path().join("checkpoint.bin").exists());
}

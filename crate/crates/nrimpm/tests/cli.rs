mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nrimpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nrimpm")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&nrimpm(&[])), 2);
    assert_eq!(code(&nrimpm(&["fly"])), 2);
    assert_eq!(code(&nrimpm(&["simulate", "--family", "gravity", "--out", "x"])), 2);
    assert_eq!(code(&nrimpm(&["simulate", "--family", "springs", "--samples", "1,2", "--out", "x"])), 2);
    assert_eq!(code(&nrimpm(&["train", "--out", "x"])), 2);
}

#[test]
fn missing_artifacts_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let absent = dir.path().join("absent");
    let out = nrimpm(&["train", "--config", p(&absent), "--out", p(dir.path())]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let out = nrimpm(&["eval", "--ckpt", p(&absent), "--out", p(dir.path())]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let out = nrimpm(&["report", "--runs", p(&absent), "--out", p(dir.path())]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    // A valid config whose dataset directory does not exist.
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, common::tiny_config(&absent).to_json()).unwrap();
    let out = nrimpm(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("run"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn schema_errors_exit_4_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"schema_version": 1, "data": "d", "train": {"tau": "hot"}}"#).unwrap();
    let out = nrimpm(&["train", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("train.tau"), "{}", stderr(&out));
}

#[test]
fn simulate_is_byte_identical_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_nrimpm"))
            .env("NRIMPM_THREADS", threads)
            .args(["simulate", "--family", "charged", "--n", "3", "--samples", "6,3,3", "--steps", "8"])
            .args(["--seed", "11", "--out", p(&out)])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let a = run("a", "1");
    let b = run("b", "3");
    for file in ["train.nrid", "val.nrid", "test.nrid", "dataset.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = nrimpm(&[
        "simulate", "--family", "springs", "--n", "3", "--samples", "24,8,8", "--steps", "12", "--seed", "1",
        "--out", p(&data),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let cfg = dir.path().join("run.json");
    fs::write(&cfg, common::tiny_config(Path::new("data")).to_json()).unwrap();
    let run = dir.path().join("run");
    let o = nrimpm(&["train", "--config", p(&cfg), "--out", p(&run)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for file in ["config.json", "metrics.csv", "last.nrim", "best.nrim"] {
        assert!(run.join(file).exists(), "{file}");
    }
    assert!(!run.join("run.lock").exists());

    let o = nrimpm(&["eval", "--ckpt", p(&run.join("best.nrim")), "--out", p(&run)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["accuracy"].as_f64().unwrap() >= 0.5);

    let o = nrimpm(&["report", "--runs", p(&run), "--out", p(&dir.path().join("report"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("report/trajectory_run.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("stroke-dasharray"));
}

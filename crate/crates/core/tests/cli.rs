use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mghga(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mghga")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout_json(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Forty documents in three classes, linked in a chain, plus a detached pair.
fn write_linqs(dir: &Path) {
    let mut content = String::new();
    for v in 0..42 {
        let class = ["alpha", "beta", "gamma"][v % 3];
        let feats: Vec<&str> = (0..9).map(|j| if j / 3 == v % 3 || (v + j) % 7 == 0 { "1" } else { "0" }).collect();
        writeln!(content, "p{v}\t{}\t{class}", feats.join("\t")).unwrap();
    }
    let mut cites = String::new();
    for v in 1..40 {
        writeln!(cites, "p{}\tp{v}", v - 1).unwrap();
    }
    writeln!(cites, "p40\tp41").unwrap();
    std::fs::write(dir.join("toy.content"), content).unwrap();
    std::fs::write(dir.join("toy.cites"), cites).unwrap();
}

const FAST: [&str; 8] = ["--epochs", "30", "--lr", "0.01", "--hidden", "8", "--construction", "knn:3"];

fn with_fast<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(FAST).collect()
}

#[test]
fn full_pipeline_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_linqs(dir);
    let s = |p: &str| dir.join(p).to_str().unwrap().to_string();
    let (content, cites, data) = (s("toy.content"), s("toy.cites"), s("data"));

    let out = mghga(&["convert", "--content", &content, "--cites", &cites, "--name", "toy", "--largest-component", "--out", &data]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let info = &stdout_json(&out)[0];
    assert_eq!(info["n_nodes"], 40);
    assert_eq!(info["n_classes"], 3);
    assert_eq!(info["feature_mode"], "discrete");

    let ckpt = s("model.ckpt");
    let out = mghga(&with_fast(&["train", "--dataset", &data, "--seed", "1", "--out", &ckpt]));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout_json(&out)[0]["test_accuracy"].as_f64().is_some());

    let attacked = s("attacked.txt");
    let out = mghga(&with_fast(&[
        "attack", "--dataset", &data, "--seed", "1", "--attack", "mghga", "--lambda", "0.1", "--mu", "0.8",
        "--checkpoint", &ckpt, "--out", &attacked,
    ]));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = &stdout_json(&out)[0];
    assert_eq!(summary["budget"], 4);
    assert_eq!(summary["changed_cells"], 4);

    let out = mghga(&with_fast(&["eval", "--dataset", &data, "--seed", "1", "--features", &attacked]));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout_json(&out)[0]["test_accuracy"].as_f64().is_some());

    let out = mghga(&with_fast(&["run", "--dataset", &data, "--attack", "random", "--lambda", "0.1", "--repeats", "2"]));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let lines = stdout_json(&out);
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["type"], "aggregate");

    let report = s("run.jsonl");
    let out = mghga(&with_fast(&["run", "--dataset", &data, "--eta", "auto", "--lambda", "0.1", "--repeats", "1", "--out", &report]));
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 2);

    let out = mghga(&with_fast(&["sweep", "--dataset", &data, "--axis", "lambda", "--values", "0.1,0.2", "--repeats", "1"]));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out).len(), 4);

    let out = mghga(&[
        "transfer", "--dataset", &data, "--constructions", "knn:3,knn:5", "--lambda", "0.1", "--repeats", "1",
        "--epochs", "30", "--lr", "0.01", "--hidden", "8",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let lines = stdout_json(&out);
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[5]["surrogate"], "knn:5");
    assert_eq!(lines[5]["victim"], "knn:3");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    write_linqs(tmp.path());
    let data = tmp.path().join("data");
    let p = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    assert_eq!(code(&mghga(&["convert", "--content", &p("toy.content"), "--cites", &p("toy.cites"), "--name", "toy", "--out", data.to_str().unwrap()])), 0);
    let data = data.to_str().unwrap();

    assert_eq!(code(&mghga(&["--help"])), 0);
    assert_eq!(code(&mghga(&["frobnicate"])), 1);
    assert_eq!(code(&mghga(&["run"])), 1);
    assert_eq!(code(&mghga(&["run", "--dataset", data, "--construction", "knn:x"])), 1);
    assert_eq!(code(&mghga(&["run", "--dataset", data, "--attack", "nope"])), 1);
    assert_eq!(code(&mghga(&["run", "--dataset", data, "--eta", "fast"])), 1);
    assert_eq!(code(&mghga(&["run", "--dataset", data, "--lambda", "0.001"])), 1);
    assert_eq!(code(&mghga(&["run", "--dataset", data, "--lambda", "-1"])), 1);
    assert_eq!(code(&mghga(&["run", "--dataset", data, "--repeats", "0"])), 1);
    assert_eq!(code(&mghga(&["run", "--dataset", data, "--construction", "knn:500"])), 1);
    assert_eq!(code(&mghga(&["sweep", "--dataset", data, "--axis", "k", "--values", "1.5"])), 1);
    assert_eq!(code(&mghga(&["attack", "--dataset", data])), 1);
    assert_eq!(code(&mghga(&["run", "--dataset", &p("missing")])), 2);
    std::fs::write(p("garbage.txt"), "not a matrix").unwrap();
    assert_eq!(code(&mghga(&["eval", "--dataset", data, "--features", &p("garbage.txt")])), 2);
}

#[test]
fn repeated_runs_are_identical_without_timing() {
    let tmp = tempfile::tempdir().unwrap();
    write_linqs(tmp.path());
    let data = tmp.path().join("data");
    let p = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    mghga(&["convert", "--content", &p("toy.content"), "--cites", &p("toy.cites"), "--name", "toy", "--out", data.to_str().unwrap()]);
    let run = || mghga(&with_fast(&["run", "--dataset", data.to_str().unwrap(), "--lambda", "0.1", "--repeats", "3", "--seed", "7"]));
    let (a, b) = (run(), run());
    let strip = |o: &Output| mghga::experiment::strip_wall_time(&String::from_utf8_lossy(&o.stdout));
    assert_eq!(strip(&a), strip(&b));
}

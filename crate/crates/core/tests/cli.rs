use std::fs;
use std::path::Path;
use std::process::Command;

use compgen::cli::run;

const FAST: &[&str] = &[
    "--set",
    "train.epochs=2",
    "--set",
    "train.decay_epoch=1",
    "--set",
    "model.gen_hidden=16,16",
    "--set",
    "data.samples_per_composition=12",
];

fn call(args: &[&str]) -> i32 {
    run(std::iter::once("compgen").chain(args.iter().copied()))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(call(&["gen-data", "--seed", "1", "--out", path(&a)]), 0);
    assert_eq!(call(&["gen-data", "--seed", "1", "--out", path(&b)]), 0);
    for f in ["train.cgf", "test.cgf", "split.txt", "vocab.txt", "config.echo"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    assert_eq!(call(&["gen-data", "--seed", "2", "--out", path(&c)]), 0);
    assert_ne!(fs::read(a.join("train.cgf")).unwrap(), fs::read(c.join("train.cgf")).unwrap());
}

#[test]
fn train_eval_export_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let runs = dir.path().join("run");
    let mut gen = vec!["gen-data", "--out", path(&data), "--set", "data.generalized=true"];
    gen.extend_from_slice(FAST);
    assert_eq!(call(&gen), 0);
    let mut train = vec!["train", "--data", path(&data), "--out", path(&runs)];
    train.extend_from_slice(FAST);
    assert_eq!(call(&train), 0);
    for f in ["config.echo", "metrics.csv", "checkpoint.cgck"] {
        assert!(runs.join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(runs.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics.lines().nth(1).unwrap().split(',').next_back().unwrap().parse::<f64>().is_ok());

    assert_eq!(call(&["eval", "--run", path(&runs), "--protocol", "generalized"]), 0);
    let report = fs::read_to_string(runs.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next().unwrap(), "protocol,split,top1,top2,top3,auc_top1,auc_top2,auc_top3");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..2], &["generalized", "test"]);
    for v in &row[2..] {
        let x: f64 = v.parse().unwrap();
        assert!((0.0..=1.0).contains(&x));
    }
    assert!(runs.join("curve_test.csv").exists());

    for p in ["closed", "open"] {
        assert_eq!(call(&["eval", "--run", path(&runs), "--protocol", p]), 0);
        let r = fs::read_to_string(runs.join("report.csv")).unwrap();
        assert!(r.lines().nth(1).unwrap().starts_with(&format!("{p},test,")));
        assert!(r.lines().nth(1).unwrap().ends_with(",,,"));
    }

    assert_eq!(call(&["export", "--run", path(&runs), "--what", "noise", "--per-composition", "3"]), 0);
    let exports = runs.join("exports");
    let noise = fs::read_to_string(exports.join("noise_l0.csv")).unwrap();
    assert_eq!(noise.lines().count(), 1 + 25 * 3);
    assert!(noise.starts_with("attr,obj,d0,"));
    assert!(exports.join("noise_l1.csv").exists());
    assert_eq!(call(&["export", "--run", path(&runs), "--what", "features"]), 0);
    assert!(exports.join("features.csv").exists());
}

#[test]
fn rerunning_from_the_echo_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut first = vec!["train", "--out", path(&a)];
    first.extend_from_slice(FAST);
    assert_eq!(call(&first), 0);
    let echo = a.join("config.echo");
    assert_eq!(call(&["train", "--out", path(&b), "--config", path(&echo)]), 0);
    for f in ["metrics.csv", "checkpoint.cgck", "config.echo"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn interrupted_training_resumes_to_the_same_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut full = vec!["train", "--out", path(&a)];
    full.extend_from_slice(FAST);
    assert_eq!(call(&full), 0);
    let mut part = vec!["train", "--out", path(&b), "--until", "1"];
    part.extend_from_slice(FAST);
    assert_eq!(call(&part), 0);
    let mut rest = vec!["train", "--out", path(&b), "--resume"];
    rest.extend_from_slice(FAST);
    assert_eq!(call(&rest), 0);
    assert_eq!(fs::read(a.join("checkpoint.cgck")).unwrap(), fs::read(b.join("checkpoint.cgck")).unwrap());
    // A different config must not silently continue the run.
    assert_ne!(call(&["train", "--out", path(&b), "--resume"]), 0);
}

#[test]
fn ablate_emits_table_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abl");
    let mut args = vec!["ablate", "--variants", "TDS,SS", "--seeds", "5", "--out", path(&out)];
    args.extend_from_slice(&["--set", "train.epochs=1", "--set", "train.decay_epoch=1"]);
    args.extend_from_slice(&["--set", "data.samples_per_composition=4", "--set", "model.gen_hidden=8,8"]);
    assert_eq!(call(&args), 0);
    let t2 = fs::read_to_string(out.join("table2.csv")).unwrap();
    let rows: Vec<&str> = t2.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows.iter().filter(|r| r.contains(",mean,")).count(), 2);
    assert!(rows[0].starts_with("TDS,0,") && rows[5].starts_with("SS,0,"));
    assert!(rows[10].starts_with("TDS,mean,") && rows[11].starts_with("SS,mean,"));
    let t3 = fs::read_to_string(out.join("table3.csv")).unwrap();
    assert_eq!(t3.lines().count(), 1 + 10 + 2);
    assert!(t3.contains("without_cluster,mean,"));
}

#[test]
fn errors_are_reported_not_raised() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "train.epochz = 3\n").unwrap();
    assert_eq!(call(&["train", "--out", path(dir.path()), "--config", path(&cfg)]), 1);
    assert_eq!(call(&["train", "--out", path(dir.path()), "--set", "train.epochs=0"]), 1);
    assert_eq!(call(&["ablate", "--variants", "XYZ"]), 1);
    assert_eq!(call(&["eval", "--run", path(dir.path())]), 1);
    assert_eq!(call(&["eval", "--run", path(dir.path()), "--protocol", "sideways"]), 2);

    let out = Command::new(env!("CARGO_BIN_EXE_compgen"))
        .args(["train", "--data", "/nonexistent", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: ") && err.contains("/nonexistent"), "{err}");
}

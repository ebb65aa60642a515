mod common;

use std::fs;
use std::path::Path;

use common::{assert_same_files, small_dataset, tiny_config, write_config};
use hienet::cli::run;
use hienet::dataset::{read_cascades, Dataset};
use tempfile::TempDir;

fn hienet(args: &[&str]) -> i32 {
    run(std::iter::once("hienet").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small corpus and a tiny config, then trains on it.
fn trained(dir: &Path) {
    small_dataset(30, 3).save(&dir.join("data")).unwrap();
    write_config(&dir.join("config.json"), &tiny_config(3));
    let code = hienet(&[
        "train",
        "--data",
        s(&dir.join("data")),
        "--config",
        s(&dir.join("config.json")),
        "-o",
        s(&dir.join("run")),
    ]);
    assert_eq!(code, 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(hienet(&[]), 1);
    assert_eq!(hienet(&["frobnicate"]), 1);
    assert_eq!(hienet(&["synth", "--bogus", "-o", "x"]), 1);
    assert_eq!(hienet(&["train", "--data", "x", "-o", "y", "--disable-branch", "zz"]), 1);
    assert_eq!(hienet(&["--help"]), 0);
}

#[test]
fn missing_data_exits_two() {
    let tmp = TempDir::new().unwrap();
    let code = hienet(&["train", "--data", s(&tmp.path().join("nope")), "--desk", "-o", s(tmp.path())]);
    assert_eq!(code, 2);
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        assert_eq!(hienet(&["synth", "--cascades", "40", "--users", "300", "--seed", seed, "-o", s(dir)]), 0);
    }
    assert_same_files(&a, &b);
    assert_ne!(fs::read(a.join("cascades.txt")).unwrap(), fs::read(c.join("cascades.txt")).unwrap());
}

#[test]
fn zero_branching_gives_root_only_cascades() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(hienet(&["synth", "--cascades", "25", "--branching", "0", "-o", s(tmp.path())]), 0);
    let records = read_cascades(&tmp.path().join("cascades.txt")).unwrap();
    assert_eq!(records.len(), 25);
    assert!(records.iter().all(|r| r.final_size == 0 && r.events.len() == 1));
}

#[test]
fn ingest_accepts_valid_and_rejects_malformed_files() {
    let tmp = TempDir::new().unwrap();
    let good = tmp.path().join("good.txt");
    fs::write(&good, "m1\tu0\t100\t2\tu0:0 u0/u1:5 u0/u1/u2:9\n\nm2\tu3\t200\t0\tu3:0\n").unwrap();
    let out = tmp.path().join("ingested");
    assert_eq!(hienet(&["ingest", "--input", s(&good), "--horizon", "50", "-o", s(&out)]), 0);
    let data = Dataset::load(&out).unwrap();
    assert_eq!(data.records.len(), 2);
    assert_eq!(data.manifest.label_horizon, 50);

    let bad = tmp.path().join("bad.txt");
    fs::write(&bad, "m1\tu0\t100\tnot-a-number\tu0:0\n").unwrap();
    assert_eq!(hienet(&["ingest", "--input", s(&bad), "--horizon", "50", "-o", s(&tmp.path().join("x"))]), 2);
}

#[test]
fn window_not_shorter_than_horizon_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    small_dataset(10, 1).save(&tmp.path().join("data")).unwrap();
    let code = hienet(&["train", "--data", s(&tmp.path().join("data")), "--desk", "--window", "86400", "-o", s(tmp.path())]);
    assert_eq!(code, 1);
}

#[test]
fn train_eval_predict_round() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    trained(dir);
    let run_dir = dir.join("run");
    for f in ["metrics.json", "per_cascade.csv", "checkpoint/params.bin", "checkpoint/config.json"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    let header = fs::read_to_string(run_dir.join("per_cascade.csv")).unwrap();
    assert!(header.starts_with("message_id,true,predicted\n"));

    let ckpt = run_dir.join("checkpoint");
    let eval_dir = dir.join("eval");
    let code = hienet(&["eval", "--checkpoint", s(&ckpt), "--data", s(&dir.join("data")), "--split", "all", "-o", s(&eval_dir)]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(eval_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"]["count"], 30);
    assert!(report["mean_predictor"]["msle"].as_f64().unwrap() > 0.0);
    let rows = fs::read_to_string(eval_dir.join("per_cascade.csv")).unwrap();
    assert_eq!(rows.lines().count(), 31);

    let code = hienet(&["predict", "--checkpoint", s(&ckpt), "--input", s(&dir.join("data/cascades.txt"))]);
    assert_eq!(code, 0);
}

#[test]
fn eval_rejects_mismatched_window_horizon_and_unit() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    trained(dir);
    let ckpt = dir.join("run/checkpoint");
    let data = dir.join("data");
    let out = dir.join("eval");
    let eval = |data: &Path, extra: &[&str]| {
        let mut args = vec!["eval", "--checkpoint", s(&ckpt), "--data", s(data), "-o", s(&out)];
        args.extend_from_slice(extra);
        hienet(&args)
    };
    assert_eq!(eval(&data, &["--window", "1800"]), 2);
    assert_eq!(eval(&data, &["--window", "3600", "--split", "all"]), 0);

    let mut other = Dataset::load(&data).unwrap();
    other.manifest.label_horizon = 7200;
    other.save(&dir.join("horizon")).unwrap();
    assert_eq!(eval(&dir.join("horizon"), &["--split", "all"]), 2);

    let mut other = Dataset::load(&data).unwrap();
    other.manifest.time_unit = hienet::dataset::TimeUnit::Years;
    other.save(&dir.join("unit")).unwrap();
    assert_eq!(eval(&dir.join("unit"), &["--split", "all"]), 2);
}

#[test]
fn eval_on_an_empty_split_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    trained(dir);
    // A one-cascade dataset cannot populate every split.
    let mut data = Dataset::load(&dir.join("data")).unwrap();
    let keep = data
        .records
        .iter()
        .position(|r| hienet::dataset::split_of(&r.message_id) == hienet::dataset::Split::Train)
        .unwrap();
    data.records = vec![data.records[keep].clone()];
    data.save(&dir.join("one")).unwrap();
    let code = hienet(&[
        "eval",
        "--checkpoint",
        s(&dir.join("run/checkpoint")),
        "--data",
        s(&dir.join("one")),
        "--split",
        "test",
        "-o",
        s(&dir.join("eval")),
    ]);
    assert_eq!(code, 2);
    assert!(!dir.join("eval/metrics.json").exists());
}

#[test]
fn gradcheck_passes_at_seed_seven() {
    assert_eq!(hienet(&["gradcheck", "--seed", "7"]), 0);
}

#[test]
fn ablate_rejects_branch_and_fusion_flags() {
    assert_eq!(hienet(&["ablate", "--data", "x", "--fusion", "concat", "-o", "y"]), 1);
    assert_eq!(hienet(&["ablate", "--data", "x", "--disable-branch", "cs", "-o", "y"]), 1);
}

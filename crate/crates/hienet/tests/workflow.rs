mod common;

use std::fs;

use common::{assert_same_files, small_dataset, tiny_config};
use hienet::checkpoint::{Checkpoint, CONFIG_JSON};
use hienet::config::{SplitMode, TrainConfig};
use hienet::evaluate::evaluate;
use hienet::pipeline::prepare;
use hienet::train::{train, write_outputs};
use hienet::HarnessError;
use tempfile::TempDir;

#[test]
fn zero_learning_rate_freezes_metrics() {
    let mut c = tiny_config(4);
    c.lr = 0.0;
    let out = train(&small_dataset(30, 2), &c, None).unwrap();
    let first = &out.report.epochs[0];
    assert_eq!(out.report.epochs.len(), 5);
    for e in &out.report.epochs[1..] {
        assert_eq!((&e.train, &e.validation), (&first.train, &first.validation));
    }
    assert_eq!(out.report.best_epoch, 0);
}

#[test]
fn resume_with_zero_epochs_reproduces_the_saved_best() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(30, 4);
    let out = train(&data, &tiny_config(6), None).unwrap();
    write_outputs(&out, tmp.path()).unwrap();
    let (ckpt, _) = Checkpoint::load(&tmp.path().join("checkpoint")).unwrap();
    let resumed = train(&data, &tiny_config(0), Some(ckpt)).unwrap();
    assert_eq!(resumed.report.epochs.len(), 1);
    assert_eq!(resumed.report.best_validation_msle, out.report.best_validation_msle);
    assert_eq!(resumed.report.test, out.report.test);
}

#[test]
fn resume_rejects_a_different_architecture() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(30, 4);
    let out = train(&data, &tiny_config(1), None).unwrap();
    write_outputs(&out, tmp.path()).unwrap();
    let (ckpt, _) = Checkpoint::load(&tmp.path().join("checkpoint")).unwrap();
    let mut other = tiny_config(1);
    other.model.d_model = 16;
    assert!(matches!(train(&data, &other, Some(ckpt)), Err(HarnessError::Usage(_))));
}

#[test]
fn evaluation_after_training_matches_the_logged_train_msle() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(10, 5);
    let mut c = tiny_config(30);
    c.split = SplitMode::All;
    let out = train(&data, &c, None).unwrap();
    write_outputs(&out, tmp.path()).unwrap();

    let (ckpt, model) = Checkpoint::load(&tmp.path().join("checkpoint")).unwrap();
    let cascades = prepare(&data.records, &ckpt.global, &ckpt.config.train).unwrap();
    let all: Vec<_> = cascades.iter().collect();
    let eval = evaluate(&model, &ckpt.store, &all).unwrap();
    let logged = &out.report.epochs[out.report.best_epoch].train;
    assert!((eval.metrics.msle - logged.msle).abs() < 1e-9);
    assert_eq!(eval.metrics.count, 10);
}

#[test]
fn checkpoint_round_trips_byte_exactly() {
    let tmp = TempDir::new().unwrap();
    let out = train(&small_dataset(30, 6), &tiny_config(2), None).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    out.best.save(&a).unwrap();
    let (loaded, _) = Checkpoint::load(&a).unwrap();
    loaded.save(&b).unwrap();
    assert_same_files(&a, &b);
    assert_eq!(loaded.config, out.best.config);
}

#[test]
fn config_echo_round_trips_every_key() {
    let tmp = TempDir::new().unwrap();
    let mut c = tiny_config(1);
    c.seed = 11;
    c.weight_decay = 0.25;
    c.social.alpha = 0.7;
    c.walk.beta = 1.5;
    c.model.use_sg = false;
    let out = train(&small_dataset(30, 6), &c, None).unwrap();
    out.best.save(tmp.path()).unwrap();
    let echo: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join(CONFIG_JSON)).unwrap()).unwrap();
    let back: TrainConfig = serde_json::from_value(echo["train"].clone()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn training_is_reproducible() {
    let data = small_dataset(30, 7);
    let run = || serde_json::to_string(&train(&data, &tiny_config(3), None).unwrap().report).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn evaluating_nothing_is_an_error() {
    let out = train(&small_dataset(30, 8), &tiny_config(0), None).unwrap();
    assert!(evaluate(&out.model, &out.best.store, &[]).is_err());
}

#[test]
fn diverging_training_names_the_operation() {
    let mut c = tiny_config(5);
    c.lr = 1e300;
    match train(&small_dataset(30, 9), &c, None) {
        Err(HarnessError::NonFinite(msg)) => assert!(!msg.is_empty()),
        other => panic!("expected a non-finite error, got {:?}", other.map(|o| o.report.best_epoch)),
    }
}

#[test]
fn too_few_cascades_is_rejected() {
    assert!(train(&small_dataset(1, 1), &tiny_config(1), None).is_err());
}

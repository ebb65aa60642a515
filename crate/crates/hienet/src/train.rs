//! Minibatch Adam on the log-space squared error with best-validation
//! checkpointing.

use std::fs;
use std::path::Path;

use hienet_core::model::Hienet;
use hienet_core::nn::{Adam, AdamConfig, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ConfigEcho};
use crate::config::TrainConfig;
use crate::dataset::{Dataset, Split};
use crate::error::{usage, HarnessError, Result};
use crate::evaluate::{constant_baseline, evaluate, mean_log_label, MetricSummary};
use crate::pipeline::{check_window, members, observed_social_graph, prepare, PreparedCascade};

pub const METRICS_JSON: &str = "metrics.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train: MetricSummary,
    pub validation: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: ConfigEcho,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_validation_msle: f64,
    /// Mean training-set `log2(S + 1)`, the constant baseline's prediction.
    pub mean_log_label: f64,
    pub baseline_validation: MetricSummary,
    /// Best checkpoint on the test split.
    pub test: Option<MetricSummary>,
    pub baseline_test: Option<MetricSummary>,
}

impl TrainReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(HarnessError::json(path))?;
        text.push('\n');
        fs::write(path, text).map_err(HarnessError::io(path))
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters of the best validation epoch.
    pub best: Checkpoint,
    pub model: Hienet,
    pub cascades: Vec<PreparedCascade>,
}

/// Trains on `dataset`. With `resume`, the checkpoint's parameters and
/// social graph are the starting point and its architecture must match.
pub fn train(dataset: &Dataset, config: &TrainConfig, resume: Option<Checkpoint>) -> Result<TrainOutcome> {
    config.validate()?;
    check_window(config, &dataset.manifest)?;
    let echo = ConfigEcho::new(config, &dataset.manifest);
    let (global, start) = match resume {
        Some(ckpt) => {
            if ckpt.config.train.hienet() != config.hienet() {
                return Err(usage("resumed checkpoint was trained with a different model configuration"));
            }
            (ckpt.global, Some(ckpt.store))
        }
        None => (observed_social_graph(&dataset.records, config.window), None),
    };
    let cascades = prepare(&dataset.records, &global, config)?;
    let train_idx = members(&cascades, config.split, Split::Train);
    let val_idx = members(&cascades, config.split, Split::Validation);
    let test_idx = members(&cascades, config.split, Split::Test);
    if train_idx.len() < 2 || val_idx.is_empty() {
        return Err(usage(format!(
            "need at least 2 training and 1 validation cascade, got {} and {}",
            train_idx.len(),
            val_idx.len()
        )));
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| &cascades[i]).collect::<Vec<_>>();
    let (train_set, val_set, test_set) = (pick(&train_idx), pick(&val_idx), pick(&test_idx));

    let (model, mut store) = Hienet::new(&config.hienet(), global.node_count(), config.seed)?;
    if let Some(s) = start {
        store = s;
    }
    let mut adam = Adam::new(
        &store,
        AdamConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed0f7a1e);

    let log_epoch = |epoch, store: &_| -> Result<EpochLog> {
        Ok(EpochLog {
            epoch,
            train: evaluate(&model, store, &train_set)?.metrics,
            validation: evaluate(&model, store, &val_set)?.metrics,
        })
    };
    let mut epochs = vec![log_epoch(0, &store)?];
    let mut best = (0, epochs[0].validation.msle, store.clone());
    let mut order = train_idx.clone();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| (&cascades[i].features, cascades[i].label)).collect();
            let grads = {
                let mut tape = Tape::new(&store);
                let loss = model.batch_loss(&mut tape, &batch)?;
                if !tape.scalar(loss).is_finite() {
                    let op = tape.first_non_finite().map_or("unknown", |(_, op)| op);
                    return Err(HarnessError::NonFinite(format!(
                        "epoch {epoch}: loss is not finite; first non-finite value produced by `{op}`"
                    )));
                }
                tape.backward(loss)?
            };
            adam.step(&mut store, &grads);
        }
        let entry = log_epoch(epoch, &store)?;
        log::info!(
            "epoch {epoch}: train msle {:.4}, validation msle {:.4}",
            entry.train.msle,
            entry.validation.msle
        );
        if entry.validation.msle < best.1 {
            best = (epoch, entry.validation.msle, store.clone());
        }
        epochs.push(entry);
    }

    let (best_epoch, best_validation_msle, best_store) = best;
    let mean = mean_log_label(&train_set)?;
    let test = if test_set.is_empty() {
        None
    } else {
        Some(evaluate(&model, &best_store, &test_set)?.metrics)
    };
    let baseline_test = if test_set.is_empty() {
        None
    } else {
        Some(constant_baseline(mean, &test_set)?)
    };
    let report = TrainReport {
        config: echo.clone(),
        epochs,
        best_epoch,
        best_validation_msle,
        mean_log_label: mean,
        baseline_validation: constant_baseline(mean, &val_set)?,
        test,
        baseline_test,
    };
    Ok(TrainOutcome {
        report,
        best: Checkpoint {
            config: echo,
            global,
            store: best_store,
        },
        model,
        cascades,
    })
}

/// Writes `metrics.json` and the best checkpoint under `out`.
pub fn write_outputs(outcome: &TrainOutcome, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    outcome.report.write(&out.join(METRICS_JSON))?;
    outcome.best.save(&out.join("checkpoint"))
}

//! Log-space targets, the training loss and evaluation metrics.
//!
//! Popularity is compared in `log2(S + 1)` space, which stays finite for
//! cascades that do not grow at all.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{Tape, Tensor, Var};

/// Lower bound applied to raw predictions at inference time.
pub const INFERENCE_FLOOR: f64 = 0.0;

pub fn log_popularity(size: u64) -> f64 {
    libm::log2(size as f64 + 1.0)
}

/// Inverse of [`log_popularity`] after clamping at the inference floor.
pub fn popularity_from_log(log_value: f64) -> f64 {
    libm::exp2(log_value.max(INFERENCE_FLOOR)) - 1.0
}

fn check_lengths(preds: usize, targets: usize) -> Result<()> {
    if preds != targets {
        return Err(Error::Invalid(alloc::format!(
            "{preds} predictions for {targets} targets"
        )));
    }
    if preds == 0 {
        return Err(Error::Invalid("no predictions".into()));
    }
    Ok(())
}

/// Mean squared error between predicted log values and `log2(S + 1)`
/// targets, on the tape. `preds` are `1 × 1` nodes.
pub fn msle_loss(tape: &mut Tape<'_>, preds: &[Var], targets: &[u64]) -> Result<Var> {
    check_lengths(preds.len(), targets.len())?;
    let p = tape.concat_rows(preds)?;
    let t = Tensor::from_vec(targets.len(), 1, targets.iter().map(|&s| log_popularity(s)).collect())?;
    let t = tape.constant(t);
    let d = tape.sub(p, t)?;
    let sq = tape.mul(d, d)?;
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / targets.len() as f64))
}

/// Per-example squared errors in log space.
pub fn squared_log_errors(pred_logs: &[f64], targets: &[u64]) -> Result<Vec<f64>> {
    check_lengths(pred_logs.len(), targets.len())?;
    Ok(pred_logs
        .iter()
        .zip(targets)
        .map(|(p, &s)| {
            let d = p - log_popularity(s);
            d * d
        })
        .collect())
}

pub fn msle(pred_logs: &[f64], targets: &[u64]) -> Result<f64> {
    let e = squared_log_errors(pred_logs, targets)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub msle: f64,
    /// Median squared log error; the lower median for even counts.
    pub median_sle: f64,
}

impl Metrics {
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::Invalid("no predictions".into()));
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Metrics {
            msle: errors.iter().sum::<f64>() / errors.len() as f64,
            median_sle: sorted[(sorted.len() - 1) / 2],
        })
    }

    pub fn compute(pred_logs: &[f64], targets: &[u64]) -> Result<Self> {
        Self::from_errors(&squared_log_errors(pred_logs, targets)?)
    }
}

use std::path::Path;

use hienet_core::model::{log_popularity, popularity_from_log, Hienet, Metrics};
use hienet_core::nn::ParamStore;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::pipeline::PreparedCascade;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub message_id: String,
    #[serde(rename = "true")]
    pub true_size: u64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub msle: f64,
    pub median_sle: f64,
    pub count: usize,
}

impl MetricSummary {
    fn new(m: Metrics, count: usize) -> Self {
        MetricSummary {
            msle: m.msle,
            median_sle: m.median_sle,
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricSummary,
    pub rows: Vec<PredictionRow>,
}

/// Clamped log predictions for the given cascades.
pub fn predict_logs(model: &Hienet, store: &ParamStore, cascades: &[&PreparedCascade]) -> Result<Vec<f64>> {
    cascades.iter().map(|c| Ok(model.predict(store, &c.features)?)).collect()
}

pub fn evaluate(model: &Hienet, store: &ParamStore, cascades: &[&PreparedCascade]) -> Result<Evaluation> {
    if cascades.is_empty() {
        return Err(HarnessError::Incompatible("nothing to evaluate: the selected set is empty".into()));
    }
    let preds = predict_logs(model, store, cascades)?;
    let labels: Vec<u64> = cascades.iter().map(|c| c.label).collect();
    let metrics = MetricSummary::new(Metrics::compute(&preds, &labels)?, cascades.len());
    let rows = cascades
        .iter()
        .zip(&preds)
        .map(|(c, p)| PredictionRow {
            message_id: c.message_id().to_string(),
            true_size: c.label,
            predicted: popularity_from_log(*p),
        })
        .collect();
    Ok(Evaluation { metrics, rows })
}

/// Mean of `log2(S + 1)` over a reference set.
pub fn mean_log_label(cascades: &[&PreparedCascade]) -> Result<f64> {
    if cascades.is_empty() {
        return Err(HarnessError::Incompatible("mean predictor needs a non-empty reference set".into()));
    }
    Ok(cascades.iter().map(|c| log_popularity(c.label)).sum::<f64>() / cascades.len() as f64)
}

/// Metrics of the constant predictor `mean` on `cascades`.
pub fn constant_baseline(mean: f64, cascades: &[&PreparedCascade]) -> Result<MetricSummary> {
    if cascades.is_empty() {
        return Err(HarnessError::Incompatible("nothing to evaluate: the selected set is empty".into()));
    }
    let preds = vec![mean; cascades.len()];
    let labels: Vec<u64> = cascades.iter().map(|c| c.label).collect();
    Ok(MetricSummary::new(Metrics::compute(&preds, &labels)?, cascades.len()))
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(HarnessError::io(path))
}

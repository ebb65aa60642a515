//! Turns records into model inputs: the frozen social graph, per-cascade
//! features (extracted in parallel) and the data split.

use hienet_core::model::{extract_features, CascadeFeatures};
use hienet_core::{build_global_graph, compute_label, CascadeRecord, GlobalSocialGraph};
use rayon::prelude::*;

use crate::config::{SplitMode, TrainConfig};
use crate::dataset::{split_of, DatasetManifest, Split};
use crate::error::{usage, Result};

#[derive(Debug, Clone)]
pub struct PreparedCascade {
    pub features: CascadeFeatures,
    /// Incremental popularity after the window.
    pub label: u64,
    pub split: Split,
}

impl PreparedCascade {
    pub fn message_id(&self) -> &str {
        &self.features.message_id
    }
}

/// Social graph over what is visible inside the observation window of
/// every cascade; later retweets never leak into it.
pub fn observed_social_graph(records: &[CascadeRecord], window: u64) -> GlobalSocialGraph {
    let truncated: Vec<CascadeRecord> = records.iter().map(|r| r.truncated(window)).collect();
    build_global_graph(&truncated)
}

pub fn check_window(config: &TrainConfig, manifest: &DatasetManifest) -> Result<()> {
    if config.window >= manifest.label_horizon {
        return Err(usage(format!(
            "window {} must be shorter than the label horizon {}",
            config.window, manifest.label_horizon
        )));
    }
    Ok(())
}

pub fn prepare(records: &[CascadeRecord], global: &GlobalSocialGraph, config: &TrainConfig) -> Result<Vec<PreparedCascade>> {
    let hienet = config.hienet();
    records
        .par_iter()
        .map(|r| {
            Ok(PreparedCascade {
                features: extract_features(r, config.window, global, &hienet, config.seed)?,
                label: compute_label(r, config.window),
                split: split_of(&r.message_id),
            })
        })
        .collect()
}

/// Indices of the cascades that belong to `split` under `mode`.
pub fn members(cascades: &[PreparedCascade], mode: SplitMode, split: Split) -> Vec<usize> {
    (0..cascades.len())
        .filter(|&i| mode == SplitMode::All || cascades[i].split == split)
        .collect()
}

//! Training configuration: JSON on disk, CLI flags layered on top, and the
//! resolved result echoed into every artifact.

use std::fs;
use std::path::Path;

use hienet_core::model::{CsConfig, FusionMode, HienetConfig, ModelConfig, SnapshotConfig, SocialConfig, WalkConfig};
use serde::{Deserialize, Serialize};

use crate::error::{usage, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// 80/10/10 by message-id hash.
    Hash,
    /// Every cascade is used for training, validation and test.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Observation window in dataset time units.
    pub window: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    /// Decoupled weight decay applied by the optimizer.
    pub weight_decay: f64,
    pub split: SplitMode,
    pub walk: WalkConfig,
    pub social: SocialConfig,
    pub snapshot: SnapshotConfig,
    pub cs: CsConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            window: 3600,
            epochs: 50,
            batch_size: 16,
            seed: 0,
            lr: 1e-4,
            weight_decay: 0.0,
            split: SplitMode::Hash,
            walk: WalkConfig::default(),
            social: SocialConfig::default(),
            snapshot: SnapshotConfig::default(),
            cs: CsConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// A configuration small enough to train the 200-cascade synthetic
    /// corpus for hundreds of epochs in a few minutes on one core.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 16,
            lr: 3e-3,
            walk: WalkConfig {
                count: 8,
                length: 8,
                ..WalkConfig::default()
            },
            social: SocialConfig {
                max_pairs: 8,
                ..SocialConfig::default()
            },
            snapshot: SnapshotConfig {
                m_max: 8,
                time_bins: 64,
                pe_dim: 8,
            },
            model: ModelConfig {
                d_model: 16,
                embed_dim: 8,
                lstm_hidden: 8,
                gcn_hidden: 8,
                gcn_layers: 2,
                heads: 2,
                ff_dim: 32,
                mlp_sizes: vec![32, 16],
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let config: TrainConfig = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn hienet(&self) -> HienetConfig {
        HienetConfig {
            walk: self.walk.clone(),
            social: self.social.clone(),
            snapshot: self.snapshot.clone(),
            cs: self.cs.clone(),
            model: self.model.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(usage("window must be positive"));
        }
        if self.batch_size == 0 {
            return Err(usage("batch_size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(usage("lr must be a non-negative number"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(usage("weight_decay must be a non-negative number"));
        }
        self.hienet().validate().map_err(|e| usage(e.to_string()))
    }

    pub fn disable_branch(&mut self, branch: &str) -> Result<()> {
        match branch {
            "cs" => self.model.use_cs = false,
            "sg" => self.model.use_sg = false,
            "cg" => self.model.use_cg = false,
            other => return Err(usage(format!("unknown branch {other:?} (expected cs, sg or cg)"))),
        }
        Ok(())
    }

    pub fn set_fusion(&mut self, fusion: FusionMode) {
        self.model.fusion = fusion;
    }
}

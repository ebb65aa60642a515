//! The multi-modal cascade model: feature extraction for the three
//! branches, the network itself, and the log-space loss and metrics.

mod features;
mod loss;
mod network;

pub use features::{extract_features, CascadeFeatures, EmbeddingRows, SnapshotGraph};
pub use loss::{
    log_popularity, msle, msle_loss, popularity_from_log, squared_log_errors, Metrics, INFERENCE_FLOOR,
};
pub use network::{Branch, Hienet};

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{snapshot, social, walk};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub count: usize,
    pub length: usize,
    pub beta: f64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            count: walk::DEFAULT_WALKS,
            length: walk::DEFAULT_WALK_LENGTH,
            beta: walk::DEFAULT_BETA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SocialConfig {
    pub max_pairs: usize,
    pub alpha: f64,
}

impl Default for SocialConfig {
    fn default() -> Self {
        SocialConfig {
            max_pairs: social::DEFAULT_MAX_PAIRS,
            alpha: social::DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotConfig {
    pub m_max: usize,
    pub time_bins: usize,
    pub pe_dim: usize,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        SnapshotConfig {
            m_max: snapshot::DEFAULT_M_MAX,
            time_bins: snapshot::DEFAULT_TIME_BINS,
            pe_dim: snapshot::DEFAULT_PE_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsConfig {
    /// Walk-level BiLSTM followed by a BiLSTM across walks; when false the
    /// per-walk vectors are mean-pooled instead.
    pub hierarchical: bool,
}

impl Default for CsConfig {
    fn default() -> Self {
        CsConfig { hierarchical: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Transformer,
    Concat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub embed_dim: usize,
    pub lstm_hidden: usize,
    pub gcn_hidden: usize,
    pub gcn_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub mlp_sizes: Vec<usize>,
    pub use_cs: bool,
    pub use_sg: bool,
    pub use_cg: bool,
    pub fusion: FusionMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            embed_dim: 32,
            lstm_hidden: 256,
            gcn_hidden: 32,
            gcn_layers: 2,
            heads: 4,
            ff_dim: 128,
            mlp_sizes: alloc::vec![128, 32],
            use_cs: true,
            use_sg: true,
            use_cg: true,
            fusion: FusionMode::Transformer,
        }
    }
}

/// Everything that shapes features and the network.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HienetConfig {
    pub walk: WalkConfig,
    pub social: SocialConfig,
    pub snapshot: SnapshotConfig,
    pub cs: CsConfig,
    pub model: ModelConfig,
}

impl HienetConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if !(m.use_cs || m.use_sg || m.use_cg) {
            return Err(Error::config("at least one branch must be enabled"));
        }
        if m.mlp_sizes.is_empty() || m.mlp_sizes.contains(&0) {
            return Err(Error::config("mlp_sizes must be non-empty and positive"));
        }
        if m.heads == 0 || !m.d_model.is_multiple_of(m.heads) {
            return Err(Error::config(alloc::format!(
                "d_model {} is not divisible by {} heads",
                m.d_model,
                m.heads
            )));
        }
        let widths = [m.d_model, m.embed_dim, m.lstm_hidden, m.gcn_hidden, m.gcn_layers, m.ff_dim];
        if widths.contains(&0) {
            return Err(Error::config("model widths and gcn_layers must be positive"));
        }
        if self.walk.count == 0 || self.walk.length == 0 {
            return Err(Error::config("walk count and length must be positive"));
        }
        if !(self.walk.beta > 0.0 && self.walk.beta.is_finite()) {
            return Err(Error::config("walk.beta must be positive"));
        }
        if !(self.social.alpha > 0.0 && self.social.alpha < 1.0) {
            return Err(Error::config("social.alpha must lie in (0, 1)"));
        }
        if self.social.max_pairs == 0 {
            return Err(Error::config("social.max_pairs must be positive"));
        }
        if self.snapshot.m_max == 0 || self.snapshot.time_bins == 0 {
            return Err(Error::config("snapshot.m_max and snapshot.time_bins must be positive"));
        }
        if self.snapshot.pe_dim == 0 || !self.snapshot.pe_dim.is_multiple_of(2) {
            return Err(Error::config("snapshot.pe_dim must be even and positive"));
        }
        Ok(())
    }
}

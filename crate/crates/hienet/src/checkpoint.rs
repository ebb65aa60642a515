//! Checkpoint directory layout:
//!
//! * `params.json`: `[{name, shape, dtype: "f64", offset}]`, offsets in bytes
//! * `params.bin`: every tensor, row-major little-endian f64, in order
//! * `config.json`: resolved training config plus the dataset's time unit
//!   and label horizon
//! * `users.json`: user ids in embedding-row order
//! * `social_edges.json`: the frozen social graph as `[a, b]` row pairs

use std::fs;
use std::path::Path;

use hienet_core::model::Hienet;
use hienet_core::nn::{ParamStore, Tensor};
use hienet_core::{GlobalSocialGraph, UserId};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::dataset::{DatasetManifest, TimeUnit};
use crate::error::{HarnessError, Result};

pub const PARAMS_JSON: &str = "params.json";
pub const PARAMS_BIN: &str = "params.bin";
pub const CONFIG_JSON: &str = "config.json";
pub const USERS_JSON: &str = "users.json";
pub const SOCIAL_EDGES_JSON: &str = "social_edges.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub train: TrainConfig,
    pub time_unit: TimeUnit,
    pub label_horizon: u64,
}

impl ConfigEcho {
    pub fn new(train: &TrainConfig, manifest: &DatasetManifest) -> Self {
        ConfigEcho {
            train: train.clone(),
            time_unit: manifest.time_unit,
            label_horizon: manifest.label_horizon,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ConfigEcho,
    pub global: GlobalSocialGraph,
    pub store: ParamStore,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(HarnessError::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(HarnessError::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
    serde_json::from_str(&text).map_err(HarnessError::json(path))
}

fn incompatible(path: &Path, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Incompatible(format!("{}: {msg}", path.display()))
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        let mut entries = Vec::with_capacity(self.store.len());
        let mut blob = Vec::with_capacity(self.store.scalar_count() * 8);
        for (_, p) in self.store.iter() {
            entries.push(TensorEntry {
                name: p.name.clone(),
                shape: p.tensor.shape(),
                dtype: "f64".into(),
                offset: blob.len(),
            });
            for x in p.tensor.data() {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
        write_json(&dir.join(PARAMS_JSON), &entries)?;
        let bin = dir.join(PARAMS_BIN);
        fs::write(&bin, blob).map_err(HarnessError::io(&bin))?;
        write_json(&dir.join(CONFIG_JSON), &self.config)?;
        let users: Vec<&str> = self.global.users().iter().map(UserId::as_str).collect();
        write_json(&dir.join(USERS_JSON), &users)?;
        write_json(&dir.join(SOCIAL_EDGES_JSON), &self.global.edge_list())
    }

    /// Loads a checkpoint and rebuilds the network it belongs to. Every
    /// tensor the network expects must be present with the right shape.
    pub fn load(dir: &Path) -> Result<(Self, Hienet)> {
        let config: ConfigEcho = read_json(&dir.join(CONFIG_JSON))?;
        let users: Vec<String> = read_json(&dir.join(USERS_JSON))?;
        let users: Vec<UserId> = users.into_iter().map(UserId::new).collect();
        let edges: Vec<(usize, usize)> = read_json(&dir.join(SOCIAL_EDGES_JSON))?;
        let global = GlobalSocialGraph::from_parts(users, &edges).map_err(|e| incompatible(dir, e))?;
        let entries: Vec<TensorEntry> = read_json(&dir.join(PARAMS_JSON))?;
        let bin = dir.join(PARAMS_BIN);
        let blob = fs::read(&bin).map_err(HarnessError::io(&bin))?;

        config.train.validate()?;
        let (model, mut store) = Hienet::new(&config.train.hienet(), global.node_count(), config.train.seed)?;
        if entries.len() != store.len() {
            return Err(incompatible(dir, format!("{} tensors, network has {}", entries.len(), store.len())));
        }
        for e in &entries {
            if e.dtype != "f64" {
                return Err(incompatible(dir, format!("{}: unsupported dtype {}", e.name, e.dtype)));
            }
            let id = store
                .id(&e.name)
                .ok_or_else(|| incompatible(dir, format!("unexpected tensor {}", e.name)))?;
            if store.tensor(id).shape() != e.shape {
                return Err(incompatible(dir, format!("{}: shape {:?}, expected {:?}", e.name, e.shape, store.tensor(id).shape())));
            }
            let len = e.shape[0] * e.shape[1] * 8;
            let bytes = blob
                .get(e.offset..e.offset + len)
                .ok_or_else(|| incompatible(&bin, format!("{} runs past the end", e.name)))?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            *store.tensor_mut(id) = Tensor::from_vec(e.shape[0], e.shape[1], data)?;
        }
        Ok((Checkpoint { config, global, store }, model))
    }
}

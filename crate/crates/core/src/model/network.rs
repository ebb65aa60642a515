use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::features::{CascadeFeatures, EmbeddingRows, SnapshotGraph};
use super::loss::{msle_loss, INFERENCE_FLOOR};
use super::{FusionMode, HienetConfig};
use crate::error::{Error, Result};
use crate::nn::{
    bilstm_forward, gcn_layer, Activation, BiLstm, Linear, Mlp, ParamId, ParamStore, Tape, Tensor, TransformerLayer,
    Var,
};

const TOKEN_INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Branch {
    /// Cascade sequences (walks through BiLSTMs).
    Sequence,
    /// Social-graph paths.
    Social,
    /// Sub-cascade snapshots through the GCN.
    Subcascade,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Sequence, Branch::Social, Branch::Subcascade];

    pub fn key(self) -> &'static str {
        match self {
            Branch::Sequence => "cs",
            Branch::Social => "sg",
            Branch::Subcascade => "cg",
        }
    }
}

fn normal_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let dist = Normal::new(0.0, TOKEN_INIT_STD).expect("valid std");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized above")
}

/// Network definition. Parameters live in the [`ParamStore`] returned by
/// [`Hienet::new`]; every branch is always allocated so that ablated runs
/// keep the same parameter set (disabled branches just never receive
/// gradient).
#[derive(Debug, Clone)]
pub struct Hienet {
    config: HienetConfig,
    rows: EmbeddingRows,
    embedding: ParamId,
    walk_encoder: BiLstm,
    path_encoder: BiLstm,
    sequence_proj: Linear,
    social_proj: Linear,
    gcn: Vec<ParamId>,
    subcascade_proj: Linear,
    cas_token: ParamId,
    null_tokens: [ParamId; 3],
    transformer: TransformerLayer,
    concat_proj: Linear,
    mlp: Mlp,
}

impl Hienet {
    /// `users` is the number of users in the global social graph.
    pub fn new(config: &HienetConfig, users: usize, seed: u64) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let m = &config.model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let rows = EmbeddingRows { users };

        let embedding = store.add("user_embedding", normal_tensor(rows.total(), m.embed_dim, &mut rng))?;
        let walk_encoder = BiLstm::new(&mut store, "cs.walk_lstm", m.embed_dim, m.lstm_hidden, &mut rng)?;
        let path_encoder = BiLstm::new(&mut store, "cs.path_lstm", 2 * m.lstm_hidden, m.lstm_hidden, &mut rng)?;
        let sequence_proj = Linear::new(&mut store, "cs.proj", 2 * m.lstm_hidden, m.d_model, &mut rng)?;
        let social_proj = Linear::new(&mut store, "sg.proj", m.embed_dim, m.d_model, &mut rng)?;

        let mut gcn = Vec::with_capacity(m.gcn_layers);
        let mut width = config.snapshot.pe_dim;
        for l in 0..m.gcn_layers {
            let bound = libm::sqrt(6.0 / (width + m.gcn_hidden) as f64);
            let dist = rand::distr::Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let data = (0..width * m.gcn_hidden).map(|_| dist.sample(&mut rng)).collect();
            gcn.push(store.add(alloc::format!("cg.gcn{l}.weight"), Tensor::from_vec(width, m.gcn_hidden, data)?)?);
            width = m.gcn_hidden;
        }
        let subcascade_proj = Linear::new(&mut store, "cg.proj", m.gcn_hidden, m.d_model, &mut rng)?;

        let cas_token = store.add("fusion.cas_token", normal_tensor(1, m.d_model, &mut rng))?;
        let mut null_tokens = [cas_token; 3];
        for (slot, b) in null_tokens.iter_mut().zip(Branch::ALL) {
            *slot = store.add(alloc::format!("fusion.null_{}", b.key()), normal_tensor(1, m.d_model, &mut rng))?;
        }
        let transformer = TransformerLayer::new(&mut store, "fusion.transformer", m.d_model, m.heads, m.ff_dim, &mut rng)?;
        let enabled = [m.use_cs, m.use_sg, m.use_cg].iter().filter(|x| **x).count();
        let concat_proj = Linear::new(&mut store, "fusion.concat_proj", enabled * m.d_model, m.d_model, &mut rng)?;
        let mlp = Mlp::new(&mut store, "mlp", m.d_model, &m.mlp_sizes, &mut rng)?;

        Ok((
            Hienet {
                config: config.clone(),
                rows,
                embedding,
                walk_encoder,
                path_encoder,
                sequence_proj,
                social_proj,
                gcn,
                subcascade_proj,
                cas_token,
                null_tokens,
                transformer,
                concat_proj,
                mlp,
            },
            store,
        ))
    }

    pub fn config(&self) -> &HienetConfig {
        &self.config
    }

    pub fn embedding_rows(&self) -> EmbeddingRows {
        self.rows
    }

    pub fn embedding(&self) -> ParamId {
        self.embedding
    }

    pub fn cas_token(&self) -> ParamId {
        self.cas_token
    }

    pub fn enabled(&self, branch: Branch) -> bool {
        let m = &self.config.model;
        match branch {
            Branch::Sequence => m.use_cs,
            Branch::Social => m.use_sg,
            Branch::Subcascade => m.use_cg,
        }
    }

    /// Parameters owned by one branch encoder (the shared embedding table is
    /// not included).
    pub fn branch_params(&self, branch: Branch) -> Vec<ParamId> {
        match branch {
            Branch::Sequence => {
                let mut p: Vec<ParamId> = self.walk_encoder.params().to_vec();
                p.extend(self.path_encoder.params());
                p.extend(self.sequence_proj.params());
                p
            }
            Branch::Social => self.social_proj.params().to_vec(),
            Branch::Subcascade => {
                let mut p = self.gcn.clone();
                p.extend(self.subcascade_proj.params());
                p
            }
        }
    }

    pub fn fusion_params(&self) -> Vec<ParamId> {
        let mut p = self.transformer.params();
        p.push(self.cas_token);
        p.extend(self.null_tokens);
        p.extend(self.concat_proj.params());
        p
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// Cascade-sequence feature `f_cs` (`1 × d_model`).
    pub fn encode_cascade_sequence(&self, tape: &mut Tape<'_>, features: &CascadeFeatures) -> Result<Var> {
        if features.walk_rows.is_empty() || features.walk_rows[0].is_empty() {
            return Err(Error::Invalid("no walks".into()));
        }
        let emb = tape.param(self.embedding);
        let mut steps = Vec::with_capacity(features.walk_rows.len());
        for rows in &features.walk_rows {
            steps.push(tape.gather_rows(emb, rows)?);
        }
        let inner = bilstm_forward(tape, &self.walk_encoder, &steps, Some(&features.walk_mask))?;
        let per_walk = tape.concat_cols(&[inner.last_forward, inner.last_backward])?;
        let summary = if self.config.cs.hierarchical {
            let walks = tape.shape(per_walk)[0];
            let mut tokens = Vec::with_capacity(walks);
            for k in 0..walks {
                tokens.push(tape.slice_rows(per_walk, k, 1)?);
            }
            let outer = bilstm_forward(tape, &self.path_encoder, &tokens, None)?;
            tape.concat_cols(&[outer.last_forward, outer.last_backward])?
        } else {
            tape.mean_rows(per_walk)
        };
        self.sequence_proj.forward(tape, summary)
    }

    /// Social-graph feature `f_sg` (`1 × d_model`).
    pub fn encode_social(&self, tape: &mut Tape<'_>, features: &CascadeFeatures) -> Result<Var> {
        let emb = tape.param(self.embedding);
        let rows = tape.gather_rows(emb, &features.social.rows())?;
        let weights = tape.constant(Tensor::row(features.social.weights()));
        let pooled = tape.matmul(weights, rows)?;
        self.social_proj.forward(tape, pooled)
    }

    /// Sub-cascade feature `f_cg` (`1 × d_model`) from explicit snapshot
    /// graphs: `(propagation, node features)` per snapshot.
    pub fn encode_snapshot_graphs(&self, tape: &mut Tape<'_>, graphs: &[(Tensor, Tensor)]) -> Result<Var> {
        if graphs.is_empty() {
            return Err(Error::Invalid("no snapshots".into()));
        }
        let last = self.gcn.len() - 1;
        let mut pooled = Vec::with_capacity(graphs.len());
        for (propagation, features) in graphs {
            let p = tape.constant(propagation.clone());
            let mut h = tape.constant(features.clone());
            for (l, &w) in self.gcn.iter().enumerate() {
                let w = tape.param(w);
                let act = if l < last { Activation::Relu } else { Activation::Identity };
                h = gcn_layer(tape, p, h, w, act)?;
            }
            pooled.push(tape.mean_rows(h));
        }
        let stacked = tape.concat_rows(&pooled)?;
        let mean = tape.mean_rows(stacked);
        self.subcascade_proj.forward(tape, mean)
    }

    pub fn encode_subcascade(&self, tape: &mut Tape<'_>, features: &CascadeFeatures) -> Result<Var> {
        let graphs: Vec<(Tensor, Tensor)> = features
            .snapshots
            .iter()
            .map(|SnapshotGraph { propagation, node_count }| {
                let cols = features.encodings.cols();
                let data = features.encodings.data()[..node_count * cols].to_vec();
                Ok((propagation.clone(), Tensor::from_vec(*node_count, cols, data)?))
            })
            .collect::<Result<_>>()?;
        self.encode_snapshot_graphs(tape, &graphs)
    }

    /// Transformer fusion over the given modality tokens followed by the
    /// [CAS] token; returns the [CAS] position's output.
    pub fn fuse_tokens(&self, tape: &mut Tape<'_>, modality: &[Var]) -> Result<Var> {
        let cas = tape.param(self.cas_token);
        let mut tokens = modality.to_vec();
        tokens.push(cas);
        let x = tape.concat_rows(&tokens)?;
        let y = self.transformer.forward(tape, x)?;
        tape.slice_rows(y, modality.len(), 1)
    }

    /// Fused cascade state. Disabled branches are `None`; in transformer mode
    /// they are replaced by their learned null token, in concat mode they
    /// are left out.
    pub fn fuse(&self, tape: &mut Tape<'_>, branches: [Option<Var>; 3]) -> Result<Var> {
        if branches.iter().all(Option::is_none) {
            return Err(Error::config("all branches disabled"));
        }
        match self.config.model.fusion {
            FusionMode::Transformer => {
                let mut tokens = Vec::with_capacity(3);
                for (b, null) in branches.iter().zip(self.null_tokens) {
                    tokens.push(match b {
                        Some(v) => *v,
                        None => tape.param(null),
                    });
                }
                self.fuse_tokens(tape, &tokens)
            }
            FusionMode::Concat => {
                let parts: Vec<Var> = branches.iter().flatten().copied().collect();
                let joined = tape.concat_cols(&parts)?;
                self.concat_proj.forward(tape, joined)
            }
        }
    }

    /// Fused state for one cascade.
    pub fn cascade_state(&self, tape: &mut Tape<'_>, features: &CascadeFeatures) -> Result<Var> {
        let cs = if self.config.model.use_cs {
            Some(self.encode_cascade_sequence(tape, features)?)
        } else {
            None
        };
        let sg = if self.config.model.use_sg {
            Some(self.encode_social(tape, features)?)
        } else {
            None
        };
        let cg = if self.config.model.use_cg {
            Some(self.encode_subcascade(tape, features)?)
        } else {
            None
        };
        self.fuse(tape, [cs, sg, cg])
    }

    /// Raw (unclamped) predicted `log2(S + 1)` as a `1 × 1` node.
    pub fn forward(&self, tape: &mut Tape<'_>, features: &CascadeFeatures) -> Result<Var> {
        let state = self.cascade_state(tape, features)?;
        self.mlp.forward(tape, state)
    }

    /// Mean loss over a batch.
    pub fn batch_loss(&self, tape: &mut Tape<'_>, batch: &[(&CascadeFeatures, u64)]) -> Result<Var> {
        let mut preds = Vec::with_capacity(batch.len());
        for (f, _) in batch {
            preds.push(self.forward(tape, f)?);
        }
        let targets: Vec<u64> = batch.iter().map(|(_, s)| *s).collect();
        msle_loss(tape, &preds, &targets)
    }

    /// Inference: predicted `log2(S + 1)`, clamped at the floor.
    pub fn predict(&self, store: &ParamStore, features: &CascadeFeatures) -> Result<f64> {
        let mut tape = Tape::new(store);
        let y = self.forward(&mut tape, features)?;
        let raw = tape.scalar(y);
        if !raw.is_finite() {
            let op = tape.first_non_finite().map_or("unknown", |(_, name)| name);
            return Err(Error::Invalid(alloc::format!(
                "non-finite prediction for cascade {} (first produced by {op})",
                features.message_id
            )));
        }
        Ok(raw.max(INFERENCE_FLOOR))
    }

    /// Human-readable names for the parameters of each component, used by
    /// the gradient-check report.
    pub fn component_params(&self) -> Vec<(String, Vec<ParamId>)> {
        let mut out = alloc::vec![(String::from("embedding"), alloc::vec![self.embedding])];
        out.push(("cs.walk_lstm".into(), self.walk_encoder.params().to_vec()));
        out.push(("cs.path_lstm".into(), self.path_encoder.params().to_vec()));
        out.push(("cs.proj".into(), self.sequence_proj.params().to_vec()));
        out.push(("sg.proj".into(), self.social_proj.params().to_vec()));
        out.push(("cg.gcn".into(), self.gcn.clone()));
        out.push(("cg.proj".into(), self.subcascade_proj.params().to_vec()));
        let mut fusion = self.transformer.params();
        fusion.push(self.cas_token);
        out.push(("fusion.transformer".into(), fusion));
        out.push(("fusion.concat_proj".into(), self.concat_proj.params().to_vec()));
        out.push(("mlp".into(), self.mlp.params()));
        out
    }
}

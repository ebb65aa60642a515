use alloc::string::String;
use alloc::vec::Vec;

use super::HienetConfig;
use crate::cascade::{build_cascade_graph, CascadeRecord, GlobalSocialGraph};
use crate::error::Result;
use crate::nn::{normalized_propagation, Tensor};
use crate::snapshot::{build_snapshots, TemporalEncoding};
use crate::social::{social_pooling, SocialPooling};
use crate::walk::{cascade_seed, sample_walks};

/// Layout of the user embedding table: one row per global user, then an
/// unknown-user row, then the PAD row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingRows {
    pub users: usize,
}

impl EmbeddingRows {
    pub fn unknown(&self) -> usize {
        self.users
    }

    pub fn pad(&self) -> usize {
        self.users + 1
    }

    pub fn total(&self) -> usize {
        self.users + 2
    }
}

/// Normalized propagation matrix of one snapshot; its node features are
/// the first `node_count` rows of [`CascadeFeatures::encodings`].
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotGraph {
    pub propagation: Tensor,
    pub node_count: usize,
}

/// Everything the network reads for one cascade. Extraction only touches
/// the frozen corpus structures, never model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeFeatures {
    pub message_id: String,
    /// `[step][walk]` embedding row of each walk entry (PAD row for PAD).
    pub walk_rows: Vec<Vec<usize>>,
    /// `[step][walk]`, false on PAD entries.
    pub walk_mask: Vec<Vec<bool>>,
    pub social: SocialPooling,
    /// Temporal encodings of the cascade's nodes in activation order.
    pub encodings: Tensor,
    pub snapshots: Vec<SnapshotGraph>,
    /// Retweets observed inside the window.
    pub observed: u64,
}

impl CascadeFeatures {
    /// Embedding rows touched by non-PAD walk entries.
    pub fn walk_embedding_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .walk_rows
            .iter()
            .zip(&self.walk_mask)
            .flat_map(|(r, m)| r.iter().zip(m).filter(|(_, live)| **live).map(|(row, _)| *row))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }
}

/// Builds the three branch inputs for `record` observed over `[0, window)`.
///
/// Walk RNG streams are seeded from `(seed, message_id)`. Snapshot edges
/// are treated as undirected for propagation.
pub fn extract_features(
    record: &CascadeRecord,
    window: u64,
    global: &GlobalSocialGraph,
    config: &HienetConfig,
    seed: u64,
) -> Result<CascadeFeatures> {
    let graph = build_cascade_graph(record, window);
    let rows = EmbeddingRows {
        users: global.node_count(),
    };
    let row_of: Vec<usize> = graph
        .users()
        .iter()
        .map(|u| global.index_of(u).unwrap_or(rows.unknown()))
        .collect();

    let walks = sample_walks(
        &graph,
        config.walk.count,
        config.walk.length,
        config.walk.beta,
        cascade_seed(seed, &record.message_id),
    )?;
    let mut walk_rows = alloc::vec![Vec::with_capacity(walks.count()); walks.length()];
    let mut walk_mask = alloc::vec![Vec::with_capacity(walks.count()); walks.length()];
    for walk in walks.walks() {
        for (t, entry) in walk.iter().enumerate() {
            walk_rows[t].push(entry.map_or(rows.pad(), |n| row_of[n]));
            walk_mask[t].push(entry.is_some());
        }
    }

    let social = social_pooling(&graph, global, config.social.alpha, config.social.max_pairs)?;

    let enc = TemporalEncoding::new(config.snapshot.pe_dim, config.snapshot.time_bins)?;
    let sequence = build_snapshots(&graph, &enc, config.snapshot.m_max)?;
    let mut snapshots = Vec::with_capacity(sequence.len());
    let mut largest = 0;
    for snap in sequence.snapshots() {
        let (adjacency, _) = sequence.feature_matrix(snap, &enc)?;
        let symmetric = adjacency_plus_transpose(&adjacency);
        snapshots.push(SnapshotGraph {
            propagation: normalized_propagation(&symmetric)?,
            node_count: snap.node_count,
        });
        largest = largest.max(snap.node_count);
    }
    let mut encodings = Vec::with_capacity(largest);
    for &step in &sequence.node_steps()[..largest] {
        encodings.push(enc.encode(step)?);
    }

    Ok(CascadeFeatures {
        message_id: record.message_id.clone(),
        walk_rows,
        walk_mask,
        social,
        encodings: Tensor::from_rows(&encodings)?,
        snapshots,
        observed: record.observed_count(window),
    })
}

fn adjacency_plus_transpose(a: &Tensor) -> Tensor {
    let n = a.rows();
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = if a.get(i, j) != 0.0 || a.get(j, i) != 0.0 { 1.0 } else { 0.0 };
            out.set(i, j, v);
        }
    }
    out
}

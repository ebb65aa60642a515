//! Growing sub-cascade snapshots and sinusoidal temporal encodings.
//!
//! Snapshot `j` (1-based) holds the first `j` activated nodes and the edges
//! among them, so snapshot 1 is the root alone and each later one adds a
//! single retweet. Node features are sinusoidal encodings of the node's
//! activation time, discretized into `bins` steps over the window.

use alloc::vec::Vec;

use crate::cascade::CascadeGraph;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const DEFAULT_M_MAX: usize = 32;
pub const DEFAULT_TIME_BINS: usize = 512;
pub const DEFAULT_PE_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalEncoding {
    dim: usize,
    bins: usize,
}

impl TemporalEncoding {
    pub fn new(dim: usize, bins: usize) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::config(alloc::format!("encoding dimension must be even and positive, got {dim}")));
        }
        if bins == 0 {
            return Err(Error::config("time bins must be positive"));
        }
        Ok(TemporalEncoding { dim, bins })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// `[sin(t/10000^{2d/D}), cos(t/10000^{2d/D})]` for `d = 0..D/2`.
    pub fn encode(&self, step: usize) -> Result<Vec<f64>> {
        if step >= self.bins {
            return Err(Error::Invalid(alloc::format!("time step {step} outside 0..{}", self.bins)));
        }
        let t = step as f64;
        let mut out = Vec::with_capacity(self.dim);
        for d in 0..self.dim / 2 {
            let angle = t / libm::pow(10000.0, (2 * d) as f64 / self.dim as f64);
            out.push(libm::sin(angle));
            out.push(libm::cos(angle));
        }
        Ok(out)
    }

    /// Time step of an elapsed time inside `[0, window)`; later times land in
    /// the last bin.
    pub fn bin(&self, elapsed: u64, window: u64) -> usize {
        if window == 0 {
            return 0;
        }
        let b = (elapsed as u128 * self.bins as u128 / window as u128) as usize;
        b.min(self.bins - 1)
    }
}

/// One snapshot: the first `node_count` activated nodes of the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snapshot {
    /// 1-based position in the uncapped sequence.
    pub index: usize,
    pub node_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSequence {
    snapshots: Vec<Snapshot>,
    /// Time step of every node of the cascade, in activation order.
    node_steps: Vec<usize>,
    edges: Vec<(usize, usize)>,
    full_len: usize,
}

impl SnapshotSequence {
    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Length of the sequence before capping.
    pub fn full_len(&self) -> usize {
        self.full_len
    }

    pub fn node_steps(&self) -> &[usize] {
        &self.node_steps
    }

    /// Directed edges (local indices) inside a snapshot.
    pub fn edges_of(&self, snapshot: &Snapshot) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .copied()
            .filter(|&(s, t)| s < snapshot.node_count && t < snapshot.node_count)
            .collect()
    }

    /// Directed adjacency (`A[s][t] = 1` for each edge `s → t`) and the
    /// node feature matrix whose row `i` encodes node `i`'s time step.
    pub fn feature_matrix(&self, snapshot: &Snapshot, enc: &TemporalEncoding) -> Result<(Tensor, Tensor)> {
        let n = snapshot.node_count;
        let mut adjacency = Tensor::zeros(n, n);
        for (s, t) in self.edges_of(snapshot) {
            adjacency.set(s, t, 1.0);
        }
        let mut rows = Vec::with_capacity(n);
        for &step in &self.node_steps[..n] {
            rows.push(enc.encode(step)?);
        }
        let features = Tensor::from_rows(&rows)?;
        let features = if n == 0 { Tensor::zeros(0, enc.dim()) } else { features };
        Ok((adjacency, features))
    }
}

/// Positions (1-based) kept from a sequence of `full` snapshots when at
/// most `m_max` are allowed: the first, the last, and evenly spaced ones in
/// between (rounded half up). With `m_max = 1` only the last is kept.
pub fn kept_indices(full: usize, m_max: usize) -> Vec<usize> {
    if full <= m_max {
        return (1..=full).collect();
    }
    if m_max == 1 {
        return alloc::vec![full];
    }
    let span = (full - 1) as u128;
    let gaps = (m_max - 1) as u128;
    (0..m_max as u128)
        .map(|i| 1 + ((2 * i * span + gaps) / (2 * gaps)) as usize)
        .collect()
}

pub fn build_snapshots(cascade: &CascadeGraph, enc: &TemporalEncoding, m_max: usize) -> Result<SnapshotSequence> {
    if m_max == 0 {
        return Err(Error::config("snapshot cap must be at least 1"));
    }
    let full = cascade.node_count();
    let node_steps = (0..full)
        .map(|i| enc.bin(cascade.activation(i), cascade.window()))
        .collect();
    let snapshots = kept_indices(full, m_max)
        .into_iter()
        .map(|index| Snapshot { index, node_count: index })
        .collect();
    Ok(SnapshotSequence {
        snapshots,
        node_steps,
        edges: cascade.edges().iter().map(|e| (e.source, e.target)).collect(),
        full_len: full,
    })
}

//! Degree-biased random walks over a cascade graph.
//!
//! Start nodes are drawn with probability proportional to
//! `out_degree + beta`; each step moves to an out-neighbor with the same
//! smoothed weighting restricted to that neighborhood. Walks that reach a
//! node without out-neighbors are padded to the full length.

use alloc::string::String;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cascade::CascadeGraph;
use crate::error::{Error, Result};

pub const DEFAULT_WALKS: usize = 100;
pub const DEFAULT_WALK_LENGTH: usize = 20;
pub const DEFAULT_BETA: f64 = 0.8;

/// `K` walks of exactly `N` entries each. `None` is the PAD symbol; once a
/// walk pads it stays padded.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkBatch {
    walks: Vec<Vec<Option<usize>>>,
    length: usize,
    beta: f64,
}

impl WalkBatch {
    pub fn count(&self) -> usize {
        self.walks.len()
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn walks(&self) -> &[Vec<Option<usize>>] {
        &self.walks
    }

    pub fn walk(&self, i: usize) -> &[Option<usize>] {
        &self.walks[i]
    }

    /// Distinct nodes visited by any walk, ascending.
    pub fn visited(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.walks.iter().flatten().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Debug dump: one walk per line, user ids space separated, `-` for PAD.
    pub fn dump(&self, graph: &CascadeGraph) -> String {
        let mut out = String::new();
        for walk in &self.walks {
            for (i, entry) in walk.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                match entry {
                    Some(node) => out.push_str(graph.user(*node).as_str()),
                    None => out.push('-'),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::config(alloc::format!("beta must be positive and finite, got {beta}")))
    }
}

fn smoothed(graph: &CascadeGraph, node: usize, beta: f64) -> f64 {
    graph.out_degree(node) as f64 + beta
}

/// Start probabilities over all nodes, in node order.
pub fn start_distribution(graph: &CascadeGraph, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    if graph.node_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let weights: Vec<f64> = (0..graph.node_count()).map(|v| smoothed(graph, v, beta)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Transition probabilities from `node` as `(neighbor, probability)` pairs
/// in out-neighbor order. Empty for a node without out-neighbors.
pub fn transition_distribution(graph: &CascadeGraph, node: usize, beta: f64) -> Result<Vec<(usize, f64)>> {
    check_beta(beta)?;
    if node >= graph.node_count() {
        return Err(Error::UnknownNode(alloc::format!("local index {node}")));
    }
    let neighbors = graph.out_neighbors(node);
    let total: f64 = neighbors.iter().map(|&u| smoothed(graph, u, beta)).sum();
    Ok(neighbors
        .iter()
        .map(|&u| (u, smoothed(graph, u, beta) / total))
        .collect())
}

/// Per-cascade RNG seed derived from the run seed and the message id, so
/// that walks do not depend on corpus order.
pub fn cascade_seed(global_seed: u64, message_id: &str) -> u64 {
    let mut bytes = Vec::with_capacity(8 + message_id.len());
    bytes.extend_from_slice(&global_seed.to_le_bytes());
    bytes.extend_from_slice(message_id.as_bytes());
    crate::stable_hash(&bytes)
}

pub fn sample_walks(graph: &CascadeGraph, count: usize, length: usize, beta: f64, seed: u64) -> Result<WalkBatch> {
    if count == 0 || length == 0 {
        return Err(Error::config("walk count and length must be at least 1"));
    }
    let start = start_distribution(graph, beta)?;
    let start = WeightedIndex::new(&start).map_err(|e| Error::Invalid(alloc::format!("{e}")))?;
    let mut steps: Vec<Option<WeightedIndex<f64>>> = alloc::vec![None; graph.node_count()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walks = Vec::with_capacity(count);
    for _ in 0..count {
        let mut walk = Vec::with_capacity(length);
        let mut current = Some(start.sample(&mut rng));
        walk.push(current);
        while walk.len() < length {
            current = match current {
                Some(node) if graph.out_degree(node) > 0 => {
                    let dist = match &steps[node] {
                        Some(d) => d,
                        None => {
                            let weights: Vec<f64> = transition_distribution(graph, node, beta)?
                                .into_iter()
                                .map(|(_, p)| p)
                                .collect();
                            let d = WeightedIndex::new(&weights).map_err(|e| Error::Invalid(alloc::format!("{e}")))?;
                            steps[node].insert(d)
                        }
                    };
                    Some(graph.out_neighbors(node)[dist.sample(&mut rng)])
                }
                _ => None,
            };
            walk.push(current);
        }
        walks.push(walk);
    }
    Ok(WalkBatch { walks, length, beta })
}

//! Path-aware user representations on the global social graph.
//!
//! For a diffusion pair `(u, v)` the minimum-hop path `u = w_0 … w_n = v`
//! is found by BFS; `u` is then represented by the geometric average
//! `(1-α)/(1-α^{n+1}) Σ α^i g(w_i)` of the embeddings along that path, and
//! `v` by the same average along the reversed path. Because the whole
//! social feature is linear in the embedding table, a cascade's feature is
//! precomputed here as a sparse set of row weights ([`SocialPooling`]) and
//! the model only has to apply it to the current embeddings.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use crate::cascade::{CascadeGraph, GlobalSocialGraph};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_MAX_PAIRS: usize = 16;

/// Minimum-hop path between two global-graph nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelationPath {
    users: Vec<usize>,
}

impl CorrelationPath {
    pub fn users(&self) -> &[usize] {
        &self.users
    }

    /// Hop count `n`.
    pub fn hops(&self) -> usize {
        self.users.len() - 1
    }

    pub fn reversed(&self) -> CorrelationPath {
        let mut users = self.users.clone();
        users.reverse();
        CorrelationPath { users }
    }
}

/// Minimum-hop path from `u` to `v`, or `None` when disconnected.
///
/// Among equally short paths, each step goes to the smallest-index user
/// that still lies on a shortest path, so the result is the
/// lexicographically smallest shortest path.
pub fn shortest_correlation_path(global: &GlobalSocialGraph, u: usize, v: usize) -> Result<Option<CorrelationPath>> {
    let n = global.node_count();
    for x in [u, v] {
        if x >= n {
            return Err(Error::UnknownNode(alloc::format!("global index {x}")));
        }
    }
    if u == v {
        return Ok(Some(CorrelationPath { users: alloc::vec![u] }));
    }
    // BFS from the target until the source is reached; every node at a
    // distance below dist(u) is settled by then.
    let mut dist: BTreeMap<usize, usize> = BTreeMap::new();
    dist.insert(v, 0);
    let mut queue = VecDeque::from([v]);
    let mut found = false;
    'bfs: while let Some(x) = queue.pop_front() {
        let d = dist[&x];
        for &y in global.neighbors(x) {
            if let alloc::collections::btree_map::Entry::Vacant(e) = dist.entry(y) {
                e.insert(d + 1);
                if y == u {
                    found = true;
                    break 'bfs;
                }
                queue.push_back(y);
            }
        }
    }
    if !found {
        return Ok(None);
    }
    let mut users = alloc::vec![u];
    let mut current = u;
    while current != v {
        let want = dist[&current] - 1;
        current = *global
            .neighbors(current)
            .iter()
            .find(|w| dist.get(w) == Some(&want))
            .expect("a settled predecessor exists on every shortest path");
        users.push(current);
    }
    Ok(Some(CorrelationPath { users }))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::config(alloc::format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Normalized geometric weights `(1-α)/(1-α^{n+1}) α^i`, `i = 0..=n`.
pub fn path_weights(hops: usize, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let norm = (1.0 - alpha) / (1.0 - libm::pow(alpha, (hops + 1) as f64));
    Ok((0..=hops).map(|i| norm * libm::pow(alpha, i as f64)).collect())
}

/// Path-aware representation of the path's first user. `embeddings` has
/// one row per global user.
pub fn path_aware_representation(path: &CorrelationPath, embeddings: &Tensor, alpha: f64) -> Result<Vec<f64>> {
    let weights = path_weights(path.hops(), alpha)?;
    let mut out = alloc::vec![0.0; embeddings.cols()];
    for (&user, w) in path.users.iter().zip(weights) {
        if user >= embeddings.rows() {
            return Err(Error::UnknownNode(alloc::format!("embedding row {user}")));
        }
        for (o, g) in out.iter_mut().zip(embeddings.row_slice(user)) {
            *o += w * g;
        }
    }
    Ok(out)
}

/// A cascade's social feature before projection, as weights over rows of
/// the user embedding table.
///
/// Row indices are global-graph indices; the index `global.node_count()`
/// stands for a user missing from the global graph (the model keeps an
/// extra embedding row for it).
#[derive(Debug, Clone, PartialEq)]
pub struct SocialPooling {
    pub terms: Vec<(usize, f64)>,
    /// Pairs that contributed; 0 means the root fallback was used.
    pub pair_count: usize,
}

impl SocialPooling {
    /// Applies the weights to an embedding table.
    pub fn apply(&self, embeddings: &Tensor) -> Vec<f64> {
        let mut out = alloc::vec![0.0; embeddings.cols()];
        for &(row, w) in &self.terms {
            for (o, g) in out.iter_mut().zip(embeddings.row_slice(row)) {
                *o += w * g;
            }
        }
        out
    }

    pub fn rows(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.0).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.1).collect()
    }
}

/// Pools path-aware representations over the first `max_pairs` diffusion
/// pairs of the cascade (ordered by event time, then retweeter index).
///
/// Each pair contributes the mean of its two endpoint representations and
/// pairs are averaged. Pairs with a user outside the global graph or
/// without a connecting path are skipped; if none remain, the feature is
/// the root's own embedding.
pub fn social_pooling(cascade: &CascadeGraph, global: &GlobalSocialGraph, alpha: f64, max_pairs: usize) -> Result<SocialPooling> {
    check_alpha(alpha)?;
    let unknown = global.node_count();
    let global_of = |node: usize| global.index_of(cascade.user(node));

    let mut pairs: Vec<(u64, usize, usize, usize)> = Vec::new();
    for e in cascade.edges() {
        if let (Some(s), Some(t)) = (global_of(e.source), global_of(e.target)) {
            pairs.push((e.elapsed, t, s, t));
        } else {
            pairs.push((e.elapsed, usize::MAX, usize::MAX, usize::MAX));
        }
    }
    pairs.sort_by_key(|p| (p.0, p.1));

    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    let mut used = 0usize;
    for &(_, _, s, t) in pairs.iter().take(max_pairs) {
        if s == usize::MAX {
            continue;
        }
        let Some(path) = shortest_correlation_path(global, s, t)? else {
            continue;
        };
        for p in [path.clone(), path.reversed()] {
            let w = path_weights(p.hops(), alpha)?;
            for (&user, wi) in p.users.iter().zip(w) {
                *acc.entry(user).or_insert(0.0) += 0.5 * wi;
            }
        }
        used += 1;
    }
    if used == 0 {
        let root = cascade
            .users()
            .first()
            .and_then(|u| global.index_of(u))
            .unwrap_or(unknown);
        return Ok(SocialPooling {
            terms: alloc::vec![(root, 1.0)],
            pair_count: 0,
        });
    }
    let scale = 1.0 / used as f64;
    Ok(SocialPooling {
        terms: acc.into_iter().map(|(k, v)| (k, v * scale)).collect(),
        pair_count: used,
    })
}

/// Fixed-width social feature of a cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialFeature {
    pub vector: Vec<f64>,
    pub pair_count: usize,
}

/// Pooled representation followed by the learned projection
/// `x W + b` (`W`: embedding dim × feature dim, `b`: 1 × feature dim).
pub fn social_graph_feature(
    cascade: &CascadeGraph,
    global: &GlobalSocialGraph,
    embeddings: &Tensor,
    alpha: f64,
    max_pairs: usize,
    projection: (&Tensor, &Tensor),
) -> Result<SocialFeature> {
    let pooling = social_pooling(cascade, global, alpha, max_pairs)?;
    if let Some(&(row, _)) = pooling.terms.iter().find(|t| t.0 >= embeddings.rows()) {
        return Err(Error::UnknownNode(alloc::format!("embedding row {row}")));
    }
    let pooled = Tensor::row(pooling.apply(embeddings));
    let (w, b) = projection;
    let mut out = pooled.matmul(w)?;
    if b.shape() != out.shape() {
        return Err(Error::Shape {
            op: "social_projection",
            lhs: out.shape(),
            rhs: b.shape(),
        });
    }
    for (o, bias) in out.data_mut().iter_mut().zip(b.data()) {
        *o += bias;
    }
    Ok(SocialFeature {
        vector: out.into_data(),
        pair_count: pooling.pair_count,
    })
}

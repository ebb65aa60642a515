//! Synthetic cascades: a preferential-attachment follower graph and
//! continuous-time independent-cascade spread on top of it.
//!
//! Each cascade draws its own branching factor `b` from a log-normal, so
//! a few cascades go viral while most stay small. A user infected at time
//! `t` infects each neighbor with probability `b·exp(-t/τ)/deg`, after an
//! exponential delay. Everything is driven by one seeded ChaCha stream.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::PathBuf;

use hienet_core::{CascadeEvent, CascadeRecord, UserId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetManifest, GeneratorStats, TimeUnit};
use crate::error::{usage, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_cascades: usize,
    /// Edges each new user attaches with.
    pub attach: usize,
    /// Median of the per-cascade branching factor; 0 disables spread.
    pub branching_median: f64,
    /// Log-normal shape of the branching factor.
    pub branching_sigma: f64,
    /// Infection probability decays as `exp(-t / decay_time)` (seconds).
    pub decay_time: f64,
    /// Mean retweet delay in seconds.
    pub mean_delay: f64,
    pub horizon: u64,
    /// Hard cap on cascade size.
    pub max_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_users: 2_000,
            num_cascades: 200,
            attach: 3,
            branching_median: 1.6,
            branching_sigma: 0.6,
            decay_time: 4.0 * 3600.0,
            mean_delay: 3600.0,
            horizon: 24 * 3600,
            max_size: 1_000,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_users < 2 || self.attach == 0 || self.attach >= self.num_users {
            return Err(usage("synthetic spec needs num_users >= 2 and 0 < attach < num_users"));
        }
        let positive = [self.branching_sigma, self.decay_time, self.mean_delay];
        if self.branching_median < 0.0 || positive.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(usage("synthetic rates must be positive"));
        }
        if self.horizon == 0 || self.max_size == 0 {
            return Err(usage("synthetic horizon and max_size must be positive"));
        }
        Ok(())
    }
}

/// Undirected Barabási–Albert graph: a small clique, then each new node
/// links to `attach` distinct existing nodes picked proportionally to
/// degree.
pub fn preferential_attachment(n: usize, attach: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    let mut ends: Vec<usize> = Vec::new();
    let seed = (attach + 1).min(n);
    for a in 0..seed {
        for b in a + 1..seed {
            adj[a].push(b);
            adj[b].push(a);
            ends.extend([a, b]);
        }
    }
    for v in seed..n {
        let mut picked: Vec<usize> = Vec::with_capacity(attach);
        while picked.len() < attach.min(v) {
            let u = ends[rng.random_range(0..ends.len())];
            if !picked.contains(&u) {
                picked.push(u);
            }
        }
        for u in picked {
            adj[u].push(v);
            adj[v].push(u);
            ends.extend([u, v]);
        }
    }
    adj
}

fn simulate(
    adj: &[Vec<usize>],
    root: usize,
    branching: f64,
    spec: &SyntheticSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, Option<usize>, u64)> {
    let delay = Exp::new(1.0 / spec.mean_delay).expect("positive rate");
    let horizon = spec.horizon as f64;
    let mut infected = vec![false; adj.len()];
    let mut events = Vec::new();
    // Pending infections ordered by time, then by insertion for ties:
    // (time bits, insertion counter, user, source).
    type Pending = Reverse<(u64, u64, usize, Option<usize>)>;
    let mut queue: BinaryHeap<Pending> = BinaryHeap::new();
    let mut counter = 0u64;
    queue.push(Reverse((0, 0, root, None)));
    while let Some(Reverse((t_bits, _, v, src))) = queue.pop() {
        if infected[v] {
            continue;
        }
        infected[v] = true;
        let t = f64::from_bits(t_bits);
        events.push((v, src, t as u64));
        if events.len() > spec.max_size {
            break;
        }
        let p = (branching * (-t / spec.decay_time).exp() / adj[v].len() as f64).min(1.0);
        for &w in &adj[v] {
            if infected[w] || rng.random::<f64>() >= p {
                continue;
            }
            let at = t + delay.sample(rng);
            if at < horizon {
                counter += 1;
                queue.push(Reverse((at.to_bits(), counter, w, Some(v))));
            }
        }
    }
    events
}

/// Generates the corpus. Identical specs give identical datasets.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let adj = preferential_attachment(spec.num_users, spec.attach, &mut rng);
    let branching = LogNormal::new(spec.branching_median.max(f64::MIN_POSITIVE).ln(), spec.branching_sigma)
        .map_err(|e| usage(format!("branching distribution: {e}")))?;
    let user = |i: usize| UserId::new(i.to_string());

    let mut records = Vec::with_capacity(spec.num_cascades);
    for c in 0..spec.num_cascades {
        let root = rng.random_range(0..spec.num_users);
        let b = if spec.branching_median == 0.0 {
            0.0
        } else {
            branching.sample(&mut rng)
        };
        let events: Vec<CascadeEvent> = simulate(&adj, root, b, spec, &mut rng)
            .into_iter()
            .map(|(v, src, t)| CascadeEvent {
                retweeter: user(v),
                source: src.map(user),
                elapsed: t,
            })
            .collect();
        records.push(CascadeRecord {
            message_id: c.to_string(),
            root_user: user(root),
            publish_time: 1_600_000_000 + c as i64 * 600,
            final_size: events.len() as u64 - 1,
            events,
        });
    }

    let mut sizes: Vec<u64> = records.iter().map(|r| r.final_size).collect();
    sizes.sort_unstable();
    let median = sizes.get(sizes.len().saturating_sub(1) / 2).copied().unwrap_or(0);
    let max = sizes.last().copied().unwrap_or(0);
    Ok(Dataset {
        dir: PathBuf::new(),
        manifest: DatasetManifest {
            time_unit: TimeUnit::Seconds,
            label_horizon: spec.horizon,
            generator: Some(GeneratorStats {
                seed: spec.seed,
                cascades: spec.num_cascades,
                users: spec.num_users,
                max_final_size: max,
                median_final_size: median,
                tail_ratio: max as f64 / median.max(1) as f64,
            }),
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attachment_graph_is_simple_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let adj = preferential_attachment(200, 3, &mut rng);
        for (a, ns) in adj.iter().enumerate() {
            assert!(ns.len() >= 3);
            assert!(!ns.contains(&a));
            for &b in ns {
                assert!(adj[b].contains(&a));
            }
            let mut d = ns.clone();
            d.sort_unstable();
            d.dedup();
            assert_eq!(d.len(), ns.len());
        }
    }

    #[test]
    fn zero_branching_gives_root_only() {
        let spec = SyntheticSpec {
            branching_median: 0.0,
            num_cascades: 30,
            ..SyntheticSpec::default()
        };
        let d = generate_synthetic(&spec).unwrap();
        assert!(d.records.iter().all(|r| r.events.len() == 1 && r.final_size == 0));
    }

    #[test]
    fn records_satisfy_invariants() {
        let spec = SyntheticSpec {
            num_cascades: 40,
            ..SyntheticSpec::default()
        };
        let d = generate_synthetic(&spec).unwrap();
        for r in &d.records {
            assert!(r.events[0].is_root());
            assert_eq!(r.events[0].retweeter, r.root_user);
            assert!(r.events.windows(2).all(|w| w[0].elapsed <= w[1].elapsed));
            assert!(r.events.iter().all(|e| e.elapsed < spec.horizon));
            assert_eq!(r.final_size as usize, r.events.len() - 1);
            let parsed = hienet_core::parse_cascade_line(&r.to_line(), 1).unwrap();
            assert_eq!(&parsed, r);
        }
    }
}

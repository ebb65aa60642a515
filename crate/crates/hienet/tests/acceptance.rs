//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs as a plain binary (`harness = false`).

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hienet::ablate::run_ablation;
use hienet::config::{SplitMode, TrainConfig};
use hienet::dataset::Dataset;
use hienet::gradcheck::{run_suite, TOLERANCE};
use hienet::synth::{generate_synthetic, SyntheticSpec};
use hienet::train::{train, write_outputs};
use hienet_core::cascade::CascadeGraph;
use hienet_core::model::{Hienet, HienetConfig};
use hienet_core::nn::{normalized_propagation, Tape, Tensor};
use hienet_core::snapshot::{build_snapshots, TemporalEncoding};
use hienet_core::social::{path_aware_representation, path_weights, shortest_correlation_path};
use hienet_core::walk::{sample_walks, start_distribution, transition_distribution};
use hienet_core::{build_cascade_graph, GlobalSocialGraph, UserId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn gradient_suite() -> Check {
    let t = Instant::now();
    let mut worst = (String::new(), 0.0f64, 0u64);
    for seed in 0..10 {
        for row in run_suite(seed).map_err(|e| e.to_string())? {
            if row.max_rel_err > worst.1 || row.max_rel_err.is_nan() {
                worst = (row.name, row.max_rel_err, seed);
            }
        }
    }
    let elapsed = secs(t.elapsed());
    let detail = format!(
        "worst rel err {:.2e} ({} seed {}), {:.1} s",
        worst.1, worst.0, worst.2, elapsed
    );
    ensure(worst.1 < TOLERANCE && elapsed < 60.0, detail)
}

fn graph(n: usize, edges: &[(usize, usize)]) -> CascadeGraph {
    let users = (0..n).map(|i| UserId::new(format!("u{i}"))).collect();
    CascadeGraph::from_edges(users, vec![0; n], edges, 1).unwrap()
}

/// Largest total-variation distance between empirical start or transition
/// frequencies of 100 000 walks and the exact distributions.
fn sampler_tv(g: &CascadeGraph, seed: u64) -> f64 {
    let n = g.node_count();
    let walks = sample_walks(g, 100_000, n, 0.8, seed).unwrap();
    let mut starts = vec![0.0; n];
    let mut moves = vec![vec![0.0; n]; n];
    for w in walks.walks() {
        starts[w[0].unwrap()] += 1.0;
        for pair in w.windows(2) {
            if let (Some(a), Some(b)) = (pair[0], pair[1]) {
                moves[a][b] += 1.0;
            }
        }
    }
    let tv = |counts: &[f64], exact: &[f64]| {
        let total: f64 = counts.iter().sum();
        counts.iter().zip(exact).map(|(c, p)| (c / total - p).abs()).sum::<f64>() / 2.0
    };
    let mut worst = tv(&starts, &start_distribution(g, 0.8).unwrap());
    for v in 0..n {
        let dist = transition_distribution(g, v, 0.8).unwrap();
        if dist.is_empty() {
            continue;
        }
        let mut exact = vec![0.0; n];
        for (u, p) in dist {
            exact[u] = p;
        }
        worst = worst.max(tv(&moves[v], &exact));
    }
    worst
}

fn sampler_statistics() -> Check {
    let t = Instant::now();
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 5e-5);

    // A→B, A→C, B→C: the hand-derived values.
    let tri = graph(3, &[(0, 1), (0, 2), (1, 2)]);
    let start = start_distribution(&tri, 0.8).unwrap();
    let from_a: Vec<f64> = transition_distribution(&tri, 0, 0.8).unwrap().iter().map(|p| p.1).collect();
    let hand = close(&start, &[0.5185, 0.3333, 0.1481]) && close(&from_a, &[0.6923, 0.3077]);

    // Five nodes: A→B, A→C, B→C, C→D, C→E. Out-degrees 2,1,2,0,0 give
    // start weights 2.8,1.8,2.8,0.8,0.8 over 9.0.
    let five = graph(5, &[(0, 1), (0, 2), (1, 2), (2, 3), (2, 4)]);
    let start5 = start_distribution(&five, 0.8).unwrap();
    let hand5 = close(&start5, &[2.8 / 9.0, 1.8 / 9.0, 2.8 / 9.0, 0.8 / 9.0, 0.8 / 9.0]);

    let tv3 = sampler_tv(&tri, 11);
    let tv5 = sampler_tv(&five, 12);
    let elapsed = secs(t.elapsed());
    let detail = format!("TV 3-node {tv3:.4}, 5-node {tv5:.4}, hand values {}, {elapsed:.2} s", hand && hand5);
    ensure(hand && hand5 && tv3 < 0.01 && tv5 < 0.01 && elapsed < 10.0, detail)
}

fn path_weight_identities() -> Check {
    let mut worst_sum = 0.0f64;
    for alpha in [0.1, 0.5, 0.9] {
        for n in 0..=10 {
            let s: f64 = path_weights(n, alpha).map_err(|e| e.to_string())?.iter().sum();
            worst_sum = worst_sum.max((s - 1.0).abs());
        }
    }
    let emb = Tensor::from_vec(2, 3, vec![0.3, -1.7, 2.25, 1.0, 0.0, 0.0]).unwrap();
    let g = GlobalSocialGraph::from_index_edges(2, &[(0, 1)]);
    let own = shortest_correlation_path(&g, 0, 0).unwrap().unwrap();
    let identity = [0.1, 0.5, 0.9]
        .iter()
        .all(|&a| path_aware_representation(&own, &emb, a).unwrap() == emb.row_slice(0));

    let unit = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let hop = shortest_correlation_path(&g, 0, 1).unwrap().unwrap();
    let e = path_aware_representation(&hop, &unit, 0.9).unwrap();
    let worked = (e[0] - 0.52632).abs() < 1e-5 && (e[1] - 0.47368).abs() < 1e-5;
    let detail = format!(
        "max |sum-1| {worst_sum:.1e}, n=0 identity {identity}, n=1 example ({:.5}, {:.5})",
        e[0], e[1]
    );
    ensure(worst_sum <= 1e-12 && identity && worked, detail)
}

fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<Option<usize>>> {
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for &(a, b) in edges {
        d[a][b] = Some(1);
        d[b][a] = Some(1);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(x), Some(y)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| x + y < c) {
                        d[i][j] = Some(x + y);
                    }
                }
            }
        }
    }
    d
}

fn bfs_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut agree, mut pairs) = (0usize, 0usize);
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let density = rng.random_range(0.0..0.6);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(density) {
                    edges.push((a, b));
                }
            }
        }
        let g = GlobalSocialGraph::from_index_edges(n, &edges);
        let oracle = floyd_warshall(n, &edges);
        for u in 0..n {
            for v in 0..n {
                let got = shortest_correlation_path(&g, u, v).unwrap();
                let valid = got.as_ref().is_none_or(|p| {
                    p.users().first() == Some(&u)
                        && p.users().last() == Some(&v)
                        && p.users().windows(2).all(|w| g.has_edge(w[0], w[1]))
                });
                pairs += 1;
                if valid && got.map(|p| p.hops()) == oracle[u][v] {
                    agree += 1;
                }
            }
        }
    }
    ensure(agree == pairs, format!("{agree}/{pairs} node pairs agree over 200 graphs"))
}

fn structural_invariants() -> Check {
    let mut failures = Vec::new();

    let data = synthetic(40, 3);
    let enc = TemporalEncoding::new(8, 64).unwrap();
    let nested = data.records.iter().all(|r| {
        let g = build_cascade_graph(r, 3600);
        let s = build_snapshots(&g, &enc, 8).unwrap();
        s.snapshots().windows(2).all(|w| {
            let (small, big) = (s.edges_of(&w[0]), s.edges_of(&w[1]));
            w[0].node_count < w[1].node_count && small.iter().all(|e| big.contains(e))
        }) && s.snapshots().last().map(|x| x.node_count) == Some(g.node_count())
    });
    if !nested {
        failures.push("snapshot nesting");
    }

    let pe = TemporalEncoding::new(16, 512).unwrap();
    let codes: Vec<Vec<f64>> = (0..512).map(|t| pe.encode(t).unwrap()).collect();
    let unit = codes
        .iter()
        .all(|c| c.chunks(2).all(|p| (p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-12));
    if !unit {
        failures.push("PE unit pairs");
    }
    let mut min_gap = f64::INFINITY;
    for i in 0..codes.len() {
        for j in i + 1..codes.len() {
            let d: f64 = codes[i].iter().zip(&codes[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            min_gap = min_gap.min(d.sqrt());
        }
    }
    if min_gap <= 1e-6 {
        failures.push("PE distinctness");
    }

    let two = Tensor::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let p = normalized_propagation(&two).unwrap();
    let gcn_err = p.data().iter().map(|x| (x - 0.5).abs()).fold(0.0, f64::max);
    if gcn_err > 1e-12 {
        failures.push("GCN two-node example");
    }

    let config = HienetConfig::default();
    let (model, store) = Hienet::new(&config, 10, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = config.model.d_model;
    let tokens: Vec<Tensor> = (0..3)
        .map(|_| Tensor::row((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    let fuse = |order: &[usize]| {
        let mut tape = Tape::new(&store);
        let vars: Vec<_> = order.iter().map(|&i| tape.constant(tokens[i].clone())).collect();
        let out = model.fuse_tokens(&mut tape, &vars).unwrap();
        tape.value(out).data().to_vec()
    };
    let base = fuse(&[0, 1, 2]);
    let mut perm_err = 0.0f64;
    let mut order = vec![0, 1, 2];
    for _ in 0..10 {
        order.shuffle(&mut rng);
        for (a, b) in base.iter().zip(fuse(&order)) {
            perm_err = perm_err.max((a - b).abs());
        }
    }
    if perm_err > 1e-9 {
        failures.push("fusion permutation invariance");
    }

    let detail = format!("min PE gap {min_gap:.3e}, GCN err {gcn_err:.1e}, fusion perm err {perm_err:.1e}");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{} failed; {detail}", failures.join(", ")))
    }
}

fn synthetic(cascades: usize, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        num_cascades: cascades,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

/// Configuration shared by the learning and ablation experiments.
fn desk() -> TrainConfig {
    TrainConfig::desk()
}

fn learning_sanity() -> Check {
    let t = Instant::now();
    let mut small = synthetic(200, 1);
    small.records.truncate(10);
    let mut overfit = desk();
    overfit.split = SplitMode::All;
    overfit.epochs = 500;
    let out = train(&small, &overfit, None).map_err(|e| e.to_string())?;
    let overfit_best = out.report.epochs.iter().map(|e| e.train.msle).fold(f64::INFINITY, f64::min);
    let overfit_final = out.report.epochs.last().unwrap().train.msle;

    let corpus = synthetic(200, 1);
    let out = train(&corpus, &desk(), None).map_err(|e| e.to_string())?;
    let r = &out.report;
    let epoch0 = r.epochs[0].validation.msle;
    let elapsed = secs(t.elapsed());
    let a = overfit_best < 0.05;
    let b = r.best_validation_msle <= 0.5 * epoch0 && r.best_validation_msle < r.baseline_validation.msle;
    let detail = format!(
        "(a) overfit train MSLE best {overfit_best:.4}, final {overfit_final:.4}; \
         (b) best validation {:.4} at epoch {} vs epoch 0 {epoch0:.4} and mean predictor {:.4}; {elapsed:.1} s",
        r.best_validation_msle, r.best_epoch, r.baseline_validation.msle
    );
    ensure(a && b && elapsed < 600.0, detail)
}

/// Each variant is trained with seeds 0-4; a single run's best validation
/// score on 20 cascades is too noisy to rank variants.
fn ablation_direction() -> Check {
    let t = Instant::now();
    let rows = run_ablation(&synthetic(200, 1), &desk(), 5).map_err(|e| e.to_string())?;
    let full = rows[0].validation_msle;
    let best_other = rows[1..].iter().map(|r| r.validation_msle).fold(f64::INFINITY, f64::min);
    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            let seeds: Vec<String> = r.validation_per_seed.iter().map(|v| format!("{v:.3}")).collect();
            format!("{} {:.4} [{}]", r.variant, r.validation_msle, seeds.join(" "))
        })
        .collect();
    let detail = format!(
        "mean validation MSLE over seeds 0-4: {}; full/best ablation {:.3}; {:.1} s",
        table.join(", "),
        full / best_other,
        secs(t.elapsed())
    );
    ensure(full <= 1.05 * best_other, detail)
}

fn reproducibility() -> Check {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let corpus = synthetic(200, 1);
    let mut config = desk();
    config.epochs = 20;
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for dir in &dirs {
        let out = train(&corpus, &config, None).map_err(|e| e.to_string())?;
        write_outputs(&out, dir).map_err(|e| e.to_string())?;
    }
    let read = |p: std::path::PathBuf| fs::read(p).unwrap();
    let metrics_same = read(dirs[0].join("metrics.json")) == read(dirs[1].join("metrics.json"));

    let (ckpt, _) = hienet::checkpoint::Checkpoint::load(&dirs[0].join("checkpoint")).map_err(|e| e.to_string())?;
    let again = tmp.path().join("again");
    ckpt.save(&again).map_err(|e| e.to_string())?;
    let mut files = 0;
    let mut ckpt_same = true;
    for entry in fs::read_dir(dirs[0].join("checkpoint")).unwrap() {
        let name = entry.unwrap().file_name();
        files += 1;
        ckpt_same &= read(dirs[0].join("checkpoint").join(&name)) == read(again.join(&name));
    }
    let detail = format!("metrics.json identical {metrics_same}, checkpoint round trip identical {ckpt_same} ({files} files)");
    ensure(metrics_same && ckpt_same && files > 0, detail)
}

fn main() -> ExitCode {
    let mut all = true;
    let mut line = |n: usize, name: &str, check: Check| {
        let (status, detail) = match check {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        all &= status == "PASS";
        println!("criterion {n} {name}: {status} ({detail})");
    };
    line(1, "gradient suite", gradient_suite());
    line(2, "sampler statistics", sampler_statistics());
    line(3, "path weight identities", path_weight_identities());
    line(4, "BFS oracle", bfs_oracle());
    line(5, "structural invariants", structural_invariants());
    line(6, "learning sanity", learning_sanity());
    line(7, "ablation direction", ablation_direction());
    line(8, "reproducibility", reproducibility());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

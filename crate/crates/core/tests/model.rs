use hienet_core::model::{extract_features, CascadeFeatures, FusionMode, Hienet, HienetConfig, Branch};
use hienet_core::nn::{check_gradients, normalized_propagation, ParamStore, Tape, Tensor};
use hienet_core::snapshot::TemporalEncoding;
use hienet_core::{build_global_graph, compute_label, parse_cascade_line, CascadeRecord, Error, GlobalSocialGraph};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WINDOW: u64 = 100;

fn corpus() -> Vec<CascadeRecord> {
    [
        "a\t1\t0\t6\t1:0 1/2:10 1/3:20 1/2/4:30 1/2/4/5:90 1/3/6:150",
        "b\t2\t0\t3\t2:0 2/4:5 2/7:40",
        "c\t8\t0\t2\t8:0",
    ]
    .iter()
    .enumerate()
    .map(|(i, l)| parse_cascade_line(l, i + 1).unwrap())
    .collect()
}

fn tiny_config() -> HienetConfig {
    let mut c = HienetConfig::default();
    c.walk.count = 3;
    c.walk.length = 4;
    c.snapshot.m_max = 3;
    c.snapshot.time_bins = 16;
    c.snapshot.pe_dim = 4;
    c.model.d_model = 4;
    c.model.embed_dim = 3;
    c.model.lstm_hidden = 2;
    c.model.gcn_hidden = 3;
    c.model.heads = 2;
    c.model.ff_dim = 5;
    c.model.mlp_sizes = vec![4, 3];
    c
}

fn features(config: &HienetConfig) -> (GlobalSocialGraph, Vec<(CascadeFeatures, u64)>) {
    let records = corpus();
    let global = build_global_graph(&records);
    let feats = records
        .iter()
        .map(|r| (extract_features(r, WINDOW, &global, config, 7).unwrap(), compute_label(r, WINDOW)))
        .collect();
    (global, feats)
}

fn batch(feats: &[(CascadeFeatures, u64)]) -> Vec<(&CascadeFeatures, u64)> {
    feats.iter().map(|(f, s)| (f, *s)).collect()
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for fusion in [FusionMode::Transformer, FusionMode::Concat] {
        let mut config = tiny_config();
        config.model.fusion = fusion;
        let (global, feats) = features(&config);
        let (model, mut store) = Hienet::new(&config, global.node_count(), 3).unwrap();
        let ids: Vec<_> = store.ids().collect();
        // Zero biases can park a ReLU exactly on its kink.
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for &id in &ids {
            for x in store.tensor_mut(id).data_mut() {
                *x += rng.random_range(-0.05..0.05);
            }
        }
        let b = batch(&feats);
        let report = check_gradients(&mut store, &ids, 1e-5, |t| model.batch_loss(t, &b)).unwrap();
        for (name, err) in &report.per_param {
            assert!(*err < 1e-4, "{fusion:?} {name}: {err:e}");
        }
    }
}

#[test]
fn disabled_branches_receive_no_gradient() {
    for off in Branch::ALL {
        let mut config = tiny_config();
        match off {
            Branch::Sequence => config.model.use_cs = false,
            Branch::Social => config.model.use_sg = false,
            Branch::Subcascade => config.model.use_cg = false,
        }
        let (global, feats) = features(&config);
        let (model, store) = Hienet::new(&config, global.node_count(), 1).unwrap();
        let mut tape = Tape::new(&store);
        let loss = model.batch_loss(&mut tape, &batch(&feats)).unwrap();
        let grads = tape.backward(loss).unwrap();
        for id in model.branch_params(off) {
            let g = grads.get(id).unwrap_or(&[]);
            assert!(g.iter().all(|x| *x == 0.0), "{off:?} leaks into {}", store.get(id).name);
        }
        for on in Branch::ALL.into_iter().filter(|b| *b != off) {
            let any = model
                .branch_params(on)
                .into_iter()
                .any(|id| grads.get(id).is_some_and(|g| g.iter().any(|x| *x != 0.0)));
            assert!(any, "{on:?} should train when {off:?} is off");
        }
    }
}

#[test]
fn all_branches_disabled_is_a_config_error() {
    let mut config = tiny_config();
    config.model.use_cs = false;
    config.model.use_sg = false;
    config.model.use_cg = false;
    assert!(matches!(Hienet::new(&config, 4, 0), Err(Error::Config(_))));
}

#[test]
fn embedding_gradient_is_sparse_over_walks() {
    let mut config = tiny_config();
    config.model.use_sg = false;
    config.model.use_cg = false;
    let (global, feats) = features(&config);
    let (model, store) = Hienet::new(&config, global.node_count(), 2).unwrap();
    let (f, s) = &feats[0];
    let mut tape = Tape::new(&store);
    let loss = model.batch_loss(&mut tape, &[(f, *s)]).unwrap();
    let grads = tape.backward(loss).unwrap();
    let g = grads.get(model.embedding()).unwrap();
    let width = config.model.embed_dim;
    let visited = f.walk_embedding_rows();
    assert!(!visited.is_empty());
    for row in 0..model.embedding_rows().total() {
        let norm: f64 = g[row * width..(row + 1) * width].iter().map(|x| x.abs()).sum();
        if visited.contains(&row) {
            assert!(norm > 0.0, "visited row {row} has no gradient");
        } else {
            assert_eq!(norm, 0.0, "unvisited row {row} has gradient");
        }
    }
}

#[test]
fn zero_weights_give_projection_bias() {
    let config = tiny_config();
    let (global, feats) = features(&config);
    let (model, mut store) = Hienet::new(&config, global.node_count(), 4).unwrap();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.tensor_mut(id).data_mut().fill(0.0);
    }
    let bias = store.id("cs.proj.bias").unwrap();
    store.tensor_mut(bias).data_mut().copy_from_slice(&[0.5, -1.0, 2.0, 0.25]);
    let mut tape = Tape::new(&store);
    let f = model.encode_cascade_sequence(&mut tape, &feats[0].0).unwrap();
    assert_eq!(tape.value(f).data(), &[0.5, -1.0, 2.0, 0.25]);

    let out = store.id("mlp.out.bias").unwrap();
    store.tensor_mut(out).data_mut()[0] = 1.25;
    let mut tape = Tape::new(&store);
    let y = model.forward(&mut tape, &feats[0].0).unwrap();
    assert_eq!(tape.scalar(y), 1.25);
}

#[test]
fn single_walk_outer_bilstm() {
    let mut config = tiny_config();
    config.walk.count = 1;
    let (global, feats) = features(&config);
    let (model, store) = Hienet::new(&config, global.node_count(), 5).unwrap();
    let mut tape = Tape::new(&store);
    let f = model.encode_cascade_sequence(&mut tape, &feats[0].0).unwrap();
    assert_eq!(tape.shape(f), [1, 4]);
}

fn random_snapshot(rng: &mut ChaCha8Rng, n: usize, enc: &TemporalEncoding) -> (Tensor, Tensor) {
    let mut a = Tensor::zeros(n, n);
    for t in 1..n {
        let s = rng.random_range(0..t);
        a.set(s, t, 1.0);
        a.set(t, s, 1.0);
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|_| enc.encode(rng.random_range(0..16)).unwrap()).collect();
    (a, Tensor::from_rows(&rows).unwrap())
}

fn permuted(a: &Tensor, h: &Tensor, perm: &[usize]) -> (Tensor, Tensor) {
    let n = perm.len();
    let mut pa = Tensor::zeros(n, n);
    let mut ph = Tensor::zeros(n, h.cols());
    for i in 0..n {
        for j in 0..n {
            pa.set(perm[i], perm[j], a.get(i, j));
        }
        for c in 0..h.cols() {
            ph.set(perm[i], c, h.get(i, c));
        }
    }
    (pa, ph)
}

#[test]
fn subcascade_encoding_ignores_node_order_and_duplicates() {
    let config = tiny_config();
    let (model, store) = Hienet::new(&config, 3, 6).unwrap();
    let enc = TemporalEncoding::new(4, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let n = rng.random_range(1..7);
        let (a, h) = random_snapshot(&mut rng, n, &enc);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let (pa, ph) = permuted(&a, &h, &perm);
        let run = |graphs: &[(Tensor, Tensor)]| {
            let mut tape = Tape::new(&store);
            let v = model.encode_snapshot_graphs(&mut tape, graphs).unwrap();
            tape.value(v).data().to_vec()
        };
        let p = normalized_propagation(&a).unwrap();
        let pp = normalized_propagation(&pa).unwrap();
        let base = run(&[(p.clone(), h.clone())]);
        let shuffled = run(&[(pp, ph)]);
        let twice = run(&[(p.clone(), h.clone()), (p, h)]);
        for ((x, y), z) in base.iter().zip(&shuffled).zip(&twice) {
            assert!((x - y).abs() < 1e-9);
            assert!((x - z).abs() < 1e-12);
        }
    }
}

#[test]
fn fusion_ignores_modality_order() {
    let config = tiny_config();
    let (model, store) = Hienet::new(&config, 3, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tokens: Vec<Tensor> = (0..3)
        .map(|_| Tensor::row((0..4).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    let fuse = |order: [usize; 3]| {
        let mut tape = Tape::new(&store);
        let vars: Vec<_> = order.iter().map(|&i| tape.constant(tokens[i].clone())).collect();
        let out = model.fuse_tokens(&mut tape, &vars).unwrap();
        tape.value(out).data().to_vec()
    };
    let base = fuse([0, 1, 2]);
    for order in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
        for (a, b) in base.iter().zip(fuse(order)) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn identical_tokens_match_cas_token_alone() {
    let config = tiny_config();
    let (model, store) = Hienet::new(&config, 3, 8).unwrap();
    let cas = store.tensor(model.cas_token()).clone();
    let mut tape = Tape::new(&store);
    let same: Vec<_> = (0..3).map(|_| tape.constant(cas.clone())).collect();
    let all_four = model.fuse_tokens(&mut tape, &same).unwrap();
    let alone = model.fuse_tokens(&mut tape, &[]).unwrap();
    for (a, b) in tape.value(all_four).data().iter().zip(tape.value(alone).data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn concat_mode_with_one_branch_is_linear() {
    let mut config = tiny_config();
    config.model.fusion = FusionMode::Concat;
    config.model.use_cs = false;
    config.model.use_cg = false;
    let (model, store) = Hienet::new(&config, 3, 8).unwrap();
    let w = store.tensor(store.id("fusion.concat_proj.weight").unwrap()).clone();
    assert_eq!(w.shape(), [4, 4]);
    let x = Tensor::row(vec![0.3, -0.2, 1.0, 0.5]);
    let mut tape = Tape::new(&store);
    let v = tape.constant(x.clone());
    let out = model.fuse(&mut tape, [None, Some(v), None]).unwrap();
    let expected = x.matmul(&w).unwrap();
    for (a, b) in tape.value(out).data().iter().zip(expected.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn predictions_are_deterministic_and_clamped() {
    let config = tiny_config();
    let (global, feats) = features(&config);
    let (model, mut store) = Hienet::new(&config, global.node_count(), 9).unwrap();
    let a = model.predict(&store, &feats[1].0).unwrap();
    let b = model.predict(&store, &feats[1].0).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    let out = store.id("mlp.out.bias").unwrap();
    store.tensor_mut(out).data_mut()[0] = -1e6;
    assert_eq!(model.predict(&store, &feats[1].0).unwrap(), 0.0);
}

#[test]
fn separate_stores_from_one_seed_match() {
    let config = tiny_config();
    let (_, a) = Hienet::new(&config, 5, 42).unwrap();
    let (_, b) = Hienet::new(&config, 5, 42).unwrap();
    let same = a.iter().zip(b.iter()).all(|((_, x), (_, y))| x.name == y.name && x.tensor.data() == y.tensor.data());
    assert!(same);
    let (_, c) = Hienet::new(&config, 5, 43).unwrap();
    assert_ne!(a.tensor(a.id("user_embedding").unwrap()).data(), c.tensor(c.id("user_embedding").unwrap()).data());
}

#[allow(dead_code)]
fn _store_is_send(s: ParamStore) -> impl Send {
    s
}

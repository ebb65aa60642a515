//! Finite-difference gradient suite over every primitive, the recurrent,
//! graph and attention layers, and the end-to-end loss.

use hienet_core::model::{extract_features, FusionMode, Hienet, HienetConfig};
use hienet_core::nn::{
    bilstm_forward, check_gradients, gcn_layer, normalized_propagation, Activation, BiLstm, ParamId, ParamStore, Tape,
    Tensor, TransformerLayer, Var,
};
use hienet_core::{build_global_graph, compute_label, parse_cascade_line, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub max_rel_err: f64,
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}

fn weighted_sum(tape: &mut Tape<'_>, v: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let p = tape.mul(v, w)?;
    Ok(tape.sum(p))
}

fn check(
    rows: &mut Vec<CheckRow>,
    name: &str,
    store: &mut ParamStore,
    params: &[ParamId],
    build: impl Fn(&mut Tape<'_>) -> Result<Var>,
) -> Result<()> {
    let report = check_gradients(store, params, STEP, build)?;
    rows.push(CheckRow {
        name: name.to_string(),
        max_rel_err: report.max_rel_err(),
    });
    Ok(())
}

type Unary = fn(&mut Tape<'_>, Var) -> Var;
type Binary = fn(&mut Tape<'_>, Var, Var) -> Result<Var>;

fn primitives(rng: &mut ChaCha8Rng, rows: &mut Vec<CheckRow>) -> Result<()> {
    let (r, c, k) = (rng.random_range(1..4), rng.random_range(2..5), rng.random_range(1..4));
    let mut store = ParamStore::new();
    let a = store.add("a", random(rng, r, c))?;
    let b = store.add("b", random(rng, r, c))?;
    let m = store.add("m", random(rng, c, k))?;
    let row = store.add("row", random(rng, 1, c))?;
    let w_rc = random(rng, r, c);
    let w_rk = random(rng, r, k);
    let w_cr = random(rng, c, r);

    let binary: [(&str, Binary); 3] = [
        ("add", |t, x, y| t.add(x, y)),
        ("sub", |t, x, y| t.sub(x, y)),
        ("mul", |t, x, y| t.mul(x, y)),
    ];
    for (name, op) in binary {
        check(rows, name, &mut store, &[a, b], |t| {
            let (x, y) = (t.param(a), t.param(b));
            let z = op(t, x, y)?;
            weighted_sum(t, z, &w_rc)
        })?;
    }
    let unary: [(&str, Unary); 6] = [
        ("sigmoid", |t, x| t.sigmoid(x)),
        ("tanh", |t, x| t.tanh(x)),
        ("relu", |t, x| t.relu(x)),
        ("softmax", |t, x| t.softmax(x)),
        ("layer_norm", |t, x| t.layer_norm(x)),
        ("scale", |t, x| t.scale(x, -1.3)),
    ];
    for (name, op) in unary {
        check(rows, name, &mut store, &[a], |t| {
            let x = t.param(a);
            let z = op(t, x);
            weighted_sum(t, z, &w_rc)
        })?;
    }
    check(rows, "add_row/mul_row", &mut store, &[a, row], |t| {
        let (x, v) = (t.param(a), t.param(row));
        let z = t.mul_row(x, v)?;
        let z = t.add_row(z, v)?;
        weighted_sum(t, z, &w_rc)
    })?;
    check(rows, "matmul", &mut store, &[a, m], |t| {
        let (x, y) = (t.param(a), t.param(m));
        let z = t.matmul(x, y)?;
        weighted_sum(t, z, &w_rk)
    })?;
    check(rows, "transpose", &mut store, &[a], |t| {
        let x = t.param(a);
        let z = t.transpose(x);
        weighted_sum(t, z, &w_cr)
    })?;
    check(rows, "concat/slice", &mut store, &[a, b], |t| {
        let (x, y) = (t.param(a), t.param(b));
        let z = t.concat_cols(&[x, y])?;
        let z = t.slice_cols(z, 1, c)?;
        let s = t.concat_rows(&[z, x])?;
        let s = t.slice_rows(s, 1, r)?;
        weighted_sum(t, s, &w_rc)
    })?;
    check(rows, "mean/gather/sum", &mut store, &[a], |t| {
        let x = t.param(a);
        let g = t.gather_rows(x, &[r - 1, 0, r - 1])?;
        let g = t.mean_rows(g);
        let g = t.tanh(g);
        Ok(t.sum(g))
    })
}

fn bilstm(rng: &mut ChaCha8Rng, rows: &mut Vec<CheckRow>) -> Result<()> {
    let mut store = ParamStore::new();
    let lstm = BiLstm::new(&mut store, "bilstm", 2, rng.random_range(2..4), rng)?;
    let h = lstm.hidden();
    let xs = store.add("xs", random(rng, 6, 2))?;
    let mask = vec![vec![true, true], vec![true, false], vec![false, false]];
    let weights = random(rng, 2, 2 * h);
    let mut params = lstm.params().to_vec();
    params.push(xs);
    check(rows, "bilstm", &mut store, &params, |t| {
        let xs = t.param(xs);
        let steps = (0..3).map(|i| t.slice_rows(xs, 2 * i, 2)).collect::<Result<Vec<_>>>()?;
        let out = bilstm_forward(t, &lstm, &steps, Some(&mask))?;
        let z = t.concat_cols(&[out.last_forward, out.last_backward])?;
        weighted_sum(t, z, &weights)
    })
}

fn gcn(rng: &mut ChaCha8Rng, rows: &mut Vec<CheckRow>) -> Result<()> {
    let n = rng.random_range(2..6);
    let mut a = Tensor::zeros(n, n);
    for t in 1..n {
        let s = rng.random_range(0..t);
        a.set(s, t, 1.0);
        a.set(t, s, 1.0);
    }
    let p = normalized_propagation(&a)?;
    let mut store = ParamStore::new();
    let h = store.add("h", random(rng, n, 4))?;
    let w1 = store.add("w1", random(rng, 4, 3))?;
    let w2 = store.add("w2", random(rng, 3, 2))?;
    let weights = random(rng, n, 2);
    check(rows, "gcn", &mut store, &[h, w1, w2], |t| {
        let p = t.constant(p.clone());
        let x = t.param(h);
        let w = t.param(w1);
        let x = gcn_layer(t, p, x, w, Activation::Relu)?;
        let w = t.param(w2);
        let x = gcn_layer(t, p, x, w, Activation::Identity)?;
        weighted_sum(t, x, &weights)
    })
}

fn attention(rng: &mut ChaCha8Rng, rows: &mut Vec<CheckRow>) -> Result<()> {
    let mut store = ParamStore::new();
    let layer = TransformerLayer::new(&mut store, "attention", 8, 2, 12, rng)?;
    let x = store.add("tokens", random(rng, 4, 8))?;
    let weights = random(rng, 4, 8);
    let mut params = layer.params();
    params.push(x);
    jitter(&mut store, rng);
    check(rows, "attention", &mut store, &params, |t| {
        let x = t.param(x);
        let y = layer.forward(t, x)?;
        weighted_sum(t, y, &weights)
    })
}

/// Random perturbation so zero-initialized biases do not park ReLUs on
/// their kink.
fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for x in store.tensor_mut(id).data_mut() {
            *x += rng.random_range(-0.05..0.05);
        }
    }
}

const TOY: [&str; 3] = [
    "a\t1\t0\t6\t1:0 1/2:10 1/3:20 1/2/4:30 1/2/4/5:90 1/3/6:150",
    "b\t2\t0\t3\t2:0 2/4:5 2/7:40",
    "c\t8\t0\t2\t8:0",
];

fn end_to_end(rng: &mut ChaCha8Rng, rows: &mut Vec<CheckRow>, fusion: FusionMode) -> Result<()> {
    let mut config = HienetConfig::default();
    config.walk.count = 3;
    config.walk.length = 4;
    config.snapshot.m_max = 3;
    config.snapshot.time_bins = 16;
    config.snapshot.pe_dim = 4;
    config.model.d_model = 4;
    config.model.embed_dim = 3;
    config.model.lstm_hidden = 2;
    config.model.gcn_hidden = 3;
    config.model.heads = 2;
    config.model.ff_dim = 5;
    config.model.mlp_sizes = vec![4, 3];
    config.model.fusion = fusion;
    let records = TOY
        .iter()
        .enumerate()
        .map(|(i, l)| parse_cascade_line(l, i + 1))
        .collect::<Result<Vec<_>>>()?;
    let global = build_global_graph(&records);
    let seed = rng.random();
    let feats = records
        .iter()
        .map(|r| Ok((extract_features(r, 100, &global, &config, seed)?, compute_label(r, 100))))
        .collect::<Result<Vec<_>>>()?;
    let (model, mut store) = Hienet::new(&config, global.node_count(), rng.random())?;
    jitter(&mut store, rng);
    let batch: Vec<_> = feats.iter().map(|(f, s)| (f, *s)).collect();
    for (component, params) in model.component_params() {
        let name = format!("model[{}].{component}", fusion_name(fusion));
        check(rows, &name, &mut store, &params, |t| model.batch_loss(t, &batch))?;
    }
    Ok(())
}

fn fusion_name(f: FusionMode) -> &'static str {
    match f {
        FusionMode::Transformer => "transformer",
        FusionMode::Concat => "concat",
    }
}

/// Runs every check with inputs drawn from `seed`.
pub fn run_suite(seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    primitives(&mut rng, &mut rows)?;
    bilstm(&mut rng, &mut rows)?;
    gcn(&mut rng, &mut rows)?;
    attention(&mut rng, &mut rows)?;
    end_to_end(&mut rng, &mut rows, FusionMode::Transformer)?;
    end_to_end(&mut rng, &mut rows, FusionMode::Concat)?;
    Ok(rows)
}

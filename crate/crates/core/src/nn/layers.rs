use alloc::string::String;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::Rng;

use super::tape::{Tape, Var};
use super::tensor::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

fn uniform_tensor<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Tensor {
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized above")
}

fn name(prefix: &str, suffix: &str) -> String {
    alloc::format!("{prefix}.{suffix}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape<'_>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// `x W + b`, Glorot-uniform weights and zero bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut R) -> Result<Self> {
        let bound = libm::sqrt(6.0 / (input + output) as f64);
        let weight = store.add(name(prefix, "weight"), uniform_tensor(input, output, bound, rng))?;
        let bias = store.add(name(prefix, "bias"), Tensor::zeros(1, output))?;
        Ok(Linear {
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

/// Single-direction LSTM. Gate blocks are laid out `[input, forget, cell,
/// output]` along the columns of `input_weight`, `hidden_weight` and `bias`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lstm {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    /// Weights uniform in `±1/√hidden`, biases zero except the forget gate at 1.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let k = 1.0 / libm::sqrt(hidden as f64);
        let input_weight = store.add(name(prefix, "w_input"), uniform_tensor(input, 4 * hidden, k, rng))?;
        let hidden_weight = store.add(name(prefix, "w_hidden"), uniform_tensor(hidden, 4 * hidden, k, rng))?;
        let mut b = Tensor::zeros(1, 4 * hidden);
        for j in hidden..2 * hidden {
            b.set(0, j, 1.0);
        }
        let bias = store.add(name(prefix, "bias"), b)?;
        Ok(Lstm {
            input_weight,
            hidden_weight,
            bias,
            input,
            hidden,
        })
    }

    pub fn params(&self) -> [ParamId; 3] {
        [self.input_weight, self.hidden_weight, self.bias]
    }

    /// One step over a batch: `x` is `B × input`, `h` and `c` are `B × hidden`.
    pub fn step(&self, tape: &mut Tape<'_>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hd = self.hidden;
        let wx = tape.param(self.input_weight);
        let wh = tape.param(self.hidden_weight);
        let b = tape.param(self.bias);
        let zx = tape.matmul(x, wx)?;
        let zh = tape.matmul(h, wh)?;
        let z = tape.add(zx, zh)?;
        let z = tape.add_row(z, b)?;
        let i = tape.slice_cols(z, 0, hd)?;
        let f = tape.slice_cols(z, hd, hd)?;
        let g = tape.slice_cols(z, 2 * hd, hd)?;
        let o = tape.slice_cols(z, 3 * hd, hd)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.tanh(c_next);
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(BiLstm {
            forward: Lstm::new(store, &name(prefix, "fwd"), input, hidden, rng)?,
            backward: Lstm::new(store, &name(prefix, "bwd"), input, hidden, rng)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn params(&self) -> [ParamId; 6] {
        let [a, b, c] = self.forward.params();
        let [d, e, f] = self.backward.params();
        [a, b, c, d, e, f]
    }
}

pub struct BiLstmOutput {
    /// Per step, `B × 2·hidden`: forward state then backward state.
    pub states: Vec<Var>,
    /// Forward state after the last step.
    pub last_forward: Var,
    /// Backward state after consuming step 0.
    pub last_backward: Var,
}

fn run_direction(
    tape: &mut Tape<'_>,
    lstm: &Lstm,
    steps: &[Var],
    mask: Option<&[Vec<bool>]>,
    order: impl Iterator<Item = usize>,
    batch: usize,
) -> Result<(Vec<Option<Var>>, Var)> {
    let mut h = tape.constant(Tensor::zeros(batch, lstm.hidden));
    let mut c = tape.constant(Tensor::zeros(batch, lstm.hidden));
    let mut states = alloc::vec![None; steps.len()];
    for t in order {
        let (h_new, c_new) = lstm.step(tape, steps[t], h, c)?;
        let live = mask.map(|m| m[t].as_slice());
        match live {
            Some(live) if live.iter().any(|x| !x) => {
                let mut keep = Tensor::zeros(batch, lstm.hidden);
                let mut copy = Tensor::zeros(batch, lstm.hidden);
                for (r, &alive) in live.iter().enumerate() {
                    for j in 0..lstm.hidden {
                        if alive {
                            keep.set(r, j, 1.0);
                        } else {
                            copy.set(r, j, 1.0);
                        }
                    }
                }
                let keep = tape.constant(keep);
                let copy = tape.constant(copy);
                let a = tape.mul(keep, h_new)?;
                let b = tape.mul(copy, h)?;
                h = tape.add(a, b)?;
                let a = tape.mul(keep, c_new)?;
                let b = tape.mul(copy, c)?;
                c = tape.add(a, b)?;
            }
            _ => {
                h = h_new;
                c = c_new;
            }
        }
        states[t] = Some(h);
    }
    Ok((states, h))
}

/// Runs a bidirectional LSTM over `steps` (each `B × input`).
///
/// `mask[t][b]` is `false` where step `t` of sequence `b` is PAD; such steps
/// copy the previous state in both directions.
pub fn bilstm_forward(tape: &mut Tape<'_>, lstm: &BiLstm, steps: &[Var], mask: Option<&[Vec<bool>]>) -> Result<BiLstmOutput> {
    let first = *steps.first().ok_or_else(|| Error::Invalid("bilstm over an empty sequence".into()))?;
    let [batch, width] = tape.shape(first);
    for &s in steps {
        if tape.shape(s) != [batch, width] {
            return Err(Error::Shape {
                op: "bilstm",
                lhs: [batch, width],
                rhs: tape.shape(s),
            });
        }
    }
    if let Some(m) = mask {
        if m.len() != steps.len() || m.iter().any(|row| row.len() != batch) {
            return Err(Error::Invalid("bilstm mask does not match the sequence".into()));
        }
    }
    let n = steps.len();
    let (fwd, last_forward) = run_direction(tape, &lstm.forward, steps, mask, 0..n, batch)?;
    let (bwd, last_backward) = run_direction(tape, &lstm.backward, steps, mask, (0..n).rev(), batch)?;
    let mut states = Vec::with_capacity(n);
    for (f, b) in fwd.into_iter().zip(bwd) {
        let f = f.expect("every step visited");
        let b = b.expect("every step visited");
        states.push(tape.concat_cols(&[f, b])?);
    }
    Ok(BiLstmOutput {
        states,
        last_forward,
        last_backward,
    })
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the row sums of `A + I`.
pub fn normalized_propagation(adjacency: &Tensor) -> Result<Tensor> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err(Error::Shape {
            op: "gcn_layer",
            lhs: adjacency.shape(),
            rhs: [n, n],
        });
    }
    let mut a = adjacency.clone();
    for i in 0..n {
        a.set(i, i, a.get(i, i) + 1.0);
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row_slice(i).iter().sum();
            1.0 / libm::sqrt(d)
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j) * inv_sqrt[i] * inv_sqrt[j];
            a.set(i, j, v);
        }
    }
    Ok(a)
}

/// Graph convolution `σ(D̃^{-1/2} Ã D̃^{-1/2} H W)`.
///
/// `propagation` is the already normalized matrix from
/// [`normalized_propagation`], placed on the tape as a constant.
pub fn gcn_layer(tape: &mut Tape<'_>, propagation: Var, features: Var, weight: Var, activation: Activation) -> Result<Var> {
    let [r, c] = tape.shape(propagation);
    if r != c {
        return Err(Error::Shape {
            op: "gcn_layer",
            lhs: [r, c],
            rhs: [r, r],
        });
    }
    let hw = tape.matmul(features, weight)?;
    let out = tape.matmul(propagation, hw)?;
    Ok(activation.apply(tape, out))
}

/// Post-norm transformer encoder layer: multi-head self-attention and a
/// ReLU feed-forward block, each wrapped in residual + layer norm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformerLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm1_scale: ParamId,
    pub norm1_shift: ParamId,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm2_scale: ParamId,
    pub norm2_shift: ParamId,
    pub width: usize,
    pub heads: usize,
}

impl TransformerLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        width: usize,
        heads: usize,
        ff_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(Error::config(alloc::format!("width {width} is not divisible by {heads} heads")));
        }
        Ok(TransformerLayer {
            query: Linear::new(store, &name(prefix, "query"), width, width, rng)?,
            key: Linear::new(store, &name(prefix, "key"), width, width, rng)?,
            value: Linear::new(store, &name(prefix, "value"), width, width, rng)?,
            output: Linear::new(store, &name(prefix, "attn_out"), width, width, rng)?,
            norm1_scale: store.add(name(prefix, "norm1.scale"), Tensor::filled(1, width, 1.0))?,
            norm1_shift: store.add(name(prefix, "norm1.shift"), Tensor::zeros(1, width))?,
            ff_in: Linear::new(store, &name(prefix, "ff_in"), width, ff_width, rng)?,
            ff_out: Linear::new(store, &name(prefix, "ff_out"), ff_width, width, rng)?,
            norm2_scale: store.add(name(prefix, "norm2.scale"), Tensor::filled(1, width, 1.0))?,
            norm2_shift: store.add(name(prefix, "norm2.shift"), Tensor::zeros(1, width))?,
            width,
            heads,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = Vec::new();
        for l in [&self.query, &self.key, &self.value, &self.output, &self.ff_in, &self.ff_out] {
            p.extend(l.params());
        }
        p.extend([self.norm1_scale, self.norm1_shift, self.norm2_scale, self.norm2_shift]);
        p
    }

    fn norm(tape: &mut Tape<'_>, x: Var, scale: ParamId, shift: ParamId) -> Result<Var> {
        let n = tape.layer_norm(x);
        let s = tape.param(scale);
        let b = tape.param(shift);
        let n = tape.mul_row(n, s)?;
        tape.add_row(n, b)
    }

    /// Scaled dot-product attention over the rows of `x` (`T × width`),
    /// before the residual connection.
    pub fn attention(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let q = self.query.forward(tape, x)?;
        let k = self.key.forward(tape, x)?;
        let v = self.value.forward(tape, x)?;
        let dh = self.width / self.heads;
        let scale = 1.0 / libm::sqrt(dh as f64);
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax(scores);
            heads.push(tape.matmul(weights, vh)?);
        }
        let joined = tape.concat_cols(&heads)?;
        self.output.forward(tape, joined)
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let [_, w] = tape.shape(x);
        if w != self.width {
            return Err(Error::Shape {
                op: "transformer",
                lhs: tape.shape(x),
                rhs: [0, self.width],
            });
        }
        let attn = self.attention(tape, x)?;
        let x = tape.add(x, attn)?;
        let x = Self::norm(tape, x, self.norm1_scale, self.norm1_shift)?;
        let ff = self.ff_in.forward(tape, x)?;
        let ff = tape.relu(ff);
        let ff = self.ff_out.forward(tape, ff)?;
        let x = tape.add(x, ff)?;
        Self::norm(tape, x, self.norm2_scale, self.norm2_shift)
    }
}

/// ReLU hidden layers followed by a linear scalar output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, input: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = input;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(Linear::new(store, &alloc::format!("{prefix}.{i}"), width, h, rng)?);
            width = h;
        }
        layers.push(Linear::new(store, &alloc::format!("{prefix}.out"), width, 1, rng)?);
        Ok(Mlp { layers })
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

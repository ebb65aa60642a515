//! Reverse-mode tape over 2-D tensors.
//!
//! Every operation appends a node holding its forward value and the inputs
//! it needs for the backward rule. Parameters are read in place from the
//! borrowed [`ParamStore`]; `backward` returns their gradients without
//! touching the store, so forward passes over frozen weights are re-entrant.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::tensor::{matmul_into, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Transpose(Var),
    Softmax(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    MeanRows(Var),
    Sum(Var),
    LayerNorm(Var, Vec<f64>),
    GatherRows(Var, Vec<usize>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::Transpose(_) => "transpose",
            Op::Softmax(_) => "softmax",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::MeanRows(_) => "mean_rows",
            Op::Sum(_) => "sum",
            Op::LayerNorm(..) => "layer_norm",
            Op::GatherRows(..) => "gather_rows",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    params: BTreeMap<ParamId, Var>,
}

/// Parameter gradients produced by [`Tape::backward`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.grads.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Adds every gradient into the matching tensor's grad slot.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (id, g) in &self.grads {
            store.tensor_mut(*id).accumulate_grad(g);
        }
    }

    fn add(&mut self, id: ParamId, g: &[f64]) {
        let slot = self.grads.entry(id).or_insert_with(|| alloc::vec![0.0; g.len()]);
        for (s, v) in slot.iter_mut().zip(g) {
            *s += v;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data().iter().map(|&x| f(x)).collect();
    Tensor::from_vec(t.rows(), t.cols(), data).expect("same shape")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn add_into(acc: &mut Option<Vec<f64>>, g: &[f64]) {
    match acc {
        Some(a) => {
            for (x, y) in a.iter_mut().zip(g) {
                *x += y;
            }
        }
        None => *acc = Some(g.to_vec()),
    }
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(id) => self.store.tensor(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    /// First node (in evaluation order) holding a NaN or infinity, with the
    /// name of the operation that produced it.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        (0..self.nodes.len()).find_map(|i| {
            let v = self.value(Var(i));
            v.data()
                .iter()
                .any(|x| !x.is_finite())
                .then(|| (i, self.nodes[i].op.name()))
        })
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(Tensor::zeros(0, 0), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    fn check_row(&self, op: &'static str, a: Var, row: Var) -> Result<()> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr[0] != 1 || sr[1] != sa[1] {
            return Err(Error::Shape { op, lhs: sa, rhs: sr });
        }
        Ok(())
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row("add_row", a, row)?;
        let (av, rv) = (self.value(a), self.value(row));
        let c = av.cols();
        let data = av.data().iter().enumerate().map(|(i, x)| x + rv.data()[i % c]).collect();
        let value = Tensor::from_vec(av.rows(), c, data)?;
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    /// Multiplies every row of `a` elementwise by a `1 × c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row("mul_row", a, row)?;
        let (av, rv) = (self.value(a), self.value(row));
        let c = av.cols();
        let data = av.data().iter().enumerate().map(|(i, x)| x * rv.data()[i % c]).collect();
        let value = Tensor::from_vec(av.rows(), c, data)?;
        Ok(self.push(value, Op::MulRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = map(self.value(a), |x| x * s);
        self.push(value, Op::Scale(a, s))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Invalid("concat_cols of nothing".into()))?;
        let rows = self.shape(first)[0];
        for &p in parts {
            if self.shape(p)[0] != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: self.shape(first),
                    rhs: self.shape(p),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let value = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Invalid("concat_rows of nothing".into()))?;
        let cols = self.shape(first)[1];
        for &p in parts {
            if self.shape(p)[1] != cols {
                return Err(Error::Shape {
                    op: "concat_rows",
                    lhs: self.shape(first),
                    rhs: self.shape(p),
                });
            }
        }
        let rows: usize = parts.iter().map(|&p| self.shape(p)[0]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    /// Columns `start .. start + width`.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let av = self.value(a);
        if start + width > av.cols() || width == 0 {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: av.shape(),
                rhs: [start, width],
            });
        }
        let mut data = Vec::with_capacity(av.rows() * width);
        for r in 0..av.rows() {
            data.extend_from_slice(&av.row_slice(r)[start..start + width]);
        }
        let value = Tensor::from_vec(av.rows(), width, data)?;
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    /// Rows `start .. start + count`.
    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Result<Var> {
        let av = self.value(a);
        if start + count > av.rows() || count == 0 {
            return Err(Error::Shape {
                op: "slice_rows",
                lhs: av.shape(),
                rhs: [start, count],
            });
        }
        let c = av.cols();
        let value = Tensor::from_vec(count, c, av.data()[start * c..(start + count) * c].to_vec())?;
        Ok(self.push(value, Op::SliceRows(a, start)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let c = av.cols();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = libm::exp(*x - m);
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        let value = Tensor::from_vec(av.rows(), c, data).expect("same shape");
        self.push(value, Op::Softmax(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = map(self.value(a), sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = map(self.value(a), libm::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = map(self.value(a), |x| if x > 0.0 { x } else { 0.0 });
        self.push(value, Op::Relu(a))
    }

    /// Column means: `r × c → 1 × c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (r, c) = (av.rows(), av.cols());
        let mut data = alloc::vec![0.0; c];
        for i in 0..r {
            for (d, x) in data.iter_mut().zip(av.row_slice(i)) {
                *d += x;
            }
        }
        for d in &mut data {
            *d /= r as f64;
        }
        self.push(Tensor::row(data), Op::MeanRows(a))
    }

    /// Sum of all entries as a `1 × 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    /// Per-row standardization to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (r, c) = (av.rows(), av.cols());
        let mut data = Vec::with_capacity(r * c);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = av.row_slice(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let s = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            inv_std.push(s);
            data.extend(row.iter().map(|x| (x - mean) * s));
        }
        let value = Tensor::from_vec(r, c, data).expect("same shape");
        self.push(value, Op::LayerNorm(a, inv_std))
    }

    /// Rows of `a` picked by `indices` (embedding lookup).
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let c = av.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= av.rows() {
                return Err(Error::Shape {
                    op: "gather_rows",
                    lhs: av.shape(),
                    rhs: [i, 0],
                });
            }
            data.extend_from_slice(av.row_slice(i));
        }
        let value = Tensor::from_vec(indices.len(), c, data)?;
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec())))
    }

    /// Backpropagates from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let shape = self.shape(output);
        if shape != [1, 1] {
            return Err(Error::Shape {
                op: "backward",
                lhs: shape,
                rhs: [1, 1],
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = alloc::vec![None; output.0 + 1];
        grads[output.0] = Some(alloc::vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = self.value(Var(i));
            match &node.op {
                Op::Const => {}
                Op::Param(id) => out.add(*id, &g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                    // dA = G Bᵀ
                    let bt = bv.transpose();
                    let mut da = alloc::vec![0.0; n * k];
                    matmul_into(&g, bt.data(), &mut da, n, m, k);
                    // dB = Aᵀ G
                    let at = av.transpose();
                    let mut db = alloc::vec![0.0; k * m];
                    matmul_into(at.data(), &g, &mut db, k, n, m);
                    add_into(&mut grads[a.0], &da);
                    add_into(&mut grads[b.0], &db);
                }
                Op::Add(a, b) => {
                    add_into(&mut grads[a.0], &g);
                    add_into(&mut grads[b.0], &g);
                }
                Op::Sub(a, b) => {
                    add_into(&mut grads[a.0], &g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    add_into(&mut grads[b.0], &neg);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = g.iter().zip(self.value(*b).data()).map(|(x, y)| x * y).collect();
                    let db: Vec<f64> = g.iter().zip(self.value(*a).data()).map(|(x, y)| x * y).collect();
                    add_into(&mut grads[a.0], &da);
                    add_into(&mut grads[b.0], &db);
                }
                Op::AddRow(a, row) => {
                    let c = y.cols();
                    let mut dr = alloc::vec![0.0; c];
                    for (j, x) in g.iter().enumerate() {
                        dr[j % c] += x;
                    }
                    add_into(&mut grads[a.0], &g);
                    add_into(&mut grads[row.0], &dr);
                }
                Op::MulRow(a, row) => {
                    let c = y.cols();
                    let (av, rv) = (self.value(*a).data(), self.value(*row).data());
                    let mut dr = alloc::vec![0.0; c];
                    let mut da = Vec::with_capacity(g.len());
                    for (j, x) in g.iter().enumerate() {
                        dr[j % c] += x * av[j];
                        da.push(x * rv[j % c]);
                    }
                    add_into(&mut grads[a.0], &da);
                    add_into(&mut grads[row.0], &dr);
                }
                Op::Scale(a, s) => {
                    let da: Vec<f64> = g.iter().map(|x| x * s).collect();
                    add_into(&mut grads[a.0], &da);
                }
                Op::ConcatCols(parts) => {
                    let (rows, cols) = (y.rows(), y.cols());
                    let mut offset = 0;
                    for p in parts {
                        let w = self.shape(*p)[1];
                        let mut dp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            dp.extend_from_slice(&g[r * cols + offset..r * cols + offset + w]);
                        }
                        add_into(&mut grads[p.0], &dp);
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        add_into(&mut grads[p.0], &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::SliceCols(a, start) => {
                    let [rows, cols] = self.shape(*a);
                    let w = y.cols();
                    let mut da = alloc::vec![0.0; rows * cols];
                    for r in 0..rows {
                        da[r * cols + start..r * cols + start + w].copy_from_slice(&g[r * w..(r + 1) * w]);
                    }
                    add_into(&mut grads[a.0], &da);
                }
                Op::SliceRows(a, start) => {
                    let [rows, cols] = self.shape(*a);
                    let mut da = alloc::vec![0.0; rows * cols];
                    da[start * cols..start * cols + g.len()].copy_from_slice(&g);
                    add_into(&mut grads[a.0], &da);
                }
                Op::Transpose(a) => {
                    let gt = Tensor::from_vec(y.rows(), y.cols(), g).expect("same shape").transpose();
                    add_into(&mut grads[a.0], gt.data());
                }
                Op::Softmax(a) => {
                    let c = y.cols();
                    let mut da = Vec::with_capacity(g.len());
                    for (gr, yr) in g.chunks(c).zip(y.data().chunks(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                        da.extend(gr.iter().zip(yr).map(|(x, y)| y * (x - dot)));
                    }
                    add_into(&mut grads[a.0], &da);
                }
                Op::Sigmoid(a) => {
                    let da: Vec<f64> = g.iter().zip(y.data()).map(|(x, s)| x * s * (1.0 - s)).collect();
                    add_into(&mut grads[a.0], &da);
                }
                Op::Tanh(a) => {
                    let da: Vec<f64> = g.iter().zip(y.data()).map(|(x, t)| x * (1.0 - t * t)).collect();
                    add_into(&mut grads[a.0], &da);
                }
                Op::Relu(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(x, v)| if *v > 0.0 { *x } else { 0.0 })
                        .collect();
                    add_into(&mut grads[a.0], &da);
                }
                Op::MeanRows(a) => {
                    let [rows, cols] = self.shape(*a);
                    let inv = 1.0 / rows as f64;
                    let mut da = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        da.extend(g.iter().map(|x| x * inv));
                    }
                    add_into(&mut grads[a.0], &da);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    add_into(&mut grads[a.0], &alloc::vec![g[0]; n]);
                }
                Op::LayerNorm(a, inv_std) => {
                    let c = y.cols();
                    let mut da = Vec::with_capacity(g.len());
                    for ((gr, yr), s) in g.chunks(c).zip(y.data().chunks(c)).zip(inv_std) {
                        let mean_g = gr.iter().sum::<f64>() / c as f64;
                        let mean_gy = gr.iter().zip(yr).map(|(x, y)| x * y).sum::<f64>() / c as f64;
                        da.extend(gr.iter().zip(yr).map(|(x, y)| s * (x - mean_g - y * mean_gy)));
                    }
                    add_into(&mut grads[a.0], &da);
                }
                Op::GatherRows(a, indices) => {
                    let [rows, cols] = self.shape(*a);
                    let mut da = alloc::vec![0.0; rows * cols];
                    for (k, &i) in indices.iter().enumerate() {
                        for (d, x) in da[i * cols..(i + 1) * cols].iter_mut().zip(&g[k * cols..(k + 1) * cols]) {
                            *d += x;
                        }
                    }
                    add_into(&mut grads[a.0], &da);
                }
            }
        }
        Ok(out)
    }
}

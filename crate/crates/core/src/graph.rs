//! Reverse-mode automatic differentiation over small dense matrices.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the backward sweep is a plain reverse iteration.
//! Parameters are read straight out of the borrowed [`ParamStore`]; each one
//! gets at most one leaf node per graph.

use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{gemm_acc, gemm_at_acc, gemm_bt_acc, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    /// `x·W (+ b)`
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    MatMul(Var, Var),
    Add(Var, Var),
    /// Adds a `1×n` row to every row of the left operand.
    AddRow(Var, Var),
    Mul(Var, Var),
    /// Multiplies every row of the left operand by a `1×n` row.
    MulRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Softmax {
        x: Var,
    },
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    Row {
        x: Var,
        row: usize,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
        frozen: Option<usize>,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        eps: f64,
    },
    LstmCell {
        gates: Var,
        c_prev: Var,
    },
    Nll {
        logits: Var,
        target: usize,
    },
    SumAll(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    param_nodes: Vec<Option<Var>>,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            param_nodes: vec![None; params.len()],
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let v = self.push(Op::Param(id), Tensor::zeros(0, 0));
        self.param_nodes[id.0] = Some(v);
        v
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (n, k) = self.shape(x);
        let (k2, m) = self.shape(w);
        assert_eq!(k, k2, "linear: input width {k} vs weight rows {k2}");
        let mut out = Tensor::zeros(n, m);
        gemm_acc(self.value(x).data(), self.value(w).data(), out.data_mut(), n, k, m);
        if let Some(b) = b {
            let bias = self.value(b);
            assert_eq!(bias.shape(), (1, m), "linear: bias shape");
            for r in 0..n {
                for (o, bv) in out.row_slice_mut(r).iter_mut().zip(bias.data()) {
                    *o += bv;
                }
            }
        }
        self.push(Op::Linear { x, w, b }, out)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
        let mut out = Tensor::zeros(n, m);
        gemm_acc(self.value(a).data(), self.value(b).data(), out.data_mut(), n, k, m);
        self.push(Op::MatMul(a, b), out)
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_vec(va.rows(), va.cols(), data).expect("shape")
    }

    fn row_map(&self, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vr) = (self.value(a), self.value(row));
        assert_eq!(vr.rows(), 1, "broadcast operand must be a row");
        assert_eq!(va.cols(), vr.cols(), "broadcast width mismatch");
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (o, x) in out.row_slice_mut(r).iter_mut().zip(vr.data()) {
                *o = f(*o, *x);
            }
        }
        out
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let va = self.value(a);
        let data = va.data().iter().map(|x| f(*x)).collect();
        Tensor::from_vec(va.rows(), va.cols(), data).expect("shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_map(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), out)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.row_map(a, row, |x, y| x + y);
        self.push(Op::AddRow(a, row), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_map(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), out)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.row_map(a, row, |x, y| x * y);
        self.push(Op::MulRow(a, row), out)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.map(a, |x| x * factor);
        self.push(Op::Scale(a, factor), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.max(0.0));
        self.push(Op::Relu(a), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::tanh);
        self.push(Op::Tanh(a), out)
    }

    /// Softmax over a `1×n` row. Masked-out positions (`false`) get exactly
    /// zero weight. The caller guarantees at least one position is unmasked.
    pub fn softmax(&mut self, x: Var, mask: Option<Vec<bool>>) -> Var {
        let vx = self.value(x);
        assert_eq!(vx.rows(), 1, "softmax expects a row");
        if let Some(m) = &mask {
            assert_eq!(m.len(), vx.cols(), "softmax mask length");
        }
        let out = Tensor::row(&softmax_masked(vx.data(), mask.as_deref()));
        self.push(Op::Softmax { x }, out)
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let out = Tensor::from_vec(rows, cols, self.value(x).data().to_vec()).expect("reshape");
        self.push(Op::Reshape(x), out)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let v = self.value(*p);
                assert_eq!(v.rows(), rows, "concat_cols row mismatch");
                out.row_slice_mut(r)[off..off + v.cols()].copy_from_slice(v.row_slice(r));
                off += v.cols();
            }
        }
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let v = self.value(*p);
            assert_eq!(v.cols(), cols, "concat_rows width mismatch");
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        let out = Tensor::from_vec(rows, cols, data).expect("shape");
        self.push(Op::ConcatRows(parts.to_vec()), out)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x);
        assert!(start + len <= v.cols(), "slice_cols out of range");
        let mut out = Tensor::zeros(v.rows(), len);
        for r in 0..v.rows() {
            out.row_slice_mut(r)
                .copy_from_slice(&v.row_slice(r)[start..start + len]);
        }
        self.push(Op::SliceCols { x, start }, out)
    }

    pub fn row(&mut self, x: Var, row: usize) -> Var {
        let out = Tensor::row(self.value(x).row_slice(row));
        self.push(Op::Row { x, row }, out)
    }

    /// Rows of `table` selected by `ids`. Gradient never flows into row
    /// `frozen`.
    pub fn gather(&mut self, table: Var, ids: &[usize], frozen: Option<usize>) -> Var {
        let t = self.value(table);
        let mut out = Tensor::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            out.row_slice_mut(r).copy_from_slice(t.row_slice(id));
        }
        self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
                frozen,
            },
            out,
        )
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let vx = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        let mut out = Tensor::zeros(vx.rows(), vx.cols());
        for r in 0..vx.rows() {
            let row = vx.row_slice(r);
            let (mean, inv) = mean_inv_std(row, eps);
            for (j, o) in out.row_slice_mut(r).iter_mut().enumerate() {
                *o = g.data()[j] * (row[j] - mean) * inv + b.data()[j];
            }
        }
        self.push(Op::LayerNorm { x, gain, bias, eps }, out)
    }

    /// Standard LSTM cell activation. `gates` is `1×4H` in (input, forget,
    /// cell, output) order; the result is `1×2H` holding `[h, c]`.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Var {
        let vg = self.value(gates);
        let vc = self.value(c_prev);
        let h = vc.cols();
        assert_eq!(vg.cols(), 4 * h, "lstm gates width");
        let g = vg.data();
        let mut out = Tensor::zeros(1, 2 * h);
        for j in 0..h {
            let i = sigmoid(g[j]);
            let f = sigmoid(g[h + j]);
            let c_hat = g[2 * h + j].tanh();
            let o = sigmoid(g[3 * h + j]);
            let c = f * vc.data()[j] + i * c_hat;
            out.data_mut()[j] = o * c.tanh();
            out.data_mut()[h + j] = c;
        }
        self.push(Op::LstmCell { gates, c_prev }, out)
    }

    /// Negative log-probability of `target` under softmax of a `1×V` row.
    pub fn nll(&mut self, logits: Var, target: usize) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows(), 1, "nll expects a row of logits");
        let value = log_sum_exp(l.data()) - l.data()[target];
        self.push(Op::Nll { logits, target }, Tensor::row(&[value]))
    }

    /// Sum of every element of every operand, as a `1×1` scalar.
    pub fn sum_all(&mut self, parts: &[Var]) -> Var {
        let s: f64 = parts.iter().map(|p| self.value(*p).data().iter().sum::<f64>()).sum();
        self.push(Op::SumAll(parts.to_vec()), Tensor::row(&[s]))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "not a scalar");
        t.data()[0]
    }

    /// Reverse sweep from a scalar node. Returns gradients for every node.
    pub fn backward(&self, loss: Var) -> Backward {
        assert_eq!(self.value(loss).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Input | Op::Param(_) => {
                    grads[idx] = Some(dy);
                    continue;
                }
                Op::Linear { x, w, b } => {
                    let (n, k) = self.shape(*x);
                    let m = dy.cols();
                    let gx = acc(&mut grads, *x, self.shape(*x));
                    gemm_bt_acc(dy.data(), self.value(*w).data(), gx.data_mut(), n, m, k);
                    let gw = acc(&mut grads, *w, (k, m));
                    gemm_at_acc(self.value(*x).data(), dy.data(), gw.data_mut(), n, k, m);
                    if let Some(b) = b {
                        let gb = acc(&mut grads, *b, (1, m));
                        for r in 0..n {
                            for (o, d) in gb.data_mut().iter_mut().zip(dy.row_slice(r)) {
                                *o += d;
                            }
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (n, k) = self.shape(*a);
                    let m = dy.cols();
                    let ga = acc(&mut grads, *a, (n, k));
                    gemm_bt_acc(dy.data(), self.value(*b).data(), ga.data_mut(), n, m, k);
                    let gb = acc(&mut grads, *b, (k, m));
                    gemm_at_acc(self.value(*a).data(), dy.data(), gb.data_mut(), n, k, m);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, dy.shape()).add_in_place(&dy);
                    acc(&mut grads, *b, dy.shape()).add_in_place(&dy);
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads, *a, dy.shape()).add_in_place(&dy);
                    let gr = acc(&mut grads, *row, (1, dy.cols()));
                    for r in 0..dy.rows() {
                        for (o, d) in gr.data_mut().iter_mut().zip(dy.row_slice(r)) {
                            *o += d;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = acc(&mut grads, *a, dy.shape());
                    for ((o, d), x) in ga.data_mut().iter_mut().zip(dy.data()).zip(vb.data()) {
                        *o += d * x;
                    }
                    let gb = acc(&mut grads, *b, dy.shape());
                    for ((o, d), x) in gb.data_mut().iter_mut().zip(dy.data()).zip(va.data()) {
                        *o += d * x;
                    }
                }
                Op::MulRow(a, row) => {
                    let (va, vr) = (self.value(*a), self.value(*row));
                    let ga = acc(&mut grads, *a, dy.shape());
                    for r in 0..dy.rows() {
                        let drow = dy.row_slice(r);
                        for ((o, d), x) in ga.row_slice_mut(r).iter_mut().zip(drow).zip(vr.data()) {
                            *o += d * x;
                        }
                    }
                    let gr = acc(&mut grads, *row, (1, dy.cols()));
                    for r in 0..dy.rows() {
                        let drow = dy.row_slice(r);
                        for ((o, d), x) in gr.data_mut().iter_mut().zip(drow).zip(va.row_slice(r)) {
                            *o += d * x;
                        }
                    }
                }
                Op::Scale(a, f) => {
                    let ga = acc(&mut grads, *a, dy.shape());
                    for (o, d) in ga.data_mut().iter_mut().zip(dy.data()) {
                        *o += d * f;
                    }
                }
                Op::Relu(a) => {
                    let ga = acc(&mut grads, *a, dy.shape());
                    for ((o, d), yv) in ga.data_mut().iter_mut().zip(dy.data()).zip(y.data()) {
                        if *yv > 0.0 {
                            *o += d;
                        }
                    }
                }
                Op::Tanh(a) => {
                    let ga = acc(&mut grads, *a, dy.shape());
                    for ((o, d), yv) in ga.data_mut().iter_mut().zip(dy.data()).zip(y.data()) {
                        *o += d * (1.0 - yv * yv);
                    }
                }
                Op::Softmax { x } => {
                    let dot: f64 = dy.data().iter().zip(y.data()).map(|(d, p)| d * p).sum();
                    let gx = acc(&mut grads, *x, dy.shape());
                    for ((o, d), p) in gx.data_mut().iter_mut().zip(dy.data()).zip(y.data()) {
                        *o += p * (d - dot);
                    }
                }
                Op::Reshape(x) => {
                    let gx = acc(&mut grads, *x, self.shape(*x));
                    for (o, d) in gx.data_mut().iter_mut().zip(dy.data()) {
                        *o += d;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let shape = self.shape(*p);
                        let gp = acc(&mut grads, *p, shape);
                        for r in 0..shape.0 {
                            let src = &dy.row_slice(r)[off..off + shape.1];
                            for (o, d) in gp.row_slice_mut(r).iter_mut().zip(src) {
                                *o += d;
                            }
                        }
                        off += shape.1;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let shape = self.shape(*p);
                        let gp = acc(&mut grads, *p, shape);
                        let n = shape.0 * shape.1;
                        for (o, d) in gp.data_mut().iter_mut().zip(&dy.data()[off..off + n]) {
                            *o += d;
                        }
                        off += n;
                    }
                }
                Op::SliceCols { x, start } => {
                    let gx = acc(&mut grads, *x, self.shape(*x));
                    for r in 0..dy.rows() {
                        let dst = &mut gx.row_slice_mut(r)[*start..*start + dy.cols()];
                        for (o, d) in dst.iter_mut().zip(dy.row_slice(r)) {
                            *o += d;
                        }
                    }
                }
                Op::Row { x, row } => {
                    let gx = acc(&mut grads, *x, self.shape(*x));
                    for (o, d) in gx.row_slice_mut(*row).iter_mut().zip(dy.data()) {
                        *o += d;
                    }
                }
                Op::Gather { table, ids, frozen } => {
                    let gt = acc(&mut grads, *table, self.shape(*table));
                    for (r, &id) in ids.iter().enumerate() {
                        if Some(id) == *frozen {
                            continue;
                        }
                        for (o, d) in gt.row_slice_mut(id).iter_mut().zip(dy.row_slice(r)) {
                            *o += d;
                        }
                    }
                }
                Op::LayerNorm { x, gain, bias, eps } => {
                    let vx = self.value(*x);
                    let vg = self.value(*gain).clone();
                    let cols = vx.cols();
                    let mut gx_local = Tensor::zeros(vx.rows(), cols);
                    let mut gg = Tensor::zeros(1, cols);
                    let mut gb = Tensor::zeros(1, cols);
                    for r in 0..vx.rows() {
                        let row = vx.row_slice(r);
                        let (mean, inv) = mean_inv_std(row, *eps);
                        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                        let drow = dy.row_slice(r);
                        let dxhat: Vec<f64> =
                            drow.iter().zip(vg.data()).map(|(d, g)| d * g).collect();
                        let n = cols as f64;
                        let mean_d = dxhat.iter().sum::<f64>() / n;
                        let mean_dx =
                            dxhat.iter().zip(&xhat).map(|(d, x)| d * x).sum::<f64>() / n;
                        for j in 0..cols {
                            gx_local.row_slice_mut(r)[j] =
                                inv * (dxhat[j] - mean_d - xhat[j] * mean_dx);
                            gg.data_mut()[j] += drow[j] * xhat[j];
                            gb.data_mut()[j] += drow[j];
                        }
                    }
                    acc(&mut grads, *x, gx_local.shape()).add_in_place(&gx_local);
                    acc(&mut grads, *gain, (1, cols)).add_in_place(&gg);
                    acc(&mut grads, *bias, (1, cols)).add_in_place(&gb);
                }
                Op::LstmCell { gates, c_prev } => {
                    let vg = self.value(*gates).data().to_vec();
                    let vc = self.value(*c_prev).data().to_vec();
                    let h = vc.len();
                    let mut dgates = Tensor::zeros(1, 4 * h);
                    let mut dcp = Tensor::zeros(1, h);
                    for j in 0..h {
                        let i = sigmoid(vg[j]);
                        let f = sigmoid(vg[h + j]);
                        let c_hat = vg[2 * h + j].tanh();
                        let o = sigmoid(vg[3 * h + j]);
                        let c = y.data()[h + j];
                        let tc = c.tanh();
                        let dh = dy.data()[j];
                        let dc = dy.data()[h + j] + dh * o * (1.0 - tc * tc);
                        let dg = dgates.data_mut();
                        dg[j] = dc * c_hat * i * (1.0 - i);
                        dg[h + j] = dc * vc[j] * f * (1.0 - f);
                        dg[2 * h + j] = dc * i * (1.0 - c_hat * c_hat);
                        dg[3 * h + j] = dh * tc * o * (1.0 - o);
                        dcp.data_mut()[j] = dc * f;
                    }
                    acc(&mut grads, *gates, (1, 4 * h)).add_in_place(&dgates);
                    acc(&mut grads, *c_prev, (1, h)).add_in_place(&dcp);
                }
                Op::Nll { logits, target } => {
                    let l = self.value(*logits);
                    let p = softmax_masked(l.data(), None);
                    let d = dy.data()[0];
                    let gl = acc(&mut grads, *logits, l.shape());
                    for (j, (o, pj)) in gl.data_mut().iter_mut().zip(&p).enumerate() {
                        *o += d * (pj - if j == *target { 1.0 } else { 0.0 });
                    }
                }
                Op::SumAll(parts) => {
                    let d = dy.data()[0];
                    for p in parts {
                        let shape = self.shape(*p);
                        let gp = acc(&mut grads, *p, shape);
                        gp.data_mut().iter_mut().for_each(|o| *o += d);
                    }
                }
            }
        }
        Backward {
            grads,
            param_nodes: self.param_nodes.clone(),
        }
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize)) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

/// Result of [`Graph::backward`].
pub struct Backward {
    grads: Vec<Option<Tensor>>,
    param_nodes: Vec<Option<Var>>,
}

impl Backward {
    /// Gradient of the loss with respect to any node (`None` when the node
    /// does not influence the loss).
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn into_param_grads(mut self) -> Gradients {
        let grads = self
            .param_nodes
            .iter()
            .map(|slot| slot.and_then(|v| self.grads[v.0].take()))
            .collect();
        Gradients::from_vec(grads)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Max-subtracted softmax; masked (`false`) positions are exactly zero.
pub fn softmax_masked(x: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let m = x
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| if keep(i) { (v - m).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}

fn mean_inv_std(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

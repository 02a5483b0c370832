//! Explicit-loop reference implementations and fixtures shared by the
//! integration tests. Nothing here touches the autodiff graph.

#![allow(dead_code)]

use dmrm_core::corpus::{generate_synthetic, SynthConfig, SyntheticData};
use dmrm_core::nn::{Linear, Lstm, Mlp2, LAYER_NORM_EPS};
use dmrm_core::reasoning::{FusionParams, LocateParams, TrackParams};
use dmrm_core::{ParamStore, Tensor};
use rand::Rng;

pub fn rand_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Adds uniform noise to every parameter so zero-initialized biases and
/// unit gains are exercised too.
pub fn jitter<R: Rng>(store: &mut ParamStore, rng: &mut R, scale: f64) {
    for id in store.ids().collect::<Vec<_>>() {
        for x in store.get_mut(id).data_mut() {
            *x += rng.gen_range(-scale..scale);
        }
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn linear(store: &ParamStore, l: &Linear, x: &[f64]) -> Vec<f64> {
    let w = store.get(l.w);
    let mut out = vec![0.0; l.out_dim];
    for (j, o) in out.iter_mut().enumerate() {
        let mut s = l.b.map_or(0.0, |b| store.get(b).get(0, j));
        for (i, xi) in x.iter().enumerate() {
            s += xi * w.get(i, j);
        }
        *o = s;
    }
    out
}

fn relu(x: Vec<f64>) -> Vec<f64> {
    x.into_iter().map(|v| v.max(0.0)).collect()
}

pub fn mlp(store: &ParamStore, m: &Mlp2, x: &[f64]) -> Vec<f64> {
    let h = relu(linear(store, &m.first, x));
    let y = linear(store, &m.second, &h);
    if m.relu_out {
        relu(y)
    } else {
        y
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn weighted_rows(w: &[f64], m: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for (k, wk) in w.iter().enumerate() {
        for (c, o) in out.iter_mut().enumerate() {
            *o += wk * m.get(k, c);
        }
    }
    out
}

pub fn track(store: &ParamStore, p: &TrackParams, q: &[f64], v: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let fq = mlp(store, &p.f_query, q);
    let logits: Vec<f64> = (0..v.rows())
        .map(|k| {
            let fv = mlp(store, &p.f_image, v.row_slice(k));
            let s: Vec<f64> = fv.iter().zip(&fq).map(|(a, b)| a * b).collect();
            linear(store, &p.logit, &s)[0]
        })
        .collect();
    let alpha = softmax(&logits);
    (weighted_rows(&alpha, v), alpha)
}

pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    x.iter()
        .enumerate()
        .map(|(j, v)| gain[j] * (v - mean) * inv + bias[j])
        .collect()
}

pub fn locate(store: &ParamStore, p: &LocateParams, q: &[f64], u: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let fq = mlp(store, &p.f_query, q);
    let logits: Vec<f64> = (0..u.rows())
        .map(|t| {
            let fu = mlp(store, &p.f_history, u.row_slice(t));
            let z: Vec<f64> = fu.iter().zip(&fq).map(|(a, b)| a * b).collect();
            linear(store, &p.logit, &z)[0]
        })
        .collect();
    let eta = softmax(&logits);
    let attended = weighted_rows(&eta, u);
    let g = mlp(store, &p.post, &attended);
    let res: Vec<f64> = g.iter().zip(u.row_slice(0)).map(|(a, b)| a + b).collect();
    let out = layer_norm(&res, store.get(p.norm.gain).data(), store.get(p.norm.bias).data());
    (out, eta)
}

pub fn enhance(store: &ParamStore, f_q: &Mlp2, f_rep: &Mlp2, q: &[f64], rep: &[f64]) -> Vec<f64> {
    let a = mlp(store, f_q, q);
    let b = mlp(store, f_rep, rep);
    a.iter().zip(&b).map(|(x, y)| x * y).collect()
}

pub fn fuse(store: &ParamStore, p: &FusionParams, t: &[f64], l: &[f64]) -> Vec<f64> {
    let mut cat = linear(store, &p.proj_track, t);
    cat.extend(linear(store, &p.proj_locate, l));
    linear(store, &p.joint, &cat).into_iter().map(f64::tanh).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step; returns `(h, c)`.
pub fn lstm_step(store: &ParamStore, l: &Lstm, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = l.hidden;
    let (wx, wh, b) = (store.get(l.wx), store.get(l.wh), store.get(l.b));
    let mut gates = vec![0.0; 4 * n];
    for (j, gj) in gates.iter_mut().enumerate() {
        let mut s = b.get(0, j);
        for (i, xi) in x.iter().enumerate() {
            s += xi * wx.get(i, j);
        }
        for (i, hi) in h.iter().enumerate() {
            s += hi * wh.get(i, j);
        }
        *gj = s;
    }
    let mut h_out = vec![0.0; n];
    let mut c_out = vec![0.0; n];
    for j in 0..n {
        let i = sigmoid(gates[j]);
        let f = sigmoid(gates[n + j]);
        let g = gates[2 * n + j].tanh();
        let o = sigmoid(gates[3 * n + j]);
        c_out[j] = f * c[j] + i * g;
        h_out[j] = o * c_out[j].tanh();
    }
    (h_out, c_out)
}

/// Bidirectional pass: per-token states `[fwd_j, bwd_j]`, and the summary
/// `[fwd_last, bwd_first]`.
pub fn bilstm(store: &ParamStore, fwd: &Lstm, bwd: &Lstm, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = xs.len();
    let (mut h, mut c) = (vec![0.0; fwd.hidden], vec![0.0; fwd.hidden]);
    let mut f_states = Vec::with_capacity(n);
    for x in xs {
        (h, c) = lstm_step(store, fwd, x, &h, &c);
        f_states.push(h.clone());
    }
    let (mut h, mut c) = (vec![0.0; bwd.hidden], vec![0.0; bwd.hidden]);
    let mut b_states = vec![Vec::new(); n];
    for j in (0..n).rev() {
        (h, c) = lstm_step(store, bwd, &xs[j], &h, &c);
        b_states[j] = h.clone();
    }
    let states = (0..n)
        .map(|j| [f_states[j].clone(), b_states[j].clone()].concat())
        .collect();
    let last = [f_states[n - 1].clone(), b_states[0].clone()].concat();
    (states, last)
}

/// Additive attention `softmax(w_h · tanh(X W_x + h W_g))` and its readout.
pub fn additive_attention(
    store: &ParamStore,
    head: &dmrm_core::decoder::AttentionHead,
    items: &Tensor,
    h: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let st = linear(store, &head.w_state, h);
    let logits: Vec<f64> = (0..items.rows())
        .map(|k| {
            let p = linear(store, &head.w_input, items.row_slice(k));
            let act: Vec<f64> = p.iter().zip(&st).map(|(a, b)| (a + b).tanh()).collect();
            linear(store, &head.w_score, &act)[0]
        })
        .collect();
    let a = softmax(&logits);
    (weighted_rows(&a, items), a)
}

pub fn synth(num_dialogs: usize, seed: u64) -> SyntheticData {
    generate_synthetic(
        &SynthConfig {
            num_dialogs,
            seed,
            ..SynthConfig::default()
        },
        None,
    )
    .unwrap()
}

/// Rank by sorting: position of `gt` after a stable sort by descending score.
pub fn sort_rank(scores: &[f64], gt: usize) -> usize {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.iter().position(|&i| i == gt).unwrap() + 1
}

/// Metrics recomputed from scratch: (mrr, r@1, r@5, r@10, mean rank).
pub fn metrics_oracle(ranks: &[usize]) -> (f64, f64, f64, f64, f64) {
    let n = ranks.len() as f64;
    let mut rr = 0.0;
    let (mut r1, mut r5, mut r10, mut total) = (0.0, 0.0, 0.0, 0.0);
    for &r in ranks {
        rr += 1.0 / r as f64;
        if r <= 1 {
            r1 += 1.0;
        }
        if r <= 5 {
            r5 += 1.0;
        }
        if r <= 10 {
            r10 += 1.0;
        }
        total += r as f64;
    }
    (rr / n, r1 / n, r5 / n, r10 / n, total / n)
}

pub mod checks;
pub mod runs;

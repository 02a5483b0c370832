//! Parameterized layers that emit graph nodes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};

/// Affine map `x·W + b` over row vectors.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / in_dim.max(1) as f64).sqrt();
        let w = store.add_bounded(format!("{name}.w"), in_dim, out_dim, bound, rng);
        let b = bias.then(|| store.add_zeros(format!("{name}.b"), 1, out_dim));
        Self {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = self.b.map(|b| g.param(b));
        g.linear(x, w, b)
    }
}

/// Two affine layers with a ReLU between them, and optionally after the
/// second one.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Mlp2 {
    pub first: Linear,
    pub second: Linear,
    pub relu_out: bool,
}

impl Mlp2 {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dims: (usize, usize, usize),
        relu_out: bool,
        rng: &mut R,
    ) -> Self {
        Self {
            first: Linear::new(store, &format!("{name}.0"), dims.0, dims.1, true, rng),
            second: Linear::new(store, &format!("{name}.1"), dims.1, dims.2, true, rng),
            relu_out,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.first.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.second.out_dim
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.first.forward(g, x);
        let h = g.relu(h);
        let y = self.second.forward(g, h);
        if self.relu_out {
            g.relu(y)
        } else {
            y
        }
    }
}

/// Single-direction LSTM; gate order (input, forget, cell, output).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            wx: store.add_uniform(format!("{name}.wx"), in_dim, 4 * hidden, hidden, rng),
            wh: store.add_uniform(format!("{name}.wh"), hidden, 4 * hidden, hidden, rng),
            b: store.add_uniform(format!("{name}.b"), 1, 4 * hidden, hidden, rng),
            in_dim,
            hidden,
        }
    }

    /// One recurrence step; returns `(h, c)`.
    pub fn step(&self, g: &mut Graph, x: Var, h: Var, c: Var) -> (Var, Var) {
        let (wx, wh, b) = (g.param(self.wx), g.param(self.wh), g.param(self.b));
        let gx = g.linear(x, wx, Some(b));
        let gh = g.linear(h, wh, None);
        let gates = g.add(gx, gh);
        let hc = g.lstm_cell(gates, c);
        (
            g.slice_cols(hc, 0, self.hidden),
            g.slice_cols(hc, self.hidden, self.hidden),
        )
    }
}

/// Learned gain and bias for row-wise layer normalization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(
                format!("{name}.gain"),
                crate::tensor::Tensor::filled(1, dim, 1.0),
            ),
            bias: store.add_zeros(format!("{name}.bias"), 1, dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let (gain, bias) = (g.param(self.gain), g.param(self.bias));
        g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
    }
}

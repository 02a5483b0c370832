use crate::params::{Gradients, ParamStore};
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias correction. Moment buffers are allocated lazily per
/// parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    first: Vec<Option<Tensor>>,
    second: Vec<Option<Tensor>>,
    steps: u64,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self {
            first: vec![None; num_params],
            second: vec![None; num_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (id, g) in grads.iter() {
            let i = id.index();
            let (r, c) = g.shape();
            let m = self.first[i].get_or_insert_with(|| Tensor::zeros(r, c));
            let v = self.second[i].get_or_insert_with(|| Tensor::zeros(r, c));
            let w = store.get_mut(id);
            for (((wk, gk), mk), vk) in w
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mk = BETA1 * *mk + (1.0 - BETA1) * gk;
                *vk = BETA2 * *vk + (1.0 - BETA2) * gk * gk;
                let m_hat = *mk / c1;
                let v_hat = *vk / c2;
                *wk -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

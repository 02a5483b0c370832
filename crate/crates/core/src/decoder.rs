//! LSTM answer decoder with per-step attention over question tokens, history
//! rounds and image objects.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{Linear, Lstm, Mlp2};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{argmax, Tensor};

/// Additive attention `softmax(W_h tanh(X W_x + (h W_g) 1ᵀ))`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttentionHead {
    pub w_input: Linear,
    pub w_state: Linear,
    pub w_score: Linear,
}

impl AttentionHead {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, state_dim: usize, att_dim: usize, rng: &mut R) -> Self {
        Self {
            w_input: Linear::new(store, &format!("{name}.w_in"), in_dim, att_dim, true, rng),
            w_state: Linear::new(store, &format!("{name}.w_g"), state_dim, att_dim, false, rng),
            w_score: Linear::new(store, &format!("{name}.w_h"), att_dim, 1, true, rng),
        }
    }

    /// Returns `(attended 1 × in_dim, weights 1 × n)`.
    pub fn forward(&self, g: &mut Graph, items: Var, h: Var, mask: Option<&[bool]>) -> (Var, Var) {
        let n = g.shape(items).0;
        let proj = self.w_input.forward(g, items);
        let st = self.w_state.forward(g, h);
        let pre = g.add_row(proj, st);
        let act = g.tanh(pre);
        let z = self.w_score.forward(g, act);
        let z = g.reshape(z, 1, n);
        let alpha = g.softmax(z, mask.map(<[bool]>::to_vec));
        let attended = g.matmul(alpha, items);
        (attended, alpha)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecoderParams {
    pub embedding: ParamId,
    pub lstm: Lstm,
    pub att_question: AttentionHead,
    pub att_history: AttentionHead,
    pub att_image: AttentionHead,
    pub w_context: Linear,
    pub output: Mlp2,
    pub vocab_size: usize,
    /// When false, `c_t` is fixed to `ê` and no attention is computed.
    pub attend: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecoderDims {
    pub embed: usize,
    pub hidden: usize,
    pub feature: usize,
    pub attention: usize,
    pub vocab: usize,
}

impl DecoderParams {
    pub fn new<R: Rng>(store: &mut ParamStore, embedding: ParamId, dims: DecoderDims, attend: bool, rng: &mut R) -> Self {
        let DecoderDims {
            embed,
            hidden,
            feature,
            attention,
            vocab,
        } = dims;
        Self {
            embedding,
            lstm: Lstm::new(store, "dec.lstm", embed, hidden, rng),
            att_question: AttentionHead::new(store, "dec.att_q", hidden, hidden, attention, rng),
            att_history: AttentionHead::new(store, "dec.att_u", hidden, hidden, attention, rng),
            att_image: AttentionHead::new(store, "dec.att_v", feature, hidden, attention, rng),
            w_context: Linear::new(store, "dec.w_c", 2 * hidden + feature, embed, true, rng),
            output: Mlp2::new(store, "dec.out", (hidden + embed, hidden, vocab), false, rng),
            vocab_size: vocab,
            attend,
        }
    }
}

/// Inputs the decoder attends over, plus the fused encoder output.
#[derive(Debug, Clone)]
pub struct DecoderContext {
    pub q_tokens: Var,
    pub u: Var,
    pub v: Var,
    pub e_hat: Var,
    pub q_mask: Option<Vec<bool>>,
    pub u_mask: Option<Vec<bool>>,
    pub v_mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub h: Var,
    pub c: Var,
    pub step: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct StepAttention {
    pub alpha_q: Var,
    pub alpha_u: Var,
    pub alpha_v: Var,
}

/// Concrete attention weights of one decoding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAttentionRecord {
    pub step: usize,
    pub alpha_q: Vec<f64>,
    pub alpha_u: Vec<f64>,
    pub alpha_v: Vec<f64>,
}

impl StepAttention {
    pub fn record(&self, g: &Graph, step: usize) -> StepAttentionRecord {
        StepAttentionRecord {
            step,
            alpha_q: g.value(self.alpha_q).data().to_vec(),
            alpha_u: g.value(self.alpha_u).data().to_vec(),
            alpha_v: g.value(self.alpha_v).data().to_vec(),
        }
    }
}

/// One LSTM step from `s_q` with `ê` as input gives the start state.
pub fn init_decoder_state(g: &mut Graph, p: &DecoderParams, e_hat: Var, s_q: (Var, Var)) -> Result<DecoderState> {
    if g.shape(e_hat) != (1, p.lstm.in_dim) {
        return Err(Error::Shape(format!(
            "fused vector is {:?}, decoder expects 1x{}",
            g.shape(e_hat),
            p.lstm.in_dim
        )));
    }
    if g.shape(s_q.0) != (1, p.lstm.hidden) || g.shape(s_q.1) != (1, p.lstm.hidden) {
        return Err(Error::Shape(format!(
            "question state is {:?}, decoder hidden is {}",
            g.shape(s_q.0),
            p.lstm.hidden
        )));
    }
    let (h, c) = p.lstm.step(g, e_hat, s_q.0, s_q.1);
    Ok(DecoderState { h, c, step: 0 })
}

fn all_masked(mask: &Option<Vec<bool>>) -> bool {
    mask.as_ref().is_some_and(|m| !m.iter().any(|&x| x))
}

/// Advances the decoder by one token and returns vocabulary logits.
pub fn decode_step(
    g: &mut Graph,
    p: &DecoderParams,
    state: DecoderState,
    y_prev: usize,
    ctx: &DecoderContext,
) -> Result<(DecoderState, Var, Option<StepAttention>)> {
    if y_prev >= p.vocab_size {
        return Err(Error::TokenOutOfRange {
            id: y_prev,
            size: p.vocab_size,
        });
    }
    let table = g.param(p.embedding);
    let y = g.gather(table, &[y_prev], Some(Vocabulary::PAD));
    let (h, c) = p.lstm.step(g, y, state.h, state.c);

    let (context, attn) = if p.attend {
        for (mask, what) in [(&ctx.q_mask, "question"), (&ctx.u_mask, "history"), (&ctx.v_mask, "image")] {
            if all_masked(mask) {
                return Err(Error::AllMasked(what));
            }
        }
        let (m_q, a_q) = p.att_question.forward(g, ctx.q_tokens, h, ctx.q_mask.as_deref());
        let (m_u, a_u) = p.att_history.forward(g, ctx.u, h, ctx.u_mask.as_deref());
        let (m_v, a_v) = p.att_image.forward(g, ctx.v, h, ctx.v_mask.as_deref());
        let m = g.concat_cols(&[m_q, m_u, m_v]);
        let c_lin = p.w_context.forward(g, m);
        (
            g.tanh(c_lin),
            Some(StepAttention {
                alpha_q: a_q,
                alpha_u: a_u,
                alpha_v: a_v,
            }),
        )
    } else {
        (ctx.e_hat, None)
    };
    let joint = g.concat_cols(&[h, context]);
    let logits = p.output.forward(g, joint);
    let next = DecoderState {
        h,
        c,
        step: state.step + 1,
    };
    Ok((next, logits, attn))
}

/// Teacher-forced pass over `answer + EOS` starting from BOS.
pub struct TeacherForced {
    /// Sum of per-token negative log-likelihoods (a `1 × 1` node).
    pub total_nll: Var,
    pub token_nll: Vec<Var>,
    /// Targets (answer tokens followed by EOS).
    pub targets: Vec<usize>,
    pub logits: Vec<Var>,
    pub attention: Vec<StepAttention>,
}

fn run_teacher_forced(
    g: &mut Graph,
    p: &DecoderParams,
    init: DecoderState,
    answer: &[usize],
    ctx: &DecoderContext,
) -> Result<TeacherForced> {
    let mut inputs = Vec::with_capacity(answer.len() + 1);
    inputs.push(Vocabulary::BOS);
    inputs.extend_from_slice(answer);
    let mut targets = answer.to_vec();
    targets.push(Vocabulary::EOS);

    let mut state = init;
    let mut token_nll = Vec::with_capacity(targets.len());
    let mut logits_all = Vec::with_capacity(targets.len());
    let mut attention = Vec::new();
    for (&y_prev, &target) in inputs.iter().zip(&targets) {
        let (next, logits, attn) = decode_step(g, p, state, y_prev, ctx)?;
        state = next;
        token_nll.push(g.nll(logits, target));
        logits_all.push(logits);
        attention.extend(attn);
    }
    let total_nll = g.sum_all(&token_nll);
    Ok(TeacherForced {
        total_nll,
        token_nll,
        targets,
        logits: logits_all,
        attention,
    })
}

/// Loss form used for training. PAD tokens inside `answer` are skipped.
pub fn teacher_forced_nll(
    g: &mut Graph,
    p: &DecoderParams,
    init: DecoderState,
    answer: &[usize],
    ctx: &DecoderContext,
) -> Result<TeacherForced> {
    let answer: Vec<usize> = answer.iter().copied().filter(|&t| t != Vocabulary::PAD).collect();
    if answer.is_empty() {
        return Err(Error::EmptyAnswer);
    }
    run_teacher_forced(g, p, init, &answer, ctx)
}

/// Summed log-likelihood of `candidate` followed by EOS. No length
/// normalization.
pub fn score_candidate(
    g: &mut Graph,
    p: &DecoderParams,
    init: DecoderState,
    candidate: &[usize],
    ctx: &DecoderContext,
) -> Result<f64> {
    let candidate: Vec<usize> = candidate.iter().copied().filter(|&t| t != Vocabulary::PAD).collect();
    let tf = run_teacher_forced(g, p, init, &candidate, ctx)?;
    Ok(-g.scalar(tf.total_nll))
}

/// Argmax decoding (ties → lowest id) until EOS or `max_len` tokens.
pub fn greedy_decode(
    g: &mut Graph,
    p: &DecoderParams,
    init: DecoderState,
    ctx: &DecoderContext,
    max_len: usize,
) -> Result<(Vec<usize>, Vec<StepAttention>)> {
    let mut state = init;
    let mut prev = Vocabulary::BOS;
    let mut out = Vec::new();
    let mut attention = Vec::new();
    for _ in 0..max_len {
        let (next, logits, attn) = decode_step(g, p, state, prev, ctx)?;
        state = next;
        attention.extend(attn);
        let tok = argmax(g.value(logits).data());
        if tok == Vocabulary::EOS {
            break;
        }
        out.push(tok);
        prev = tok;
    }
    Ok((out, attention))
}

/// Log-softmax of a logits row.
pub fn log_softmax(logits: &Tensor) -> Vec<f64> {
    let lse = crate::graph::log_sum_exp(logits.data());
    logits.data().iter().map(|l| l - lse).collect()
}

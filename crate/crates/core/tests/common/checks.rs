//! The measurable parts of each acceptance criterion, shared between the
//! topic test files and the acceptance runner.

use std::collections::BTreeMap;

use dmrm_core::decoder::{decode_step, AttentionHead, DecoderContext, DecoderDims, DecoderParams, DecoderState};
use dmrm_core::encoder::BiLstm;
use dmrm_core::graph::Graph;
use dmrm_core::model::{Dmrm, ModelConfig};
use dmrm_core::nn::{Linear, Mlp2};
use dmrm_core::reasoning::{
    att_enhance, dual_channel, fuse_channels, locate_step, track_step, FusionParams, LocateParams, ReasoningDims,
    ReasoningParams, TrackParams,
};
use dmrm_core::trainer::{compare_gradients, gradient_check, GroupError};
use dmrm_core::{ParamStore, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(1..=8)
}

fn even_dim(rng: &mut ChaCha8Rng) -> usize {
    2 * rng.gen_range(1..=4)
}

/// Largest oracle discrepancy per operation over `n` random instances.
pub fn oracle_errors(n: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 6];
    for _ in 0..n {
        let mut store = ParamStore::new();
        let (qd, vd, d, k, t, hd) = (dim(&mut rng), dim(&mut rng), dim(&mut rng), dim(&mut rng), dim(&mut rng), dim(&mut rng));
        let tp = TrackParams::new(&mut store, "t", qd, vd, d, &mut rng);
        let lp = LocateParams::new(&mut store, "l", qd, hd, d, &mut rng);
        let f_q = Mlp2::new(&mut store, "e.q", (qd, d, d), true, &mut rng);
        let f_rep = Mlp2::new(&mut store, "e.r", (hd, d, d), true, &mut rng);
        let (tw, lw, fw) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
        let fusion = FusionParams {
            f_query: Mlp2::new(&mut store, "f.q", (qd, d, d), true, &mut rng),
            f_track: Mlp2::new(&mut store, "f.h", (qd, d, d), true, &mut rng),
            f_locate: Mlp2::new(&mut store, "f.v", (qd, d, d), true, &mut rng),
            proj_track: Linear::new(&mut store, "f.w1", tw, tw, true, &mut rng),
            proj_locate: Linear::new(&mut store, "f.w2", lw, lw, true, &mut rng),
            joint: Linear::new(&mut store, "f.w3", tw + lw, fw, true, &mut rng),
        };
        let e = dim(&mut rng);
        let width = even_dim(&mut rng);
        let bi = BiLstm::new(&mut store, "bi", e, width, &mut rng);
        let (vocab, att, l_q) = (rng.gen_range(5..=8), dim(&mut rng), dim(&mut rng));
        let emb = store.add("emb", rand_tensor(&mut rng, vocab, e));
        let dims = DecoderDims {
            embed: e,
            hidden: width,
            feature: vd,
            attention: att,
            vocab,
        };
        let dec = DecoderParams::new(&mut store, emb, dims, true, &mut rng);
        jitter(&mut store, &mut rng, 0.3);

        let q = rand_tensor(&mut rng, 1, qd);
        let v = rand_tensor(&mut rng, k, vd);
        let u = rand_tensor(&mut rng, t, hd);

        let (out, alpha) = track_step(&store, &tp, &q, &v).unwrap();
        let (o_out, o_alpha) = track(&store, &tp, q.data(), &v);
        worst[0] = worst[0].max(max_abs_diff(out.data(), &o_out)).max(max_abs_diff(&alpha, &o_alpha));

        let (out, eta) = locate_step(&store, &lp, &q, &u).unwrap();
        let (o_out, o_eta) = locate(&store, &lp, q.data(), &u);
        worst[1] = worst[1].max(max_abs_diff(out.data(), &o_out)).max(max_abs_diff(&eta, &o_eta));

        let rep = rand_tensor(&mut rng, 1, hd);
        let mut g = Graph::new(&store);
        let (qv, rv) = (g.input(q.clone()), g.input(rep.clone()));
        let ev = att_enhance(&mut g, &f_q, &f_rep, qv, rv).unwrap();
        let o = enhance(&store, &f_q, &f_rep, q.data(), rep.data());
        worst[2] = worst[2].max(max_abs_diff(g.value(ev).data(), &o));

        let (tv, lv) = (rand_tensor(&mut rng, 1, tw), rand_tensor(&mut rng, 1, lw));
        let e_hat = fuse_channels(&store, &fusion, &tv, &lv).unwrap();
        worst[3] = worst[3].max(max_abs_diff(e_hat.data(), &fuse(&store, &fusion, tv.data(), lv.data())));

        let q_tokens = rand_tensor(&mut rng, l_q, width);
        let u_dec = rand_tensor(&mut rng, t, width);
        let e_in = rand_tensor(&mut rng, 1, e);
        let (h0, c0) = (rand_tensor(&mut rng, 1, width), rand_tensor(&mut rng, 1, width));
        let y_prev = rng.gen_range(0..vocab);
        let mut g = Graph::new(&store);
        let ctx = DecoderContext {
            q_tokens: g.input(q_tokens.clone()),
            u: g.input(u_dec.clone()),
            v: g.input(v.clone()),
            e_hat: g.input(e_in.clone()),
            q_mask: None,
            u_mask: None,
            v_mask: None,
        };
        let state = DecoderState {
            h: g.input(h0.clone()),
            c: g.input(c0.clone()),
            step: 0,
        };
        let (next, logits, _) = decode_step(&mut g, &dec, state, y_prev, &ctx).unwrap();
        let x = store.get(emb).row_slice(y_prev).to_vec();
        let (h1, c1) = lstm_step(&store, &dec.lstm, &x, h0.data(), c0.data());
        let (m_q, _) = additive_attention(&store, &dec.att_question, &q_tokens, &h1);
        let (m_u, _) = additive_attention(&store, &dec.att_history, &u_dec, &h1);
        let (m_v, _) = additive_attention(&store, &dec.att_image, &v, &h1);
        let ctx_vec: Vec<f64> = linear(&store, &dec.w_context, &[m_q, m_u, m_v].concat())
            .into_iter()
            .map(f64::tanh)
            .collect();
        let o_logits = mlp(&store, &dec.output, &[h1.clone(), ctx_vec].concat());
        worst[4] = worst[4]
            .max(max_abs_diff(g.value(logits).data(), &o_logits))
            .max(max_abs_diff(g.value(next.h).data(), &h1))
            .max(max_abs_diff(g.value(next.c).data(), &c1));

        let len = rng.gen_range(1..=8);
        let xs = rand_tensor(&mut rng, len, e);
        let mut g = Graph::new(&store);
        let xv = g.input(xs.clone());
        let enc = bi.encode(&mut g, xv, len).unwrap();
        let (o_states, o_last) = bilstm(&store, &bi.forward, &bi.backward, &xs.to_rows());
        worst[5] = worst[5]
            .max(max_abs_diff(g.value(enc.states).data(), &o_states.concat()))
            .max(max_abs_diff(g.value(enc.last).data(), &o_last));
    }
    ["track_step", "locate_step", "att_enhance", "fuse_channels", "decode_step", "encode_sequence"]
        .into_iter()
        .zip(worst)
        .collect()
}

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Absolute agreement accepted where finite differences bottom out in
/// round-off (gradients that reach the loss through several softmaxes).
pub const GRADCHECK_ABS: f64 = 1e-8;

/// Groups whose gradient is identically zero by construction: biases of a
/// score layer feeding a softmax.
pub fn structurally_zero(name: &str) -> bool {
    name.ends_with("score.b") || name.ends_with("w_h.b")
}

pub const GRADCHECK_SEEDS: [u64; 3] = [3, 4, 5];

fn finite_difference_check(
    store: &mut ParamStore,
    loss: impl Fn(&ParamStore) -> dmrm_core::Result<(f64, Option<dmrm_core::Gradients>)>,
) -> Vec<GroupError> {
    let (_, grads) = loss(store).unwrap();
    compare_gradients(store, &grads.unwrap(), GRADCHECK_EPS, |s| Ok(loss(s)?.0)).unwrap()
}

/// Shifts every bias up so ReLU units start in their active region.
fn lift_biases(store: &mut ParamStore, rng: &mut ChaCha8Rng, by: f64) {
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with(".b") {
            for x in store.get_mut(id).data_mut() {
                *x += rng.gen_range(0.0..by);
            }
        }
    }
}

fn weighted_sum(g: &mut Graph, x: dmrm_core::graph::Var, w: &Tensor) -> dmrm_core::graph::Var {
    let wv = g.input(w.clone());
    let p = g.mul(x, wv);
    g.sum_all(&[p])
}

/// Reasoning, decoder and encoder checked one at a time on random inputs.
pub fn module_gradient_checks(seed: u64) -> Vec<(&'static str, Vec<GroupError>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let dims = ReasoningDims {
        hidden: 6,
        feature: 5,
        d_track: 4,
        d_locate: 4,
        fused: 3,
    };
    let mut store = ParamStore::new();
    let p = ReasoningParams::new(&mut store, 3, dims, &mut rng).unwrap();
    jitter(&mut store, &mut rng, 0.5);
    lift_biases(&mut store, &mut rng, 0.5);
    let (q, v, u) = (rand_tensor(&mut rng, 1, 6), rand_tensor(&mut rng, 4, 5), rand_tensor(&mut rng, 3, 6));
    let w = rand_tensor(&mut rng, 1, 3);
    let report = finite_difference_check(&mut store, |s| {
        let mut g = Graph::new(s);
        let (qv, vv, uv) = (g.input(q.clone()), g.input(v.clone()), g.input(u.clone()));
        let o = dmrm_core::reasoning::run_dual_channel(&mut g, &p, qv, vv, uv, true, true)?;
        let (t, l) = p.fusion.enhance(&mut g, qv, o.track_out, o.locate_out)?;
        let e = p.fusion.fuse(&mut g, t, l);
        let total = weighted_sum(&mut g, e, &w);
        Ok((g.scalar(total), Some(g.backward(total).into_param_grads())))
    });
    out.push(("reasoning", report));

    let (embed, hidden, feature, vocab) = (4, 6, 5, 8);
    let mut store = ParamStore::new();
    let emb = store.add("embedding", rand_tensor(&mut rng, vocab, embed));
    let dims = DecoderDims {
        embed,
        hidden,
        feature,
        attention: 4,
        vocab,
    };
    let dec = DecoderParams::new(&mut store, emb, dims, true, &mut rng);
    jitter(&mut store, &mut rng, 0.5);
    let (q_tokens, u, v) = (rand_tensor(&mut rng, 3, hidden), rand_tensor(&mut rng, 3, hidden), rand_tensor(&mut rng, 4, feature));
    let (e_hat, h0, c0) = (rand_tensor(&mut rng, 1, embed), rand_tensor(&mut rng, 1, hidden), rand_tensor(&mut rng, 1, hidden));
    let answer = [4usize, 5, 6];
    let report = finite_difference_check(&mut store, |s| {
        let mut g = Graph::new(s);
        let ctx = DecoderContext {
            q_tokens: g.input(q_tokens.clone()),
            u: g.input(u.clone()),
            v: g.input(v.clone()),
            e_hat: g.input(e_hat.clone()),
            q_mask: None,
            u_mask: None,
            v_mask: None,
        };
        let s_q = (g.input(h0.clone()), g.input(c0.clone()));
        let init = dmrm_core::decoder::init_decoder_state(&mut g, &dec, ctx.e_hat, s_q)?;
        let tf = dmrm_core::decoder::teacher_forced_nll(&mut g, &dec, init, &answer, &ctx)?;
        Ok((g.scalar(tf.total_nll), Some(g.backward(tf.total_nll).into_param_grads())))
    });
    out.push(("decoder", report));

    let mut store = ParamStore::new();
    let enc = dmrm_core::encoder::Encoder::new(&mut store, 8, 4, 6, &mut rng);
    jitter(&mut store, &mut rng, 0.5);
    let w_states = rand_tensor(&mut rng, 4, 6);
    let w_last = rand_tensor(&mut rng, 1, 6);
    let report = finite_difference_check(&mut store, |s| {
        let mut g = Graph::new(s);
        let mut parts = Vec::new();
        for (lstm, ids) in [(&enc.question, [4usize, 5, 6, 7]), (&enc.history, [7, 6, 5, 4]), (&enc.answer, [5, 4, 7, 6])] {
            let e = enc.encode_ids(&mut g, lstm, &ids)?;
            parts.push(weighted_sum(&mut g, e.states, &w_states));
            parts.push(weighted_sum(&mut g, e.last, &w_last));
            parts.push(weighted_sum(&mut g, e.last_cell, &w_last));
        }
        let total = g.sum_all(&parts);
        Ok((g.scalar(total), Some(g.backward(total).into_param_grads())))
    });
    out.push(("encoder", report));
    out
}

/// A tiny model with perturbed parameters and dense random image features.
pub fn tiny_model(seed: u64, no_attd: bool) -> (Dmrm, dmrm_core::DialogInstance, Tensor) {
    let data = generate_synthetic(
        &SynthConfig {
            num_dialogs: 2,
            num_objects: 4,
            num_candidates: 5,
            ..SynthConfig::default()
        },
        None,
    )
    .unwrap();
    let c = &data.corpus;
    let mut cfg = ModelConfig::new(c.vocabulary.len(), c.feature_dim().unwrap(), 6, 8, 3);
    cfg.d_track = 6;
    cfg.d_locate = 6;
    cfg.attention_dim = 6;
    cfg.ablation.no_attd = no_attd;
    let mut model = Dmrm::new(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in model.store.ids().collect::<Vec<_>>() {
        if model.store.name(id).ends_with(".b") {
            for x in model.store.get_mut(id).data_mut() {
                *x += rng.gen_range(0.0..0.5);
            }
        }
    }
    let d = c.dialogs[0].clone();
    let mut v = c.features[&d.image_id].matrix.clone();
    for x in v.data_mut() {
        *x = rng.gen_range(-1.0..1.0);
    }
    (model, d, v)
}

pub struct GradientSuite {
    /// Worst relative error over every group of the isolated module checks.
    pub worst_module: GroupError,
    /// Module groups that never saw a non-zero gradient (structural zeros
    /// excluded).
    pub never_exercised: Vec<String>,
    pub module_groups: usize,
    /// Full-model groups failing both the relative and the absolute rule.
    pub full_model_failures: Vec<GroupError>,
    pub full_model_groups: usize,
    pub corrupted_error: f64,
}

pub fn group_passes(e: &GroupError) -> bool {
    e.rel_error < GRADCHECK_TOL || e.max_abs_error < GRADCHECK_ABS
}

pub fn gradient_suite() -> GradientSuite {
    let mut worst: Option<GroupError> = None;
    let mut seen: BTreeMap<String, bool> = BTreeMap::new();
    for seed in GRADCHECK_SEEDS {
        for (module, report) in module_gradient_checks(seed) {
            for e in report {
                let key = format!("{module}/{}", e.name);
                *seen.entry(key).or_default() |= e.numeric_norm > 0.0;
                if worst.as_ref().is_none_or(|w| e.rel_error > w.rel_error) {
                    worst = Some(e);
                }
            }
        }
    }
    let relevant = |key: &str| !structurally_zero(key.split_once('/').unwrap().1);
    let module_groups = seen.keys().filter(|k| relevant(k)).count();
    let never = seen
        .iter()
        .filter(|(k, hit)| relevant(k) && !**hit)
        .map(|(k, _)| k.clone())
        .collect();

    let mut failures = Vec::new();
    let mut full_groups = 0;
    for no_attd in [false, true] {
        let (mut model, d, v) = tiny_model(1, no_attd);
        for e in gradient_check(&mut model, &d, &v, GRADCHECK_EPS).unwrap() {
            full_groups += 1;
            if !group_passes(&e) {
                failures.push(e);
            }
        }
    }

    let (mut model, d, v) = tiny_model(1, false);
    let (_, mut grads, _, _) = model.dialog_gradients(&d, &v).unwrap();
    let target = model.store.id("dec.out.1.b").unwrap();
    grads.get_mut(target).unwrap().data_mut()[0] += 0.5;
    let shell = model.clone();
    let report = compare_gradients(&mut model.store, &grads, GRADCHECK_EPS, |s| {
        let mut g = Graph::new(s);
        let dl = shell.dialog_loss(&mut g, &d, &v)?;
        Ok(g.scalar(dl.loss))
    })
    .unwrap();
    let corrupted_error = report.iter().find(|e| e.name == "dec.out.1.b").unwrap().rel_error;

    GradientSuite {
        worst_module: worst.unwrap(),
        never_exercised: never,
        module_groups,
        full_model_failures: failures,
        full_model_groups: full_groups,
        corrupted_error,
    }
}

pub fn is_simplex(w: &[f64], tol: f64) -> bool {
    !w.is_empty() && w.iter().all(|&x| x >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= tol
}

#[derive(Debug, Default)]
pub struct SimplexSuite {
    pub draws: usize,
    pub attention_vectors: usize,
    pub worst_simplex: f64,
    pub negative_weights: usize,
    pub worst_track_equivariance: f64,
    pub worst_locate_invariance: f64,
}

/// `draws` random instances: every attention vector of the dual-channel
/// trace and of the decoder heads, plus the two permutation properties.
pub fn simplex_suite(draws: usize, seed: u64) -> SimplexSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SimplexSuite {
        draws,
        ..SimplexSuite::default()
    };
    let record = |w: &[f64], s: &mut SimplexSuite| {
        s.attention_vectors += 1;
        s.worst_simplex = s.worst_simplex.max((w.iter().sum::<f64>() - 1.0).abs());
        s.negative_weights += w.iter().filter(|&&x| x < 0.0).count();
    };
    for _ in 0..draws {
        let hidden = dim(&mut rng);
        let dims = ReasoningDims {
            hidden,
            feature: dim(&mut rng),
            d_track: dim(&mut rng),
            d_locate: dim(&mut rng),
            fused: dim(&mut rng),
        };
        let n_hops = [1, 3, 5][rng.gen_range(0..3)];
        let (k, t) = (dim(&mut rng), dim(&mut rng));
        let mut store = ParamStore::new();
        let p = ReasoningParams::new(&mut store, n_hops, dims, &mut rng).unwrap();
        let head = AttentionHead::new(&mut store, "h", dims.feature, hidden, dims.d_track, &mut rng);
        jitter(&mut store, &mut rng, 0.3);
        let scale = rng.gen_range(0.1..5.0);
        let q = rand_tensor(&mut rng, 1, hidden);
        let mut v = rand_tensor(&mut rng, k, dims.feature);
        v.scale_in_place(scale);
        let u = rand_tensor(&mut rng, t, hidden);

        let (_, _, trace) = dual_channel(&store, &p, &q, &v, &u).unwrap();
        for st in trace.channels.track.iter().chain(&trace.channels.locate) {
            record(&st.weights, &mut s);
        }
        let mut g = Graph::new(&store);
        let (vv, hv) = (g.input(v.clone()), g.input(rand_tensor(&mut rng, 1, hidden)));
        let (_, a) = head.forward(&mut g, vv, hv, None);
        record(g.value(a).data(), &mut s);

        let tp = match &p.track.steps[0] {
            dmrm_core::reasoning::Step::Track(tp) => *tp,
            _ => unreachable!("track channel starts with Track"),
        };
        let (out, alpha) = track_step(&store, &tp, &q, &v).unwrap();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let pv = Tensor::from_rows(&perm.iter().map(|&i| v.row_slice(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let (p_out, p_alpha) = track_step(&store, &tp, &q, &pv).unwrap();
        let permuted: Vec<f64> = perm.iter().map(|&i| alpha[i]).collect();
        s.worst_track_equivariance = s
            .worst_track_equivariance
            .max(max_abs_diff(&permuted, &p_alpha))
            .max(max_abs_diff(out.data(), p_out.data()));

        let lp = match &p.locate.steps[0] {
            dmrm_core::reasoning::Step::Locate(lp) => *lp,
            _ => unreachable!("locate channel starts with Locate"),
        };
        let (out, _) = locate_step(&store, &lp, &q, &u).unwrap();
        let mut perm: Vec<usize> = (1..t).collect();
        perm.shuffle(&mut rng);
        perm.insert(0, 0);
        let pu = Tensor::from_rows(&perm.iter().map(|&i| u.row_slice(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let (p_out, _) = locate_step(&store, &lp, &q, &pu).unwrap();
        s.worst_locate_invariance = s.worst_locate_invariance.max(max_abs_diff(out.data(), p_out.data()));
    }
    s
}

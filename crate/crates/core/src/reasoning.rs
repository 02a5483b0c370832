//! Track and Locate attention steps, the two multi-hop reasoning channels,
//! Att-Enhance gating and channel fusion.
//!
//! The image channel runs `Track, Locate, Track, ...` and the history channel
//! runs `Locate, Track, Locate, ...`, each step taking the previous step's
//! output as its query. Between the second and third hop the running query is
//! gated by the original question. Every hop owns its parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{LayerNorm, Linear, Mlp2};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    #[serde(rename = "T")]
    Track,
    #[serde(rename = "L")]
    Locate,
}

/// Attention over the `K` objects of an image.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrackParams {
    pub f_query: Mlp2,
    pub f_image: Mlp2,
    pub logit: Linear,
}

impl TrackParams {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, query_dim: usize, feat_dim: usize, d: usize, rng: &mut R) -> Self {
        Self {
            f_query: Mlp2::new(store, &format!("{name}.f_q"), (query_dim, d, d), true, rng),
            f_image: Mlp2::new(store, &format!("{name}.f_v"), (feat_dim, d, d), true, rng),
            logit: Linear::new(store, &format!("{name}.score"), d, 1, true, rng),
        }
    }

    /// Returns `(q_out, α)` with `q_out: 1 × V` and `α: 1 × K`.
    pub fn forward(&self, g: &mut Graph, query: Var, v: Var) -> (Var, Var) {
        let k = g.shape(v).0;
        let fq = self.f_query.forward(g, query);
        let fv = self.f_image.forward(g, v);
        let s = g.mul_row(fv, fq);
        let logits = self.logit.forward(g, s);
        let logits = g.reshape(logits, 1, k);
        let alpha = g.softmax(logits, None);
        let out = g.matmul(alpha, v);
        (out, alpha)
    }
}

/// Attention over the `T` history rounds with a caption residual.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LocateParams {
    pub f_query: Mlp2,
    pub f_history: Mlp2,
    pub logit: Linear,
    pub post: Mlp2,
    pub norm: LayerNorm,
}

impl LocateParams {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, query_dim: usize, hist_dim: usize, d: usize, rng: &mut R) -> Self {
        Self {
            f_query: Mlp2::new(store, &format!("{name}.f_q"), (query_dim, d, d), true, rng),
            f_history: Mlp2::new(store, &format!("{name}.f_u"), (hist_dim, d, d), true, rng),
            logit: Linear::new(store, &format!("{name}.score"), d, 1, true, rng),
            post: Mlp2::new(store, &format!("{name}.g"), (hist_dim, hist_dim, hist_dim), false, rng),
            norm: LayerNorm::new(store, &format!("{name}.ln"), hist_dim),
        }
    }

    /// Returns `(q_out, η)` with `q_out: 1 × D` and `η: 1 × T`.
    pub fn forward(&self, g: &mut Graph, query: Var, u: Var) -> (Var, Var) {
        let t = g.shape(u).0;
        let fq = self.f_query.forward(g, query);
        let fu = self.f_history.forward(g, u);
        let z = g.mul_row(fu, fq);
        let logits = self.logit.forward(g, z);
        let logits = g.reshape(logits, 1, t);
        let eta = g.softmax(logits, None);
        let attended = g.matmul(eta, u);
        let gated = self.post.forward(g, attended);
        let caption = g.row(u, 0);
        let residual = g.add(gated, caption);
        (self.norm.forward(g, residual), eta)
    }
}

/// Hadamard gating `f_q(q) ∘ f_rep(rep)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttEnhance {
    pub f_query: Mlp2,
    pub f_rep: Mlp2,
}

impl AttEnhance {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, q_dim: usize, rep_dim: usize, out: usize, rng: &mut R) -> Self {
        Self {
            f_query: Mlp2::new(store, &format!("{name}.f_q"), (q_dim, out, out), true, rng),
            f_rep: Mlp2::new(store, &format!("{name}.f_rep"), (rep_dim, out, out), true, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, q: Var, rep: Var) -> Result<Var> {
        att_enhance(g, &self.f_query, &self.f_rep, q, rep)
    }
}

pub fn att_enhance(g: &mut Graph, f_q: &Mlp2, f_rep: &Mlp2, q: Var, rep: Var) -> Result<Var> {
    if f_q.out_dim() != f_rep.out_dim() {
        return Err(Error::Shape(format!(
            "att-enhance perceptrons output {} and {} wide",
            f_q.out_dim(),
            f_rep.out_dim()
        )));
    }
    let a = f_q.forward(g, q);
    let b = f_rep.forward(g, rep);
    Ok(g.mul(a, b))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FusionParams {
    /// `f^q_att`, shared by both channel enhancements.
    pub f_query: Mlp2,
    /// `f^h_att`, applied to the image-channel output.
    pub f_track: Mlp2,
    /// `f^v_att`, applied to the history-channel output.
    pub f_locate: Mlp2,
    pub proj_track: Linear,
    pub proj_locate: Linear,
    pub joint: Linear,
}

impl FusionParams {
    pub fn enhance(&self, g: &mut Graph, q: Var, track_out: Option<Var>, locate_out: Option<Var>) -> Result<(Option<Var>, Option<Var>)> {
        let t = track_out
            .map(|x| att_enhance(g, &self.f_query, &self.f_track, q, x))
            .transpose()?;
        let l = locate_out
            .map(|x| att_enhance(g, &self.f_query, &self.f_locate, q, x))
            .transpose()?;
        Ok((t, l))
    }

    /// `ê = tanh(W3 [W1 q̂_track + b1, W2 q̂_locate + b2] + b3)`. A missing
    /// channel contributes zeros to its half of the concatenation.
    pub fn fuse(&self, g: &mut Graph, track: Option<Var>, locate: Option<Var>) -> Var {
        let half_t = match track {
            Some(x) => self.proj_track.forward(g, x),
            None => g.input(Tensor::zeros(1, self.proj_track.out_dim)),
        };
        let half_l = match locate {
            Some(x) => self.proj_locate.forward(g, x),
            None => g.input(Tensor::zeros(1, self.proj_locate.out_dim)),
        };
        let e = g.concat_cols(&[half_t, half_l]);
        let joint = self.joint.forward(g, e);
        g.tanh(joint)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum Step {
    Track(TrackParams),
    Locate(LocateParams),
}

impl Step {
    pub fn kind(&self) -> StepKind {
        match self {
            Step::Track(_) => StepKind::Track,
            Step::Locate(_) => StepKind::Locate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Track,
    Locate,
}

impl Channel {
    fn first(self) -> StepKind {
        match self {
            Channel::Track => StepKind::Track,
            Channel::Locate => StepKind::Locate,
        }
    }

    /// Step kind at 0-based hop `i`.
    pub fn kind_at(self, i: usize) -> StepKind {
        match (self.first(), i % 2) {
            (k, 0) => k,
            (StepKind::Track, _) => StepKind::Locate,
            (StepKind::Locate, _) => StepKind::Track,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelParams {
    pub channel: Channel,
    pub steps: Vec<Step>,
    /// Gating applied to the hop-2 output before hop 3 (present when
    /// `n_hops ≥ 3`).
    pub inter_hop: Option<AttEnhance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningDims {
    /// Width of `q`, `u` rows and every Locate output.
    pub hidden: usize,
    /// Width of object features (and every Track output).
    pub feature: usize,
    pub d_track: usize,
    pub d_locate: usize,
    /// Width of `ê`.
    pub fused: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasoningParams {
    pub n_hops: usize,
    pub track: ChannelParams,
    pub locate: ChannelParams,
    pub fusion: FusionParams,
    pub dims: ReasoningDims,
}

pub fn check_hops(n_hops: usize) -> Result<()> {
    if n_hops == 0 || n_hops % 2 == 0 {
        return Err(Error::EvenHops(n_hops));
    }
    Ok(())
}

impl ChannelParams {
    fn new<R: Rng>(store: &mut ParamStore, channel: Channel, n_hops: usize, dims: &ReasoningDims, rng: &mut R) -> Self {
        let prefix = match channel {
            Channel::Track => "reason.track",
            Channel::Locate => "reason.locate",
        };
        let mut steps = Vec::with_capacity(n_hops);
        let mut inter_hop = None;
        let mut in_dim = dims.hidden;
        for i in 0..n_hops {
            if i == 2 {
                inter_hop = Some(AttEnhance::new(
                    store,
                    &format!("{prefix}.enhance"),
                    dims.hidden,
                    in_dim,
                    dims.hidden,
                    rng,
                ));
                in_dim = dims.hidden;
            }
            let name = format!("{prefix}.hop{}", i + 1);
            let step = match channel.kind_at(i) {
                StepKind::Track => {
                    let s = TrackParams::new(store, &name, in_dim, dims.feature, dims.d_track, rng);
                    in_dim = dims.feature;
                    Step::Track(s)
                }
                StepKind::Locate => {
                    let s = LocateParams::new(store, &name, in_dim, dims.hidden, dims.d_locate, rng);
                    in_dim = dims.hidden;
                    Step::Locate(s)
                }
            };
            steps.push(step);
        }
        Self {
            channel,
            steps,
            inter_hop,
        }
    }

    pub fn out_dim(&self, dims: &ReasoningDims) -> usize {
        match self.steps.last().map(Step::kind) {
            Some(StepKind::Track) => dims.feature,
            _ => dims.hidden,
        }
    }

    /// Runs the pathway from `q`; returns the final output and one
    /// `(kind, attention)` pair per hop.
    pub fn run(&self, g: &mut Graph, q: Var, v: Var, u: Var) -> Result<(Var, Vec<(StepKind, Var)>)> {
        let mut query = q;
        let mut attn = Vec::with_capacity(self.steps.len());
        for (i, step) in self.steps.iter().enumerate() {
            if i == 2 {
                let enhance = self.inter_hop.as_ref().expect("inter-hop gating for n >= 3");
                query = enhance.forward(g, q, query)?;
            }
            let (out, weights) = match step {
                Step::Track(p) => p.forward(g, query, v),
                Step::Locate(p) => p.forward(g, query, u),
            };
            attn.push((step.kind(), weights));
            query = out;
        }
        Ok((query, attn))
    }
}

impl ReasoningParams {
    pub fn new<R: Rng>(store: &mut ParamStore, n_hops: usize, dims: ReasoningDims, rng: &mut R) -> Result<Self> {
        check_hops(n_hops)?;
        let track = ChannelParams::new(store, Channel::Track, n_hops, &dims, rng);
        let locate = ChannelParams::new(store, Channel::Locate, n_hops, &dims, rng);
        let h = dims.hidden;
        let fusion = FusionParams {
            f_query: Mlp2::new(store, "fuse.f_q", (h, h, h), true, rng),
            f_track: Mlp2::new(store, "fuse.f_h", (track.out_dim(&dims), h, h), true, rng),
            f_locate: Mlp2::new(store, "fuse.f_v", (locate.out_dim(&dims), h, h), true, rng),
            proj_track: Linear::new(store, "fuse.w1", h, h, true, rng),
            proj_locate: Linear::new(store, "fuse.w2", h, h, true, rng),
            joint: Linear::new(store, "fuse.w3", 2 * h, dims.fused, true, rng),
        };
        Ok(Self {
            n_hops,
            track,
            locate,
            fusion,
            dims,
        })
    }
}

/// Graph nodes produced by [`run_dual_channel`].
#[derive(Debug, Clone)]
pub struct DualChannelOutput {
    pub track_out: Option<Var>,
    pub locate_out: Option<Var>,
    pub track_attn: Vec<(StepKind, Var)>,
    pub locate_attn: Vec<(StepKind, Var)>,
}

/// Runs the enabled channels from the question `q`.
pub fn run_dual_channel(
    g: &mut Graph,
    p: &ReasoningParams,
    q: Var,
    v: Var,
    u: Var,
    use_track: bool,
    use_locate: bool,
) -> Result<DualChannelOutput> {
    check_hops(p.n_hops)?;
    let mut out = DualChannelOutput {
        track_out: None,
        locate_out: None,
        track_attn: Vec::new(),
        locate_attn: Vec::new(),
    };
    if use_track {
        let (o, a) = p.track.run(g, q, v, u)?;
        out.track_out = Some(o);
        out.track_attn = a;
    }
    if use_locate {
        let (o, a) = p.locate.run(g, q, v, u)?;
        out.locate_out = Some(o);
        out.locate_attn = a;
    }
    Ok(out)
}

/// One recorded attention vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub kind: StepKind,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceChannels {
    pub track: Vec<TraceStep>,
    pub locate: Vec<TraceStep>,
}

/// Per-hop attention of both channels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub channels: TraceChannels,
}

impl ReasoningTrace {
    pub fn from_output(g: &Graph, out: &DualChannelOutput) -> Self {
        let collect = |steps: &[(StepKind, Var)]| {
            steps
                .iter()
                .map(|(kind, w)| TraceStep {
                    kind: *kind,
                    weights: g.value(*w).data().to_vec(),
                })
                .collect()
        };
        Self {
            channels: TraceChannels {
                track: collect(&out.track_attn),
                locate: collect(&out.locate_attn),
            },
        }
    }
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_owned()))
    }
}

/// Standalone Track step over concrete values.
pub fn track_step(store: &ParamStore, p: &TrackParams, query: &Tensor, v: &Tensor) -> Result<(Tensor, Vec<f64>)> {
    check_finite(query, "track query")?;
    check_finite(v, "image features")?;
    if query.cols() != p.f_query.in_dim() || v.cols() != p.f_image.in_dim() {
        return Err(Error::Shape("track step input widths".into()));
    }
    if v.rows() == 0 {
        return Err(Error::Shape("track step needs K >= 1".into()));
    }
    let mut g = Graph::new(store);
    let (q, v) = (g.input(query.clone()), g.input(v.clone()));
    let (out, alpha) = p.forward(&mut g, q, v);
    Ok((g.value(out).clone(), g.value(alpha).data().to_vec()))
}

/// Standalone Locate step over concrete values; row 0 of `u` is the caption.
pub fn locate_step(store: &ParamStore, p: &LocateParams, query: &Tensor, u: &Tensor) -> Result<(Tensor, Vec<f64>)> {
    check_finite(query, "locate query")?;
    check_finite(u, "history features")?;
    if query.cols() != p.f_query.in_dim() || u.cols() != p.f_history.in_dim() {
        return Err(Error::Shape("locate step input widths".into()));
    }
    if u.rows() == 0 {
        return Err(Error::Shape("locate step needs T >= 1".into()));
    }
    let mut g = Graph::new(store);
    let (q, u) = (g.input(query.clone()), g.input(u.clone()));
    let (out, eta) = p.forward(&mut g, q, u);
    Ok((g.value(out).clone(), g.value(eta).data().to_vec()))
}

/// Standalone dual-channel pass: `(q^n_track, q^n_locate, trace)`.
pub fn dual_channel(store: &ParamStore, p: &ReasoningParams, q: &Tensor, v: &Tensor, u: &Tensor) -> Result<(Tensor, Tensor, ReasoningTrace)> {
    check_hops(p.n_hops)?;
    let mut g = Graph::new(store);
    let (q, v, u) = (g.input(q.clone()), g.input(v.clone()), g.input(u.clone()));
    let out = run_dual_channel(&mut g, p, q, v, u, true, true)?;
    let trace = ReasoningTrace::from_output(&g, &out);
    Ok((
        g.value(out.track_out.unwrap()).clone(),
        g.value(out.locate_out.unwrap()).clone(),
        trace,
    ))
}

/// Standalone fusion over already-enhanced channel vectors.
pub fn fuse_channels(store: &ParamStore, p: &FusionParams, track: &Tensor, locate: &Tensor) -> Result<Tensor> {
    if track.cols() != p.proj_track.in_dim || locate.cols() != p.proj_locate.in_dim {
        return Err(Error::Shape("fusion input widths".into()));
    }
    let mut g = Graph::new(store);
    let (t, l) = (g.input(track.clone()), g.input(locate.clone()));
    let e = p.fuse(&mut g, Some(t), Some(l));
    Ok(g.value(e).clone())
}

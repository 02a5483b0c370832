//! The assembled dual-channel model: encoders → reasoning → fusion → decoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DialogInstance;
use crate::decoder::{
    greedy_decode, init_decoder_state, score_candidate, teacher_forced_nll, DecoderContext,
    DecoderDims, DecoderParams, DecoderState, StepAttentionRecord,
};
use crate::encoder::{EncodedState, Encoder};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{Gradients, ParamStore};
use crate::reasoning::{
    check_hops, run_dual_channel, DualChannelOutput, ReasoningDims, ReasoningParams,
    ReasoningTrace,
};
use crate::tensor::{argmax, Tensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Drop the image-first channel; only the history-first channel feeds fusion.
    pub no_track: bool,
    /// Drop the history-first channel.
    pub no_locate: bool,
    /// Replace decoder attention with `c_t = ê`.
    pub no_attd: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Width `D` of every bidirectional encoder output and of the decoder.
    pub hidden: usize,
    pub feature_dim: usize,
    pub d_track: usize,
    pub d_locate: usize,
    pub attention_dim: usize,
    pub n_hops: usize,
    pub ablation: Ablation,
}

impl ModelConfig {
    /// Desk-scale defaults with `d_track = d_locate = D`.
    pub fn new(vocab_size: usize, feature_dim: usize, embed_dim: usize, hidden: usize, n_hops: usize) -> Self {
        Self {
            vocab_size,
            embed_dim,
            hidden,
            feature_dim,
            d_track: hidden,
            d_locate: hidden,
            attention_dim: hidden,
            n_hops,
            ablation: Ablation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_hops(self.n_hops)?;
        if self.ablation.no_track && self.ablation.no_locate {
            return Err(Error::Config("cannot drop both reasoning channels".into()));
        }
        if self.hidden == 0 || self.hidden % 2 != 0 {
            return Err(Error::Config(format!(
                "hidden width must be a positive even number (got {})",
                self.hidden
            )));
        }
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("feature_dim", self.feature_dim),
            ("d_track", self.d_track),
            ("d_locate", self.d_locate),
            ("attention_dim", self.attention_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dmrm {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub reasoning: ReasoningParams,
    pub decoder: DecoderParams,
}

/// Everything the decoder needs for one round, as graph nodes.
pub struct RoundForward {
    pub encoded: EncodedState,
    pub reasoning: DualChannelOutput,
    pub e_hat: Var,
    pub context: DecoderContext,
    pub init: DecoderState,
}

/// Scalar loss and token statistics of one dialog.
#[derive(Debug, Clone)]
pub struct DialogLoss {
    /// Mean over rounds of the per-token mean NLL.
    pub loss: Var,
    pub tokens: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub channels: crate::reasoning::TraceChannels,
    pub decoder: Vec<StepAttentionRecord>,
}

impl Dmrm {
    /// Fresh parameters drawn deterministically from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, config.vocab_size, config.embed_dim, config.hidden, &mut rng);
        let reasoning = ReasoningParams::new(
            &mut store,
            config.n_hops,
            ReasoningDims {
                hidden: config.hidden,
                feature: config.feature_dim,
                d_track: config.d_track,
                d_locate: config.d_locate,
                fused: config.embed_dim,
            },
            &mut rng,
        )?;
        let decoder = DecoderParams::new(
            &mut store,
            encoder.embedding,
            DecoderDims {
                embed: config.embed_dim,
                hidden: config.hidden,
                feature: config.feature_dim,
                attention: config.attention_dim,
                vocab: config.vocab_size,
            },
            !config.ablation.no_attd,
            &mut rng,
        );
        Ok(Self {
            config,
            store,
            encoder,
            reasoning,
            decoder,
        })
    }

    pub fn graph(&self) -> Graph<'_> {
        Graph::new(&self.store)
    }

    fn check_features(&self, v: &Tensor) -> Result<()> {
        if v.cols() != self.config.feature_dim {
            return Err(Error::Shape(format!(
                "image features are {} wide, model expects {}",
                v.cols(),
                self.config.feature_dim
            )));
        }
        Ok(())
    }

    /// Encodes round `round` (0-based) and runs reasoning and fusion. The
    /// history is the caption plus every earlier round, taken from
    /// `history_rows` (one `1 × D` node per row, caption first).
    pub fn forward_round(
        &self,
        g: &mut Graph,
        dialog: &DialogInstance,
        round: usize,
        history_rows: &[Var],
        v: Var,
    ) -> Result<RoundForward> {
        let r = dialog
            .rounds
            .get(round)
            .ok_or_else(|| Error::Invalid(format!("round {} out of range", round + 1)))?;
        let question = self.encoder.encode_question(g, &r.question_ids)?;
        let u = g.concat_rows(&history_rows[..=round]);
        let encoded = EncodedState {
            q: question.last,
            q_tokens: question.states,
            s_q: (question.last, question.last_cell),
            u,
            v,
        };
        let ab = self.config.ablation;
        let reasoning = run_dual_channel(g, &self.reasoning, encoded.q, v, u, !ab.no_track, !ab.no_locate)?;
        let (t_hat, l_hat) = self
            .reasoning
            .fusion
            .enhance(g, encoded.q, reasoning.track_out, reasoning.locate_out)?;
        let e_hat = self.reasoning.fusion.fuse(g, t_hat, l_hat);
        let context = DecoderContext {
            q_tokens: encoded.q_tokens,
            u,
            v,
            e_hat,
            q_mask: None,
            u_mask: None,
            v_mask: None,
        };
        let init = init_decoder_state(g, &self.decoder, e_hat, encoded.s_q)?;
        Ok(RoundForward {
            encoded,
            reasoning,
            e_hat,
            context,
            init,
        })
    }

    fn prepare(&self, g: &mut Graph, dialog: &DialogInstance, upto: usize, v: &Tensor) -> Result<(Vec<Var>, Var)> {
        self.check_features(v)?;
        let rows = self.encoder.history_rows(g, dialog, upto)?;
        let v = g.input(v.clone());
        Ok((rows, v))
    }

    /// Teacher-forced loss over every round of a dialog.
    pub fn dialog_loss(&self, g: &mut Graph, dialog: &DialogInstance, v: &Tensor) -> Result<DialogLoss> {
        let n_rounds = dialog.rounds.len();
        if n_rounds == 0 {
            return Err(Error::Invalid(format!("dialog {} has no rounds", dialog.image_id)));
        }
        let (rows, v) = self.prepare(g, dialog, n_rounds, v)?;
        let mut round_losses = Vec::with_capacity(n_rounds);
        let (mut tokens, mut correct) = (0, 0);
        for (i, r) in dialog.rounds.iter().enumerate() {
            let fwd = self.forward_round(g, dialog, i, &rows, v)?;
            let tf = teacher_forced_nll(g, &self.decoder, fwd.init, &r.answer_ids, &fwd.context)?;
            let n = tf.targets.len();
            tokens += n;
            correct += tf
                .logits
                .iter()
                .zip(&tf.targets)
                .filter(|(l, t)| argmax(g.value(**l).data()) == **t)
                .count();
            round_losses.push(g.scale(tf.total_nll, 1.0 / (n as f64 * n_rounds as f64)));
        }
        let loss = g.sum_all(&round_losses);
        Ok(DialogLoss {
            loss,
            tokens,
            correct,
        })
    }

    /// Loss value, parameter gradients and token counts for one dialog.
    pub fn dialog_gradients(&self, dialog: &DialogInstance, v: &Tensor) -> Result<(f64, Gradients, usize, usize)> {
        let mut g = self.graph();
        let dl = self.dialog_loss(&mut g, dialog, v)?;
        let loss = g.scalar(dl.loss);
        let grads = g.backward(dl.loss).into_param_grads();
        Ok((loss, grads, dl.tokens, dl.correct))
    }

    /// Summed log-likelihood of every candidate of round `round`, using the
    /// ground-truth history.
    pub fn score_round(&self, dialog: &DialogInstance, round: usize, v: &Tensor) -> Result<Vec<f64>> {
        let r = dialog.rounds.get(round).ok_or_else(|| {
            Error::Invalid(format!("dialog {}: round {} out of range", dialog.image_id, round + 1))
        })?;
        if r.candidate_ids.is_empty() {
            return Err(Error::Invalid(format!(
                "dialog {} round {}: no candidates",
                dialog.image_id,
                round + 1
            )));
        }
        let mut g = self.graph();
        let (rows, v) = self.prepare(&mut g, dialog, round + 1, v)?;
        let fwd = self.forward_round(&mut g, dialog, round, &rows, v)?;
        r.candidate_ids
            .iter()
            .map(|c| score_candidate(&mut g, &self.decoder, fwd.init, c, &fwd.context))
            .collect()
    }

    /// Scores every round of a dialog in one graph.
    pub fn score_dialog(&self, dialog: &DialogInstance, v: &Tensor) -> Result<Vec<Vec<f64>>> {
        let mut g = self.graph();
        let (rows, v) = self.prepare(&mut g, dialog, dialog.rounds.len(), v)?;
        let mut out = Vec::with_capacity(dialog.rounds.len());
        for (i, r) in dialog.rounds.iter().enumerate() {
            if r.candidate_ids.is_empty() {
                return Err(Error::Invalid(format!(
                    "dialog {} round {}: no candidates",
                    dialog.image_id,
                    i + 1
                )));
            }
            let fwd = self.forward_round(&mut g, dialog, i, &rows, v)?;
            let scores = r
                .candidate_ids
                .iter()
                .map(|c| score_candidate(&mut g, &self.decoder, fwd.init, c, &fwd.context))
                .collect::<Result<Vec<_>>>()?;
            out.push(scores);
        }
        Ok(out)
    }

    /// Greedy answer for a round, with the reasoning and decoder attention.
    pub fn trace_round(&self, dialog: &DialogInstance, round: usize, v: &Tensor, max_len: usize) -> Result<(Vec<usize>, RoundTrace)> {
        if round >= dialog.rounds.len() {
            return Err(Error::Invalid(format!(
                "round {} out of range for dialog {} with {} rounds",
                round + 1,
                dialog.image_id,
                dialog.rounds.len()
            )));
        }
        let mut g = self.graph();
        let (rows, v) = self.prepare(&mut g, dialog, round + 1, v)?;
        let fwd = self.forward_round(&mut g, dialog, round, &rows, v)?;
        let (ids, attn) = greedy_decode(&mut g, &self.decoder, fwd.init, &fwd.context, max_len)?;
        let trace = ReasoningTrace::from_output(&g, &fwd.reasoning);
        Ok((
            ids,
            RoundTrace {
                channels: trace.channels,
                decoder: attn.iter().enumerate().map(|(i, a)| a.record(&g, i + 1)).collect(),
            },
        ))
    }

    /// Greedy decoding of a round's answer.
    pub fn greedy_answer(&self, dialog: &DialogInstance, round: usize, v: &Tensor, max_len: usize) -> Result<Vec<usize>> {
        self.trace_round(dialog, round, v, max_len).map(|(ids, _)| ids)
    }
}

//! Word embeddings and the three bidirectional LSTM encoders (question,
//! history, answer). All three share the embedding table.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DialogInstance, ImageFeatures, Vocabulary};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::Lstm;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

/// Output of a bidirectional pass over one sequence.
#[derive(Debug, Clone, Copy)]
pub struct SequenceEncoding {
    /// `L × D` per-token states `[fwd_j, bwd_j]`; rows at or past `length`
    /// are zero.
    pub states: Var,
    /// `[fwd_{length-1}, bwd_0]`, width `D`.
    pub last: Var,
    /// Cell states at the same positions as `last`.
    pub last_cell: Var,
}

impl BiLstm {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, width: usize, rng: &mut R) -> Self {
        assert!(width % 2 == 0, "bidirectional width must be even");
        Self {
            forward: Lstm::new(store, &format!("{name}.fwd"), in_dim, width / 2, rng),
            backward: Lstm::new(store, &format!("{name}.bwd"), in_dim, width / 2, rng),
        }
    }

    pub fn width(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }

    /// Runs the forward direction over rows `0..length` and the backward
    /// direction over `length-1..=0`. Rows past `length` are never read.
    pub fn encode(&self, g: &mut Graph, embeddings: Var, length: usize) -> Result<SequenceEncoding> {
        let (rows, cols) = g.shape(embeddings);
        if length == 0 {
            return Err(Error::EmptySequence);
        }
        if length > rows {
            return Err(Error::Shape(format!("length {length} exceeds {rows} embedding rows")));
        }
        if cols != self.forward.in_dim {
            return Err(Error::Shape(format!(
                "embedding width {cols} vs encoder input {}",
                self.forward.in_dim
            )));
        }
        let half = self.forward.hidden;
        let xs: Vec<Var> = (0..length).map(|j| g.row(embeddings, j)).collect();

        let zero = g.input(Tensor::zeros(1, half));
        let (mut h, mut c) = (zero, zero);
        let mut fwd = Vec::with_capacity(length);
        for &x in &xs {
            (h, c) = self.forward.step(g, x, h, c);
            fwd.push((h, c));
        }
        let (mut h, mut c) = (zero, zero);
        let mut bwd = vec![(zero, zero); length];
        for j in (0..length).rev() {
            (h, c) = self.backward.step(g, xs[j], h, c);
            bwd[j] = (h, c);
        }

        let mut state_rows: Vec<Var> = (0..length)
            .map(|j| g.concat_cols(&[fwd[j].0, bwd[j].0]))
            .collect();
        if rows > length {
            state_rows.push(g.input(Tensor::zeros(rows - length, 2 * half)));
        }
        let states = g.concat_rows(&state_rows);
        let last = g.concat_cols(&[fwd[length - 1].0, bwd[0].0]);
        let last_cell = g.concat_cols(&[fwd[length - 1].1, bwd[0].1]);
        Ok(SequenceEncoding {
            states,
            last,
            last_cell,
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Encoder {
    pub embedding: ParamId,
    pub question: BiLstm,
    pub history: BiLstm,
    pub answer: BiLstm,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub width: usize,
}

/// Encoded inputs for one round.
#[derive(Debug, Clone, Copy)]
pub struct EncodedState {
    /// Question summary `q`, `1 × D`.
    pub q: Var,
    /// Per-token question states, `L × D`.
    pub q_tokens: Var,
    /// Final question hidden/cell state (`s_q`).
    pub s_q: (Var, Var),
    /// History features, `T × D`; row 0 is the caption.
    pub u: Var,
    /// Image features, `K × V`.
    pub v: Var,
}

impl Encoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        vocab_size: usize,
        embed_dim: usize,
        width: usize,
        rng: &mut R,
    ) -> Self {
        let mut table = Tensor::zeros(vocab_size, embed_dim);
        let bound = 1.0 / (embed_dim as f64).sqrt();
        for r in 1..vocab_size {
            for x in table.row_slice_mut(r) {
                *x = rng.gen_range(-bound..bound);
            }
        }
        let embedding = store.add("embedding", table);
        Self {
            embedding,
            question: BiLstm::new(store, "enc.question", embed_dim, width, rng),
            history: BiLstm::new(store, "enc.history", embed_dim, width, rng),
            answer: BiLstm::new(store, "enc.answer", embed_dim, width, rng),
            vocab_size,
            embed_dim,
            width,
        }
    }

    /// `L × E` embedding rows. The PAD row is frozen at zero.
    pub fn embed(&self, g: &mut Graph, ids: &[usize]) -> Result<Var> {
        if let Some(&id) = ids.iter().find(|&&i| i >= self.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                size: self.vocab_size,
            });
        }
        let table = g.param(self.embedding);
        Ok(g.gather(table, ids, Some(Vocabulary::PAD)))
    }

    /// Embeds and encodes a token sequence; an empty sequence is read as a
    /// single PAD step so that every round still yields a feature row.
    pub fn encode_ids(&self, g: &mut Graph, lstm: &BiLstm, ids: &[usize]) -> Result<SequenceEncoding> {
        let pad = [Vocabulary::PAD];
        let ids = if ids.is_empty() { &pad[..] } else { ids };
        let emb = self.embed(g, ids)?;
        lstm.encode(g, emb, ids.len())
    }

    /// History rows for every prefix of `dialog`: row 0 encodes the caption
    /// and row `i ≥ 1` encodes `question_i ⊕ answer_i`. Returns one `1 × D`
    /// node per row so callers can stack any prefix.
    pub fn history_rows(&self, g: &mut Graph, dialog: &DialogInstance, upto: usize) -> Result<Vec<Var>> {
        let mut rows = Vec::with_capacity(upto);
        rows.push(self.encode_ids(g, &self.history, &dialog.caption_ids)?.last);
        for r in dialog.rounds.iter().take(upto.saturating_sub(1)) {
            let mut ids = r.question_ids.clone();
            ids.extend_from_slice(&r.answer_ids);
            rows.push(self.encode_ids(g, &self.history, &ids)?.last);
        }
        Ok(rows)
    }

    /// `u` for round `t` (1-based): `t` rows, caption first.
    pub fn encode_history(&self, g: &mut Graph, dialog: &DialogInstance, t: usize) -> Result<Var> {
        if t == 0 {
            return Err(Error::Invalid("history is defined for rounds t >= 1".into()));
        }
        if t > dialog.rounds.len() + 1 {
            return Err(Error::Invalid(format!(
                "round {t} beyond the {} rounds of the dialog",
                dialog.rounds.len()
            )));
        }
        let rows = self.history_rows(g, dialog, t)?;
        Ok(g.concat_rows(&rows))
    }

    pub fn encode_question(&self, g: &mut Graph, ids: &[usize]) -> Result<SequenceEncoding> {
        self.encode_ids(g, &self.question, ids)
    }

    pub fn encode_answer(&self, g: &mut Graph, ids: &[usize]) -> Result<SequenceEncoding> {
        self.encode_ids(g, &self.answer, ids)
    }

    /// Overwrites embedding rows with vectors from a whitespace-separated
    /// text file (`token x1 .. xE` per line). Returns the number of rows set.
    pub fn load_pretrained(
        &self,
        store: &mut ParamStore,
        vocab: &Vocabulary,
        path: &Path,
    ) -> Result<usize> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table = store.get_mut(self.embedding);
        let mut set = 0;
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Invalid(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            if values.len() != self.embed_dim {
                return Err(Error::Shape(format!(
                    "{}:{}: {} values for embedding width {}",
                    path.display(),
                    lineno + 1,
                    values.len(),
                    self.embed_dim
                )));
            }
            if let Some(id) = vocab.id(token) {
                if id != Vocabulary::PAD {
                    table.row_slice_mut(id).copy_from_slice(&values);
                    set += 1;
                }
            }
        }
        Ok(set)
    }
}

/// The stored feature matrix for `image_id`, unmodified.
pub fn load_image_features<'c>(corpus: &'c Corpus, image_id: &str) -> Result<&'c ImageFeatures> {
    corpus.image_features(image_id)
}

//! Mini-batch training with Adam, a warm-up/decay schedule, global-norm
//! clipping and deterministic seeding.

mod adam;
mod checkpoint;
mod gradcheck;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{clip_global_norm, Adam, BETA1, BETA2, EPSILON};
pub use checkpoint::{Checkpoint, Manifest, CHECKPOINT_MAGIC, CONTAINER_VERSION, SCHEMA_VERSION};
pub use gradcheck::{compare_gradients, gradient_check, GroupError, ABS_FLOOR};

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::model::{Ablation, Dmrm, ModelConfig};
use crate::params::Gradients;
use crate::reasoning::check_hops;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: usize,
    /// Number of optimizer steps; batches cycle through reshuffled epochs.
    pub total_steps: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub n_hops: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub d_track: usize,
    pub d_locate: usize,
    pub ablation: Ablation,
    /// Emit a checkpoint event every this many steps (0 disables).
    pub checkpoint_every: usize,
    /// Stop at the end of an epoch once its running token accuracy reaches
    /// this value.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            min_lr: 1e-5,
            warmup_steps: 40,
            total_steps: 800,
            batch_size: 16,
            clip_norm: 5.0,
            seed: 7,
            n_hops: 3,
            embed_dim: 64,
            hidden: 64,
            d_track: 64,
            d_locate: 64,
            ablation: Ablation::default(),
            checkpoint_every: 0,
            target_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_hops(self.n_hops)?;
        if !(self.min_lr <= self.base_lr) || self.min_lr < 0.0 {
            return Err(Error::Config(format!(
                "need 0 <= min_lr <= base_lr (got {} and {})",
                self.min_lr, self.base_lr
            )));
        }
        if self.total_steps == 0 || self.warmup_steps >= self.total_steps {
            return Err(Error::Config(format!(
                "need warmup_steps < total_steps (got {} and {})",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    /// Sets `total_steps` to cover `epochs` passes over `num_dialogs`.
    pub fn with_epochs(mut self, num_dialogs: usize, epochs: usize) -> Self {
        self.total_steps = epochs * num_dialogs.div_ceil(self.batch_size.max(1));
        self
    }

    pub fn model_config(&self, vocab_size: usize, feature_dim: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            feature_dim,
            d_track: self.d_track,
            d_locate: self.d_locate,
            attention_dim: self.hidden,
            n_hops: self.n_hops,
            ablation: self.ablation,
        }
    }
}

/// Linear ramp from `min_lr` to `base_lr` over the warm-up, then linear
/// decay back to `min_lr` at `total_steps`. Later steps stay at `min_lr`.
pub fn lr_schedule(cfg: &TrainConfig, step: usize) -> f64 {
    let (lo, hi) = (cfg.min_lr, cfg.base_lr);
    if step >= cfg.total_steps {
        return lo;
    }
    if step < cfg.warmup_steps {
        return lo + (hi - lo) * step as f64 / cfg.warmup_steps as f64;
    }
    if step == cfg.warmup_steps {
        return hi;
    }
    let span = (cfg.total_steps - cfg.warmup_steps) as f64;
    hi - (hi - lo) * (step - cfg.warmup_steps) as f64 / span
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// What the observer sees after every optimizer step.
#[derive(Debug, Clone, Copy)]
pub struct StepEvent {
    pub record: LogRecord,
    pub epoch: usize,
    pub grad_norm: f64,
    /// True when `checkpoint_every` divides this step.
    pub checkpoint_due: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRecord>,
    pub epochs: usize,
    /// Teacher-forced token accuracy accumulated over the last epoch.
    pub last_epoch_accuracy: f64,
}

pub fn train(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(corpus, cfg, |_, _| Ok(()))
}

/// Trains a fresh model; `observer` runs after each step and may persist
/// checkpoints when `checkpoint_due` is set.
pub fn train_with_observer(
    corpus: &Corpus,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&StepEvent, &Dmrm) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.split != Split::Train {
        return Err(Error::Config(format!("training needs a train split, got {:?}", corpus.split)));
    }
    if corpus.dialogs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus.validate()?;
    let feature_dim = corpus.feature_dim().ok_or(Error::EmptyCorpus)?;
    let mut model = Dmrm::new(cfg.model_config(corpus.vocabulary.len(), feature_dim), cfg.seed)?;
    let features = corpus
        .dialogs
        .iter()
        .map(|d| corpus.image_features(&d.image_id).map(|f| &f.matrix))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut adam = Adam::new(model.store.len());
    let mut log = Vec::with_capacity(cfg.total_steps);
    let mut order: Vec<usize> = (0..corpus.dialogs.len()).collect();
    let mut step = 0;
    let mut epoch = 0;
    let mut last_epoch_accuracy = 0.0;
    'epochs: while step < cfg.total_steps {
        epoch += 1;
        order.shuffle(&mut rng);
        let (mut tokens, mut correct) = (0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            if step >= cfg.total_steps {
                break 'epochs;
            }
            step += 1;
            let results = batch
                .par_iter()
                .map(|&i| model.dialog_gradients(&corpus.dialogs[i], features[i]))
                .collect::<Vec<_>>();
            let mut grads = Gradients::empty(model.store.len());
            let mut loss = 0.0;
            for r in results {
                let (l, g, t, c) = r?;
                loss += l;
                grads.accumulate(&g);
                tokens += t;
                correct += c;
            }
            let scale = 1.0 / batch.len() as f64;
            loss *= scale;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    batch: batch
                        .iter()
                        .map(|&i| corpus.dialogs[i].image_id.as_str())
                        .collect::<Vec<_>>()
                        .join(","),
                    loss,
                });
            }
            grads.scale(scale);
            let grad_norm = clip_global_norm(&mut grads, cfg.clip_norm);
            let lr = lr_schedule(cfg, step);
            adam.update(&mut model.store, &grads, lr);
            let record = LogRecord { step, loss, lr };
            log.push(record);
            let event = StepEvent {
                record,
                epoch,
                grad_norm,
                checkpoint_due: cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0,
            };
            observer(&event, &model)?;
        }
        last_epoch_accuracy = correct as f64 / tokens.max(1) as f64;
        if cfg.target_accuracy.is_some_and(|t| last_epoch_accuracy >= t) {
            break;
        }
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(model, cfg.clone(), &corpus.vocabulary, step),
        log,
        epochs: epoch,
        last_epoch_accuracy,
    })
}

/// Teacher-forced token accuracy and mean dialog loss over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenAccuracy {
    pub accuracy: f64,
    pub tokens: usize,
    pub mean_loss: f64,
}

pub fn token_accuracy(model: &Dmrm, corpus: &Corpus) -> Result<TokenAccuracy> {
    let per_dialog = corpus
        .dialogs
        .par_iter()
        .map(|d| {
            let v = &corpus.image_features(&d.image_id)?.matrix;
            let mut g = model.graph();
            let dl = model.dialog_loss(&mut g, d, v)?;
            Ok((g.scalar(dl.loss), dl.tokens, dl.correct))
        })
        .collect::<Result<Vec<_>>>()?;
    if per_dialog.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (loss, tokens, correct) = per_dialog
        .iter()
        .fold((0.0, 0, 0), |(l, t, c), x| (l + x.0, t + x.1, c + x.2));
    Ok(TokenAccuracy {
        accuracy: correct as f64 / tokens.max(1) as f64,
        tokens,
        mean_loss: loss / per_dialog.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(warmup: usize, total: usize) -> TrainConfig {
        TrainConfig {
            warmup_steps: warmup,
            total_steps: total,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_endpoints() {
        let c = cfg(100, 1000);
        assert_eq!(lr_schedule(&c, 100), 1e-3);
        assert_eq!(lr_schedule(&c, 1000), 1e-5);
        assert_eq!(lr_schedule(&c, 5000), 1e-5);
        assert_eq!(lr_schedule(&c, 0), 1e-5);
        assert!((lr_schedule(&c, 50) - (1e-5 + 1e-3) / 2.0).abs() < 1e-18);
        assert!((lr_schedule(&c, 550) - (1e-5 + 1e-3) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_even_hops() {
        let c = TrainConfig {
            n_hops: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::EvenHops(2))));
    }

    #[test]
    fn rejects_bad_schedule() {
        assert!(cfg(10, 10).validate().is_err());
        let c = TrainConfig {
            min_lr: 1e-2,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn epochs_to_steps() {
        let c = TrainConfig::default().with_epochs(50, 200);
        assert_eq!(c.total_steps, 800);
    }
}

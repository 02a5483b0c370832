//! Dual-channel multi-hop reasoning for visual dialog: text encoders, image
//! and history attention, an attentive LSTM decoder, training and
//! candidate-ranking evaluation on a small reverse-mode autodiff core.

pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod graph;
pub mod model;
pub mod nn;
pub mod params;
pub mod reasoning;
pub mod tensor;
pub mod trainer;

pub use corpus::{Corpus, DialogInstance, Round, RoundKind, Split, SynthConfig, Vocabulary};
pub use error::{Error, Result};
pub use evaluator::{compute_metrics, evaluate_corpus, rank_of_gt, Evaluation, MetricsReport, Variant};
pub use model::{Ablation, Dmrm, ModelConfig, RoundTrace};
pub use params::{Gradients, ParamId, ParamStore};
pub use reasoning::{ReasoningTrace, StepKind};
pub use tensor::Tensor;
pub use trainer::{lr_schedule, train, Checkpoint, TrainConfig};

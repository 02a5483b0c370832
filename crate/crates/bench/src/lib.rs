//! Fixtures shared by the benchmarks.

use dmrm_core::corpus::{generate_synthetic, SynthConfig, SyntheticData};
use dmrm_core::trainer::TrainConfig;

/// A synthetic corpus with the default scene shape.
pub fn corpus(num_dialogs: usize) -> SyntheticData {
    generate_synthetic(
        &SynthConfig {
            num_dialogs,
            ..SynthConfig::default()
        },
        None,
    )
    .expect("default synthetic config is valid")
}

/// Default widths, with one optimizer step per call.
pub fn one_step(batch_size: usize) -> TrainConfig {
    TrainConfig {
        batch_size,
        warmup_steps: 0,
        total_steps: 1,
        ..TrainConfig::default()
    }
}

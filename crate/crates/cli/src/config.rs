//! Training configuration: built-in defaults, then a TOML file, then flags.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::Deserialize;

use dmrm_core::TrainConfig;

pub const DEFAULT_SEED: u64 = 7;
pub const SEED_ENV: &str = "DMRM_SEED";

/// Training settings read from a TOML file. Keys mirror the long flags with
/// `_` in place of `-`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub min_lr: Option<f64>,
    pub warmup: Option<usize>,
    pub batch_size: Option<usize>,
    pub clip: Option<f64>,
    pub hops: Option<usize>,
    pub embed_dim: Option<usize>,
    pub hidden: Option<usize>,
    pub d_track: Option<usize>,
    pub d_locate: Option<usize>,
    #[serde(default)]
    pub no_track: bool,
    #[serde(default)]
    pub no_locate: bool,
    #[serde(default)]
    pub no_attd: bool,
    pub target_accuracy: Option<f64>,
    pub checkpoint_every: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }
}

/// Training flags; every field is optional so file values can fill gaps.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainArgs {
    /// Read defaults from a key=value file (flags win)
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Random seed [default: $DMRM_SEED or 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Passes over the training corpus; sets the step budget [default: 200]
    #[arg(long, conflicts_with = "steps")]
    pub epochs: Option<usize>,
    /// Optimizer steps (overrides --epochs)
    #[arg(long)]
    pub steps: Option<usize>,
    /// Peak learning rate [default: 1e-3]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning rate at both ends of the schedule [default: 1e-5]
    #[arg(long)]
    pub min_lr: Option<f64>,
    /// Warm-up steps [default: 5% of the step budget]
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Dialogs per batch [default: 16]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Global gradient-norm cap [default: 5.0]
    #[arg(long)]
    pub clip: Option<f64>,
    /// Reasoning hops, must be odd [default: 3]
    #[arg(long)]
    pub hops: Option<usize>,
    /// Word embedding width [default: 64]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Encoder and decoder width, even [default: 64]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Track perceptron width [default: hidden]
    #[arg(long)]
    pub d_track: Option<usize>,
    /// Locate perceptron width [default: hidden]
    #[arg(long)]
    pub d_locate: Option<usize>,
    /// Drop the image-first reasoning channel
    #[arg(long)]
    pub no_track: bool,
    /// Drop the history-first reasoning channel
    #[arg(long)]
    pub no_locate: bool,
    /// Replace decoder attention by the fused encoder vector
    #[arg(long)]
    pub no_attd: bool,
    /// Stop after an epoch whose token accuracy reaches this value
    #[arg(long)]
    pub target_accuracy: Option<f64>,
}

pub const DEFAULT_EPOCHS: usize = 200;

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| anyhow!("{SEED_ENV}={s:?}: {e}")),
        Err(_) => Ok(None),
    }
}

/// Seed precedence: flag, then config file, then `DMRM_SEED`, then 7.
pub fn resolve_seed(flag: Option<u64>, file: &ConfigFile) -> Result<u64> {
    Ok(match flag {
        Some(s) => s,
        None => match file.seed {
            Some(s) => s,
            None => env_seed()?.unwrap_or(DEFAULT_SEED),
        },
    })
}

impl TrainArgs {
    /// Layers defaults, then the config file, then flags.
    pub fn resolve(&self, num_dialogs: usize, checkpoint_every: Option<usize>) -> Result<TrainConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let mut cfg = TrainConfig {
            seed: resolve_seed(self.seed, &file)?,
            ..TrainConfig::default()
        };
        let f = &file;
        cfg.base_lr = self.lr.or(f.lr).unwrap_or(cfg.base_lr);
        cfg.min_lr = self.min_lr.or(f.min_lr).unwrap_or(cfg.min_lr);
        cfg.batch_size = self.batch_size.or(f.batch_size).unwrap_or(cfg.batch_size);
        cfg.clip_norm = self.clip.or(f.clip).unwrap_or(cfg.clip_norm);
        cfg.n_hops = self.hops.or(f.hops).unwrap_or(cfg.n_hops);
        cfg.embed_dim = self.embed_dim.or(f.embed_dim).unwrap_or(cfg.embed_dim);
        cfg.hidden = self.hidden.or(f.hidden).unwrap_or(cfg.hidden);
        cfg.d_track = self.d_track.or(f.d_track).unwrap_or(cfg.hidden);
        cfg.d_locate = self.d_locate.or(f.d_locate).unwrap_or(cfg.hidden);
        cfg.ablation.no_track = self.no_track || f.no_track;
        cfg.ablation.no_locate = self.no_locate || f.no_locate;
        cfg.ablation.no_attd = self.no_attd || f.no_attd;
        cfg.target_accuracy = self.target_accuracy.or(f.target_accuracy);
        cfg.checkpoint_every = checkpoint_every.or(f.checkpoint_every).unwrap_or(0);

        let steps = match self.steps.or(f.steps) {
            Some(s) => s,
            None => {
                let epochs = self.epochs.or(f.epochs).unwrap_or(DEFAULT_EPOCHS);
                cfg.clone().with_epochs(num_dialogs, epochs).total_steps
            }
        };
        cfg.total_steps = steps;
        cfg.warmup_steps = self.warmup.or(f.warmup).unwrap_or(steps / 20);
        cfg.validate()?;
        Ok(cfg)
    }
}

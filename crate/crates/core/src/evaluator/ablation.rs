use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{evaluate_corpus, MetricsReport};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::trainer::{train, TrainConfig};

/// Model variants of the ablation table. `Hops(n)` runs `n` reasoning hops
/// without decoder attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Hops(usize),
    NoTrack,
    NoLocate,
    NoAttd,
    Full,
}

impl Variant {
    pub const TABLE: [Variant; 7] = [
        Variant::Hops(1),
        Variant::Hops(2),
        Variant::Hops(3),
        Variant::NoTrack,
        Variant::NoLocate,
        Variant::NoAttd,
        Variant::Full,
    ];

    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Hops(n) => {
                cfg.n_hops = n;
                cfg.ablation.no_attd = true;
            }
            Variant::NoTrack => cfg.ablation.no_track = true,
            Variant::NoLocate => cfg.ablation.no_locate = true,
            Variant::NoAttd => cfg.ablation.no_attd = true,
            Variant::Full => {}
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Hops(n) => write!(f, "hops-{n}"),
            Variant::NoTrack => f.write_str("no-track"),
            Variant::NoLocate => f.write_str("no-locate"),
            Variant::NoAttd => f.write_str("no-attd"),
            Variant::Full => f.write_str("full"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-track" => Ok(Variant::NoTrack),
            "no-locate" => Ok(Variant::NoLocate),
            "no-attd" => Ok(Variant::NoAttd),
            "full" => Ok(Variant::Full),
            _ => s
                .strip_prefix("hops-")
                .and_then(|n| n.parse().ok())
                .map(Variant::Hops)
                .ok_or_else(|| Error::Config(format!("unknown ablation variant {s:?}"))),
        }
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    /// `None` when the configuration was rejected before training.
    pub report: Option<MetricsReport>,
    pub rejected: Option<String>,
}

/// Trains every variant on `train_corpus` with the shared base config and
/// evaluates it on `val_corpus`. Invalid configurations become rejected rows.
pub fn run_ablation(train_corpus: &Corpus, val_corpus: &Corpus, base: &TrainConfig, variants: &[Variant]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let cfg = variant.apply(base);
        if let Err(e) = cfg.validate().and_then(|_| cfg.model_config(1, 1).validate()) {
            rows.push(AblationRow {
                variant,
                report: None,
                rejected: Some(e.to_string()),
            });
            continue;
        }
        let outcome = train(train_corpus, &cfg)?;
        outcome.checkpoint.check_vocab(&val_corpus.vocabulary)?;
        let eval = evaluate_corpus(&outcome.checkpoint.model, val_corpus)?;
        rows.push(AblationRow {
            variant,
            report: Some(eval.report),
            rejected: None,
        });
    }
    Ok(rows)
}

/// Fixed-column text table, one row per variant in input order.
pub fn format_table(rows: &[AblationRow]) -> String {
    let mut out = format!(
        "{:<10} {:>7} {:>7} {:>7} {:>7} {:>9} {:>9} {:>9}\n",
        "variant", "mrr", "r@1", "r@5", "r@10", "mean_rank", "attr_mrr", "coref_mrr"
    );
    for row in rows {
        match (&row.report, &row.rejected) {
            (Some(m), _) => {
                let slice = |k: &str| {
                    m.slices
                        .get(k)
                        .map_or_else(|| "-".to_owned(), |s| format!("{:.4}", s.mrr))
                };
                out.push_str(&format!(
                    "{:<10} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>9.4} {:>9} {:>9}\n",
                    row.variant.to_string(),
                    m.mrr,
                    m.r_at_1,
                    m.r_at_5,
                    m.r_at_10,
                    m.mean_rank,
                    slice("attribute"),
                    slice("coreference"),
                ));
            }
            (None, reason) => out.push_str(&format!(
                "{:<10} rejected: {}\n",
                row.variant.to_string(),
                reason.as_deref().unwrap_or("unknown")
            )),
        }
    }
    out
}

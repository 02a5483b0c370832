use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::QuestionScore;
use crate::error::{Error, Result};

/// Two-sided paired t-test on per-question reciprocal ranks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Mean of `rr_a − rr_b`.
    pub mean_diff: f64,
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn read_score_dump(path: &Path) -> Result<Vec<QuestionScore>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Schema(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Pairs questions by `(dialog, round)`; both dumps must cover the same set.
pub fn paired_t_test(a: &[QuestionScore], b: &[QuestionScore]) -> Result<PairedTTest> {
    let index = |xs: &[QuestionScore]| -> Result<BTreeMap<(String, usize), f64>> {
        let mut m = BTreeMap::new();
        for q in xs {
            if q.gt_rank == 0 {
                return Err(Error::Invalid(format!("dialog {} round {}: rank 0", q.dialog, q.round)));
            }
            if m.insert((q.dialog.clone(), q.round), 1.0 / q.gt_rank as f64).is_some() {
                return Err(Error::Invalid(format!("duplicate question {} round {}", q.dialog, q.round)));
            }
        }
        Ok(m)
    };
    let (ma, mb) = (index(a)?, index(b)?);
    if ma.len() != mb.len() || ma.keys().zip(mb.keys()).any(|(x, y)| x != y) {
        return Err(Error::Invalid("score dumps cover different questions".into()));
    }
    let n = ma.len();
    if n < 2 {
        return Err(Error::Invalid("paired t-test needs at least two questions".into()));
    }
    let diffs: Vec<f64> = ma.values().zip(mb.values()).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean_diff = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (nf - 1.0);
    let se = (var / nf).sqrt();
    let df = n - 1;
    let (t, p_value) = if se == 0.0 {
        if mean_diff == 0.0 {
            (0.0, 1.0)
        } else {
            (mean_diff.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean_diff / se;
        let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Invalid(e.to_string()))?;
        (t, 2.0 * (1.0 - dist.cdf(t.abs())))
    };
    Ok(PairedTTest {
        n,
        mean_a: ma.values().sum::<f64>() / nf,
        mean_b: mb.values().sum::<f64>() / nf,
        mean_diff,
        t,
        df,
        p_value,
    })
}

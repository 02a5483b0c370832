//! Candidate-ranking evaluation: rank of the ground-truth answer, MRR,
//! recall@k and mean rank, with per-question-type slices.

mod ablation;
mod significance;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ablation::{format_table, run_ablation, AblationRow, Variant};
pub use significance::{paired_t_test, read_score_dump, PairedTTest};

use crate::corpus::{Corpus, DialogInstance};
use crate::error::{Error, Result};
use crate::model::Dmrm;
use crate::tensor::Tensor;
use crate::trainer::Checkpoint;

/// 1-based rank of `scores[gt_index]`. Equal scores at lower indices rank
/// ahead of the ground truth.
pub fn rank_of_gt(scores: &[f64], gt_index: usize) -> Result<usize> {
    if gt_index >= scores.len() {
        return Err(Error::Invalid(format!(
            "gt_index {gt_index} out of range for {} candidates",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    let gt = scores[gt_index];
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > gt || (s == gt && i < gt_index))
        .count();
    Ok(1 + ahead)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mrr: f64,
    pub r_at_1: f64,
    pub r_at_5: f64,
    pub r_at_10: f64,
    pub mean_rank: f64,
    pub num_questions: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub slices: BTreeMap<String, MetricsReport>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn compute_metrics(ranks: &[usize]) -> Result<MetricsReport> {
    if ranks.is_empty() {
        return Err(Error::NoRanks);
    }
    if ranks.contains(&0) {
        return Err(Error::Invalid("ranks are 1-based".into()));
    }
    let n = ranks.len() as f64;
    let recall = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(MetricsReport {
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        r_at_1: recall(1),
        r_at_5: recall(5),
        r_at_10: recall(10),
        mean_rank: ranks.iter().map(|&r| r as f64).sum::<f64>() / n,
        num_questions: ranks.len(),
        slices: BTreeMap::new(),
    })
}

/// Anything that can score every candidate of every round of a dialog.
pub trait CandidateScorer: Sync {
    fn score_dialog(&self, dialog: &DialogInstance, features: &Tensor) -> Result<Vec<Vec<f64>>>;
}

impl CandidateScorer for Dmrm {
    fn score_dialog(&self, dialog: &DialogInstance, features: &Tensor) -> Result<Vec<Vec<f64>>> {
        Dmrm::score_dialog(self, dialog, features)
    }
}

/// One line of the per-question score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub dialog: String,
    /// 1-based round number.
    pub round: usize,
    pub gt_rank: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Sorted by dialog id, then round.
    pub questions: Vec<QuestionScore>,
}

impl Evaluation {
    pub fn write_scores(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for q in &self.questions {
            serde_json::to_writer(&mut w, q)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn metrics_of(mut ranks: Vec<usize>) -> Result<MetricsReport> {
    ranks.sort_unstable();
    compute_metrics(&ranks)
}

/// Scores every round of every dialog with ground-truth history and
/// aggregates the ranks. The result does not depend on dialog order.
pub fn evaluate_corpus<S: CandidateScorer>(scorer: &S, corpus: &Corpus) -> Result<Evaluation> {
    let per_dialog = corpus
        .dialogs
        .par_iter()
        .map(|d| {
            for (i, r) in d.rounds.iter().enumerate() {
                if r.candidate_ids.is_empty() {
                    return Err(Error::Invalid(format!(
                        "dialog {} round {}: missing candidates",
                        d.image_id,
                        i + 1
                    )));
                }
            }
            let v = &corpus.image_features(&d.image_id)?.matrix;
            let scores = scorer.score_dialog(d, v)?;
            d.rounds
                .iter()
                .zip(scores)
                .enumerate()
                .map(|(i, (r, s))| {
                    let gt_rank = rank_of_gt(&s, r.gt_index).map_err(|e| {
                        Error::Invalid(format!("dialog {} round {}: {e}", d.image_id, i + 1))
                    })?;
                    Ok((
                        r.kind,
                        QuestionScore {
                            dialog: d.image_id.clone(),
                            round: i + 1,
                            gt_rank,
                            scores: s,
                        },
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut questions = Vec::new();
    let mut by_kind: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (kind, q) in per_dialog.into_iter().flatten() {
        if let Some(k) = kind {
            by_kind.entry(k.as_str().to_owned()).or_default().push(q.gt_rank);
        }
        questions.push(q);
    }
    questions.sort_by(|a, b| a.dialog.cmp(&b.dialog).then(a.round.cmp(&b.round)));
    let mut report = metrics_of(questions.iter().map(|q| q.gt_rank).collect())?;
    for (k, ranks) in by_kind {
        report.slices.insert(k, metrics_of(ranks)?);
    }
    Ok(Evaluation { report, questions })
}

/// Evaluates a checkpoint after checking it was trained with this vocabulary.
pub fn evaluate_checkpoint(checkpoint: &Checkpoint, corpus: &Corpus) -> Result<Evaluation> {
    checkpoint.check_vocab(&corpus.vocabulary)?;
    corpus.validate()?;
    evaluate_corpus(&checkpoint.model, corpus)
}

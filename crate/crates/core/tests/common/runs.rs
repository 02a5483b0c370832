//! Training runs behind the overfit, ablation, persistence and trace
//! criteria.

use std::time::{Duration, Instant};

use dmrm_core::corpus::{generate_synthetic, Split, SynthConfig, SyntheticData};
use dmrm_core::evaluator::{run_ablation, AblationRow};
use dmrm_core::model::{Dmrm, ModelConfig};
use dmrm_core::tensor::argmax;
use dmrm_core::trainer::{token_accuracy, train, train_with_observer, TrainConfig};
use dmrm_core::{compute_metrics, evaluate_corpus, rank_of_gt, Checkpoint, Error, RoundKind, StepKind, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{metrics_oracle, sort_rank};

pub const OVERFIT_EPOCHS: usize = 200;
pub const OVERFIT_DIALOGS: usize = 50;

pub fn overfit_config() -> TrainConfig {
    TrainConfig {
        base_lr: 3e-3,
        warmup_steps: 20,
        ..TrainConfig::default()
    }
    .with_epochs(OVERFIT_DIALOGS, OVERFIT_EPOCHS)
}

pub struct Overfit {
    pub data: SyntheticData,
    pub checkpoint: Checkpoint,
    pub epochs: usize,
    pub accuracy: f64,
    pub mrr: f64,
    pub elapsed: Duration,
}

/// 50 dialogs, 8 objects, 20 candidates, width 64, 3 hops.
pub fn overfit() -> Overfit {
    let data = generate_synthetic(
        &SynthConfig {
            num_dialogs: OVERFIT_DIALOGS,
            num_objects: 8,
            num_candidates: 20,
            ..SynthConfig::default()
        },
        None,
    )
    .unwrap();
    let start = Instant::now();
    let out = train(&data.corpus, &overfit_config()).unwrap();
    let accuracy = token_accuracy(&out.checkpoint.model, &data.corpus).unwrap().accuracy;
    let mrr = evaluate_corpus(&out.checkpoint.model, &data.corpus).unwrap().report.mrr;
    Overfit {
        data,
        epochs: out.epochs,
        checkpoint: out.checkpoint,
        accuracy,
        mrr,
        elapsed: start.elapsed(),
    }
}

/// Share of questions whose greedy answer is the ground truth.
pub fn greedy_match_rate(model: &Dmrm, data: &SyntheticData) -> f64 {
    let c = &data.corpus;
    let (mut hit, mut n) = (0, 0);
    for d in &c.dialogs {
        let v = &c.features[&d.image_id].matrix;
        for (r, round) in d.rounds.iter().enumerate() {
            let out = model.greedy_answer(d, r, v, round.answer_ids.len() + 4).unwrap();
            let gt: Vec<usize> = round.answer_ids.iter().copied().filter(|&t| t != dmrm_core::Vocabulary::PAD).collect();
            hit += usize::from(out == gt);
            n += 1;
        }
    }
    hit as f64 / n as f64
}

/// Attribute questions whose final Track hop (the last hop of the
/// Track-first channel) puts its largest weight on the
/// referent: `(hits, questions)`.
pub fn trace_fidelity(model: &Dmrm, data: &SyntheticData) -> (usize, usize) {
    let c = &data.corpus;
    let (mut hit, mut n) = (0, 0);
    for d in &c.dialogs {
        let v = &c.features[&d.image_id].matrix;
        for (r, round) in d.rounds.iter().enumerate() {
            if round.kind != Some(RoundKind::Attribute) {
                continue;
            }
            let (_, trace) = model.trace_round(d, r, v, 8).unwrap();
            let last = trace.channels.track.last().expect("at least one hop");
            hit += usize::from(Some(argmax(&last.weights)) == round.referent);
            n += 1;
        }
    }
    (hit, n)
}

pub const ABLATION_SEEDS: [u64; 5] = [7, 8, 9, 10, 11];
pub const ABLATION_VARIANTS: [Variant; 5] = [Variant::Full, Variant::NoTrack, Variant::NoLocate, Variant::Hops(3), Variant::Hops(1)];
pub const ABLATION_MARGIN: f64 = 0.02;

pub fn ablation_config(seed: u64, num_dialogs: usize) -> TrainConfig {
    TrainConfig {
        base_lr: 3e-3,
        warmup_steps: 20,
        seed,
        ..TrainConfig::default()
    }
    .with_epochs(num_dialogs, 30)
}

/// Mean over seeds of each variant's validation report, in variant order:
/// `(overall, attribute, coreference)` MRR.
pub fn ablation(train_dialogs: usize, val_dialogs: usize) -> Vec<(Variant, [f64; 3])> {
    let mut sums = vec![[0.0; 3]; ABLATION_VARIANTS.len()];
    for seed in ABLATION_SEEDS {
        let tr = generate_synthetic(
            &SynthConfig {
                num_dialogs: train_dialogs,
                seed,
                ..SynthConfig::default()
            },
            None,
        )
        .unwrap();
        let val = generate_synthetic(
            &SynthConfig {
                num_dialogs: val_dialogs,
                seed: seed + 1000,
                split: Split::Val,
                ..SynthConfig::default()
            },
            Some(&tr.corpus.vocabulary),
        )
        .unwrap();
        let rows: Vec<AblationRow> =
            run_ablation(&tr.corpus, &val.corpus, &ablation_config(seed, train_dialogs), &ABLATION_VARIANTS).unwrap();
        for (sum, row) in sums.iter_mut().zip(rows) {
            let m = row.report.expect("every ablation variant is valid");
            sum[0] += m.mrr;
            sum[1] += m.slices["attribute"].mrr;
            sum[2] += m.slices["coreference"].mrr;
        }
    }
    let n = ABLATION_SEEDS.len() as f64;
    ABLATION_VARIANTS
        .iter()
        .zip(sums)
        .map(|(&v, s)| (v, s.map(|x| x / n)))
        .collect()
}

pub struct Persistence {
    pub steps_compared: usize,
    pub first_divergence: Option<usize>,
    pub checkpoint_identical: bool,
}

pub fn persistence(dir: &std::path::Path) -> Persistence {
    let data = super::synth(24, 5);
    let cfg = TrainConfig {
        batch_size: 4,
        warmup_steps: 10,
        total_steps: 50,
        embed_dim: 16,
        hidden: 16,
        d_track: 16,
        d_locate: 16,
        ..TrainConfig::default()
    };
    let run = || train_with_observer(&data.corpus, &cfg, |_, _| Ok(())).unwrap();
    let (a, b) = (run(), run());
    let first_divergence = a
        .log
        .iter()
        .zip(&b.log)
        .position(|(x, y)| x.loss.to_bits() != y.loss.to_bits() || x.lr.to_bits() != y.lr.to_bits());

    let path = dir.join("model.ckpt");
    a.checkpoint.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let before = evaluate_corpus(&a.checkpoint.model, &data.corpus).unwrap();
    let after = evaluate_corpus(&loaded.model, &data.corpus).unwrap();
    let bits = |e: &dmrm_core::Evaluation| {
        e.questions
            .iter()
            .flat_map(|q| q.scores.iter().map(|s| s.to_bits()))
            .collect::<Vec<_>>()
    };
    Persistence {
        steps_compared: a.log.len().min(b.log.len()),
        first_divergence,
        checkpoint_identical: before.report == after.report && bits(&before) == bits(&after),
    }
}

pub struct MetricOracle {
    pub score_sets: usize,
    pub rank_mismatches: usize,
    pub metrics_equal: bool,
    pub fixed_example_mrr: f64,
}

pub fn metric_oracle(n: usize, seed: u64) -> MetricOracle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ranks, mut mismatches) = (Vec::with_capacity(n), 0);
    for _ in 0..n {
        let len = rng.gen_range(1..=100);
        // Coarse grid so ties are common.
        let scores: Vec<f64> = (0..len).map(|_| f64::from(rng.gen_range(-5..5)) * 0.5).collect();
        let gt = rng.gen_range(0..len);
        let r = rank_of_gt(&scores, gt).unwrap();
        mismatches += usize::from(r != sort_rank(&scores, gt));
        ranks.push(r);
    }
    let m = compute_metrics(&ranks).unwrap();
    let (mrr, r1, r5, r10, mean) = metrics_oracle(&ranks);
    MetricOracle {
        score_sets: n,
        rank_mismatches: mismatches,
        metrics_equal: (m.mrr, m.r_at_1, m.r_at_5, m.r_at_10, m.mean_rank) == (mrr, r1, r5, r10, mean),
        fixed_example_mrr: compute_metrics(&[1, 2, 4]).unwrap().mrr,
    }
}

pub struct HopCheck {
    pub even_rejected: bool,
    pub odd_alternate: bool,
}

pub fn hop_check() -> HopCheck {
    let even_rejected = [2, 4].into_iter().all(|n| {
        let model = Dmrm::new(ModelConfig::new(40, 22, 8, 8, n), 1);
        let train = TrainConfig {
            n_hops: n,
            ..TrainConfig::default()
        };
        matches!(&model, Err(Error::EvenHops(m)) if *m == n)
            && model.unwrap_err().to_string().contains("reasoning valid only for odd hop counts")
            && train.validate().is_err()
    });
    let data = super::synth(1, 3);
    let c = &data.corpus;
    let d = &c.dialogs[0];
    let v = &c.features[&d.image_id].matrix;
    let odd_alternate = [1, 3, 5].into_iter().all(|n| {
        let model = Dmrm::new(ModelConfig::new(c.vocabulary.len(), 22, 8, 8, n), 1).unwrap();
        let (_, trace) = model.trace_round(d, 2, v, 4).unwrap();
        let pattern = |steps: &[dmrm_core::reasoning::TraceStep], first: StepKind, other: StepKind| {
            steps.len() == n
                && steps.iter().enumerate().all(|(i, s)| {
                    let want = if i % 2 == 0 { first } else { other };
                    let width = if want == StepKind::Track { v.rows() } else { 3 };
                    s.kind == want && s.weights.len() == width
                })
        };
        pattern(&trace.channels.track, StepKind::Track, StepKind::Locate)
            && pattern(&trace.channels.locate, StepKind::Locate, StepKind::Track)
    });
    HopCheck {
        even_rejected,
        odd_alternate,
    }
}

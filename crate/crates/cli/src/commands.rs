use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use dmrm_core::corpus::{
    build_vocabulary, generate_synthetic, load_dataset, write_features, Corpus, DatasetFile,
    SynthConfig, Vocabulary, VOCAB_FILE,
};
use dmrm_core::evaluator::{
    evaluate_checkpoint, format_table, paired_t_test, read_score_dump, run_ablation, Variant,
};
use dmrm_core::trainer::{train_with_observer, Checkpoint};
use dmrm_core::{Split, StepKind};

use crate::config::{resolve_seed, ConfigFile};
use crate::manifest::RunManifest;
use crate::plot;
use crate::{AblateArgs, CompareArgs, EvalArgs, PreprocessArgs, SynthArgs, TraceArgs, TrainCmd};

pub const DATASET_FILE: &str = "dataset.json";
pub const FEATURES_DIR: &str = "features";

fn dataset_path(dir: &Path) -> PathBuf {
    dir.join(DATASET_FILE)
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    load_dataset(&dataset_path(dir), &dir.join(FEATURES_DIR))
        .with_context(|| format!("loading corpus {}", dir.display()))
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            bail!("output directory {} is not empty (use --force to overwrite)", dir.display());
        }
        if non_empty {
            std::fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parse_split(s: &str) -> Split {
    match s {
        "val" => Split::Val,
        "test" => Split::Test,
        _ => Split::Train,
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let seed = resolve_seed(a.seed, &ConfigFile::default())?;
    let config = SynthConfig {
        num_dialogs: a.num_dialogs,
        rounds_per_dialog: a.rounds,
        num_objects: a.objects as usize,
        num_candidates: a.candidates,
        seed,
        split: parse_split(&a.split),
        min_count: a.min_count,
        ..SynthConfig::default()
    };
    let vocab = a.vocab.as_deref().map(Vocabulary::load).transpose()?;
    let data = generate_synthetic(&config, vocab.as_ref())?;
    prepare_out_dir(&a.out, a.force)?;
    let features = a.out.join(FEATURES_DIR);
    std::fs::create_dir_all(&features)?;
    data.file.write(&dataset_path(&a.out))?;
    data.corpus.vocabulary.save(&a.out.join(VOCAB_FILE))?;
    for f in data.corpus.features.values() {
        write_features(&features, f)?;
    }
    write_json(&a.out.join("scenes.json"), &data.scenes)?;
    println!(
        "wrote {} dialogs, {} rounds, vocabulary {} to {}",
        data.corpus.dialogs.len(),
        data.file.num_rounds(),
        data.corpus.vocabulary.len(),
        a.out.display()
    );
    let mut m = RunManifest::new("synth", &config, Some(seed))?.output("corpus", &a.out);
    if let Some(v) = &a.vocab {
        m = m.input("vocab", v);
    }
    m.write(&a.out)?;
    Ok(())
}

pub fn preprocess(a: PreprocessArgs) -> Result<()> {
    let file = DatasetFile::read(&a.dataset)?;
    file.check()?;
    let vocab = match &a.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => build_vocabulary(file.token_streams(), a.min_count)?,
    };
    prepare_out_dir(&a.out, a.force)?;
    let out_dataset = dataset_path(&a.out);
    file.write(&out_dataset)?;
    vocab.save(&a.out.join(VOCAB_FILE))?;
    let features = a.out.join(FEATURES_DIR);
    std::fs::create_dir_all(&features)?;
    let corpus = dmrm_core::corpus::load_dataset_with_vocab(&out_dataset, &a.features, vocab)?;
    for f in corpus.features.values() {
        write_features(&features, f)?;
    }
    let summary = json!({
        "dialogs": corpus.dialogs.len(),
        "rounds": corpus.num_rounds(),
        "vocab_size": corpus.vocabulary.len(),
        "objects": corpus.num_objects(),
        "feature_dim": corpus.feature_dim(),
    });
    println!("{summary}");
    RunManifest::new("preprocess", json!({ "min_count": a.min_count }), None)?
        .input("dataset", &a.dataset)
        .input("features", &a.features)
        .output("corpus", &a.out)
        .write(&a.out)?;
    Ok(())
}

fn step_path(out: &Path, step: usize) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".step{step}"));
    out.with_file_name(name)
}

pub fn train(a: TrainCmd) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let cfg = a.train.resolve(corpus.dialogs.len(), a.checkpoint_every)?;
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut name = a.out.file_name().unwrap_or_default().to_os_string();
        name.push(".log.jsonl");
        a.out.with_file_name(name)
    });
    let mut log = std::io::BufWriter::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .with_context(|| format!("opening {}", log_path.display()))?,
    );
    let vocab = corpus.vocabulary.clone();
    let mut snapshots = Vec::new();
    let outcome = train_with_observer(&corpus, &cfg, |ev, model| {
        serde_json::to_writer(&mut log, &ev.record)?;
        log.write_all(b"\n").map_err(|e| dmrm_core::Error::Invalid(e.to_string()))?;
        if ev.checkpoint_due {
            let path = step_path(&a.out, ev.record.step);
            Checkpoint::new(model.clone(), cfg.clone(), &vocab, ev.record.step).save(&path)?;
            snapshots.push(path);
        }
        Ok(())
    })?;
    log.flush()?;
    outcome.checkpoint.save(&a.out)?;
    let last = outcome.log.last();
    println!(
        "{}",
        json!({
            "steps": outcome.checkpoint.manifest.step,
            "epochs": outcome.epochs,
            "final_loss": last.map(|r| r.loss),
            "token_accuracy": outcome.last_epoch_accuracy,
            "checkpoint": a.out,
        })
    );
    let mut m = RunManifest::new("train", &cfg, Some(cfg.seed))?
        .input("corpus", &a.corpus)
        .output("checkpoint", &a.out)
        .output("log", &log_path);
    for (i, p) in snapshots.iter().enumerate() {
        m = m.output(&format!("snapshot{i}"), p);
    }
    m.write(&a.out)?;
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let corpus = load_corpus(&a.corpus)?;
    let eval = evaluate_checkpoint(&ckpt, &corpus)?;
    let r = &eval.report;
    println!("mrr {:.4}", r.mrr);
    println!("r@1 {:.4}", r.r_at_1);
    println!("r@5 {:.4}", r.r_at_5);
    println!("r@10 {:.4}", r.r_at_10);
    println!("mean_rank {:.4}", r.mean_rank);
    println!("questions {}", r.num_questions);
    for (k, s) in &r.slices {
        println!("{k}.mrr {:.4}", s.mrr);
    }
    let out = a.out.clone().unwrap_or_else(|| {
        let mut name = a.ckpt.file_name().unwrap_or_default().to_os_string();
        name.push(".eval.json");
        a.ckpt.with_file_name(name)
    });
    std::fs::write(&out, r.to_json()? + "\n").with_context(|| format!("writing {}", out.display()))?;
    let mut m = RunManifest::new("eval", json!({}), None)?
        .input("checkpoint", &a.ckpt)
        .input("corpus", &a.corpus)
        .output("report", &out);
    if let Some(p) = &a.scores {
        eval.write_scores(p)?;
        m = m.output("scores", p);
    }
    m.write(&out)?;
    Ok(())
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let variants = a
        .variants
        .iter()
        .map(|s| s.trim().parse::<Variant>())
        .collect::<dmrm_core::Result<Vec<_>>>()?;
    let train_corpus = load_corpus(&a.train_corpus)?;
    let val_corpus = load_corpus(&a.val_corpus)?;
    let base = a.train.resolve(train_corpus.dialogs.len(), None)?;
    let rows = run_ablation(&train_corpus, &val_corpus, &base, &variants)?;
    print!("{}", format_table(&rows));
    write_json(&a.out, &rows)?;
    RunManifest::new("ablate", &base, Some(base.seed))?
        .input("train_corpus", &a.train_corpus)
        .input("val_corpus", &a.val_corpus)
        .output("table", &a.out)
        .write(&a.out)?;
    Ok(())
}

fn kind_name(k: StepKind) -> &'static str {
    match k {
        StepKind::Track => "track",
        StepKind::Locate => "locate",
    }
}

pub fn trace(a: TraceArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let corpus = load_corpus(&a.corpus)?;
    ckpt.check_vocab(&corpus.vocabulary)?;
    let dialog = corpus
        .dialogs
        .iter()
        .find(|d| d.image_id == a.dialog)
        .or_else(|| a.dialog.parse::<usize>().ok().and_then(|i| corpus.dialogs.get(i)))
        .with_context(|| format!("no dialog {:?} in corpus", a.dialog))?;
    if a.round == 0 || a.round > dialog.rounds.len() {
        bail!(
            "round {} out of range for dialog {} with {} rounds",
            a.round,
            dialog.image_id,
            dialog.rounds.len()
        );
    }
    let v = &corpus.image_features(&dialog.image_id)?.matrix;
    let (ids, trace) = ckpt.model.trace_round(dialog, a.round - 1, v, a.max_len)?;
    let round = &dialog.rounds[a.round - 1];
    let vocab = &corpus.vocabulary;
    let doc = json!({
        "dialog": dialog.image_id,
        "round": a.round,
        "question": vocab.decode(&round.question_ids),
        "answer": vocab.decode(&ids),
        "channels": trace.channels,
        "decoder": trace.decoder,
    });
    write_json(&a.out, &doc)?;
    let mut m = RunManifest::new("trace", json!({ "dialog": dialog.image_id, "round": a.round, "max_len": a.max_len }), None)?
        .input("checkpoint", &a.ckpt)
        .input("corpus", &a.corpus)
        .output("trace", &a.out);
    if let Some(dir) = &a.plot {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (channel, steps) in [("track", &trace.channels.track), ("locate", &trace.channels.locate)] {
            for (i, st) in steps.iter().enumerate() {
                let labels: Vec<String> = match st.kind {
                    StepKind::Track => (0..st.weights.len()).map(|k| format!("o{k}")).collect(),
                    StepKind::Locate => (0..st.weights.len())
                        .map(|t| if t == 0 { "cap".into() } else { format!("r{t}") })
                        .collect(),
                };
                let title = format!("{channel} channel, hop {} ({})", i + 1, kind_name(st.kind));
                let path = dir.join(format!("{channel}_hop{}.svg", i + 1));
                std::fs::write(&path, plot::bar_chart(&title, &labels, &st.weights))?;
            }
        }
        if !trace.decoder.is_empty() {
            let answer: Vec<String> = ids
                .iter()
                .map(|&t| vocab.token(t).unwrap_or("?").to_owned())
                .chain(std::iter::once("<eos>".to_owned()))
                .collect();
            let question: Vec<String> = round
                .question_ids
                .iter()
                .map(|&t| vocab.token(t).unwrap_or("?").to_owned())
                .collect();
            let maps: [(&str, Vec<String>, Vec<Vec<f64>>); 3] = [
                ("question", question, trace.decoder.iter().map(|s| s.alpha_q.clone()).collect()),
                (
                    "history",
                    (0..=a.round - 1).map(|t| if t == 0 { "cap".into() } else { format!("r{t}") }).collect(),
                    trace.decoder.iter().map(|s| s.alpha_u.clone()).collect(),
                ),
                (
                    "image",
                    (0..v.rows()).map(|k| format!("o{k}")).collect(),
                    trace.decoder.iter().map(|s| s.alpha_v.clone()).collect(),
                ),
            ];
            for (name, cols, rows) in maps {
                let path = dir.join(format!("decoder_{name}.svg"));
                let title = format!("decoder attention over {name}");
                std::fs::write(&path, plot::heatmap(&title, &answer, &cols, &rows))?;
            }
        }
        m = m.output("plots", dir);
    }
    println!("{}", a.out.display());
    m.write(&a.out)?;
    Ok(())
}

pub fn compare_scores(a: CompareArgs) -> Result<()> {
    let (sa, sb) = (read_score_dump(&a.a)?, read_score_dump(&a.b)?);
    let t = paired_t_test(&sa, &sb)?;
    println!(
        "n {} mrr_a {:.4} mrr_b {:.4} t {:.4} df {} p {:.4e}",
        t.n, t.mean_a, t.mean_b, t.t, t.df, t.p_value
    );
    write_json(&a.out, &t)?;
    RunManifest::new("compare-scores", json!({}), None)?
        .input("a", &a.a)
        .input("b", &a.b)
        .output("result", &a.out)
        .write(&a.out)?;
    Ok(())
}

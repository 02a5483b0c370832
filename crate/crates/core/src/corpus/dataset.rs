//! Dataset JSON schema and loading.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{read_features, write_features};
use super::text::{preprocess, tokenize_and_truncate, Role};
use super::vocab::{build_vocabulary, Vocabulary};
use super::{Corpus, DialogInstance, Round, RoundKind, Split};
use crate::error::{Error, Result};

pub const DATASET_VERSION: &str = "1.0";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const DEFAULT_MIN_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    /// When present, every round must carry exactly this many candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_candidates: Option<usize>,
    pub dialogs: Vec<DialogRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogRecord {
    pub image_id: String,
    pub caption: String,
    pub rounds: Vec<RoundRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub question: String,
    pub answer: String,
    pub candidates: Vec<String>,
    pub gt_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<RoundKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub referent: Option<usize>,
}

impl DatasetFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: DatasetFile = serde_json::from_str(&text)?;
        file.check()?;
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn num_rounds(&self) -> usize {
        self.dialogs.iter().map(|d| d.rounds.len()).sum()
    }

    /// Structural checks that do not need a vocabulary.
    pub fn check(&self) -> Result<()> {
        if self.version != DATASET_VERSION {
            return Err(Error::Schema(format!(
                "unsupported dataset version {:?}",
                self.version
            )));
        }
        for (di, d) in self.dialogs.iter().enumerate() {
            if d.rounds.is_empty() {
                return Err(Error::Schema(format!("dialog {di} ({}) has no rounds", d.image_id)));
            }
            for (ri, r) in d.rounds.iter().enumerate() {
                let at = || format!("dialog {di} ({}) round {}", d.image_id, ri + 1);
                if let Some(n) = self.num_candidates {
                    if r.candidates.len() != n {
                        return Err(Error::Schema(format!(
                            "{}: expected {n} candidates, found {}",
                            at(),
                            r.candidates.len()
                        )));
                    }
                }
                if r.gt_index >= r.candidates.len() {
                    return Err(Error::Schema(format!(
                        "{}: gt_index {} out of range for {} candidates",
                        at(),
                        r.gt_index,
                        r.candidates.len()
                    )));
                }
                if r.candidates[r.gt_index] != r.answer {
                    return Err(Error::Schema(format!(
                        "{}: candidate at gt_index differs from the answer",
                        at()
                    )));
                }
                let dupes = r.candidates.iter().filter(|c| **c == r.answer).count();
                if dupes != 1 {
                    return Err(Error::Schema(format!(
                        "{}: the answer appears {dupes} times among candidates",
                        at()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every preprocessed token of every text field, one stream per field.
    pub fn token_streams(&self) -> Vec<Vec<String>> {
        let mut streams = Vec::new();
        for d in &self.dialogs {
            streams.push(preprocess(&d.caption));
            for r in &d.rounds {
                streams.push(preprocess(&r.question));
                streams.push(preprocess(&r.answer));
                for c in &r.candidates {
                    streams.push(preprocess(c));
                }
            }
        }
        streams
    }

    pub fn to_dialogs(&self, vocab: &Vocabulary) -> Vec<DialogInstance> {
        self.dialogs
            .iter()
            .map(|d| DialogInstance {
                image_id: d.image_id.clone(),
                caption_ids: tokenize_and_truncate(vocab, &d.caption, Role::Caption),
                rounds: d
                    .rounds
                    .iter()
                    .map(|r| Round {
                        question_ids: tokenize_and_truncate(vocab, &r.question, Role::Question),
                        answer_ids: tokenize_and_truncate(vocab, &r.answer, Role::Answer),
                        candidate_ids: r
                            .candidates
                            .iter()
                            .map(|c| tokenize_and_truncate(vocab, c, Role::Answer))
                            .collect(),
                        gt_index: r.gt_index,
                        kind: r.kind,
                        referent: r.referent,
                    })
                    .collect(),
            })
            .collect()
    }
}

/// Loads a dataset, using `vocab.txt` next to the dataset file when present
/// and otherwise building a vocabulary from the file itself with the default
/// minimum count.
pub fn load_dataset(dataset_path: &Path, features_dir: &Path) -> Result<Corpus> {
    let sibling = dataset_path
        .parent()
        .map(|p| p.join(VOCAB_FILE))
        .filter(|p| p.exists());
    let file = DatasetFile::read(dataset_path)?;
    let vocab = match sibling {
        Some(p) => Vocabulary::load(&p)?,
        None => build_vocabulary(file.token_streams(), DEFAULT_MIN_COUNT)?,
    };
    corpus_from_file(file, features_dir, vocab)
}

pub fn load_dataset_with_vocab(
    dataset_path: &Path,
    features_dir: &Path,
    vocab: Vocabulary,
) -> Result<Corpus> {
    corpus_from_file(DatasetFile::read(dataset_path)?, features_dir, vocab)
}

fn corpus_from_file(file: DatasetFile, features_dir: &Path, vocab: Vocabulary) -> Result<Corpus> {
    let mut features = BTreeMap::new();
    for d in &file.dialogs {
        if !features.contains_key(&d.image_id) {
            features.insert(d.image_id.clone(), read_features(features_dir, &d.image_id)?);
        }
    }
    let corpus = Corpus {
        dialogs: file.to_dialogs(&vocab),
        vocabulary: vocab,
        features,
        split: file.split.unwrap_or(Split::Train),
        num_candidates: file.num_candidates,
    };
    corpus.validate()?;
    Ok(corpus)
}

impl Corpus {
    pub fn to_dataset_file(&self) -> DatasetFile {
        let v = &self.vocabulary;
        DatasetFile {
            version: DATASET_VERSION.to_owned(),
            split: Some(self.split),
            num_candidates: self.num_candidates,
            dialogs: self
                .dialogs
                .iter()
                .map(|d| DialogRecord {
                    image_id: d.image_id.clone(),
                    caption: v.decode(&d.caption_ids),
                    rounds: d
                        .rounds
                        .iter()
                        .map(|r| RoundRecord {
                            question: v.decode(&r.question_ids),
                            answer: v.decode(&r.answer_ids),
                            candidates: r.candidate_ids.iter().map(|c| v.decode(c)).collect(),
                            gt_index: r.gt_index,
                            kind: r.kind,
                            referent: r.referent,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Writes the dataset JSON, one feature file per image into
    /// `features_dir`, and the vocabulary next to the dataset file.
    pub fn save(&self, dataset_path: &Path, features_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(features_dir).map_err(|e| Error::io(features_dir, e))?;
        self.to_dataset_file().write(dataset_path)?;
        for f in self.features.values() {
            write_features(features_dir, f)?;
        }
        if let Some(dir) = dataset_path.parent() {
            self.vocabulary.save(&dir.join(VOCAB_FILE))?;
        }
        Ok(())
    }
}

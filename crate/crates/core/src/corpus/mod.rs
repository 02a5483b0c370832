//! Dialog data: schema, preprocessing, vocabulary, image features and the
//! synthetic grounded-dialog generator.

mod dataset;
mod features;
mod synth;
mod text;
mod vocab;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use dataset::{
    load_dataset, load_dataset_with_vocab, DatasetFile, DialogRecord, RoundRecord,
    DATASET_VERSION, DEFAULT_MIN_COUNT, VOCAB_FILE,
};
pub use features::{feature_path, read_features, write_features, ImageFeatures, FEATURE_MAGIC};
pub use synth::{
    generate_synthetic, generate_synthetic_corpus, AttributeKind, AttributeSpace, Scene,
    SceneObject, SceneRound, SynthConfig, SyntheticData,
};
pub use text::{preprocess, tokenize_and_truncate, Role};
pub use vocab::{build_vocabulary, Vocabulary, BOS_TOKEN, EOS_TOKEN, PAD_TOKEN, UNK_TOKEN};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Question type tag used for per-slice metrics on generated corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundKind {
    Attribute,
    Coreference,
}

impl RoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RoundKind::Attribute => "attribute",
            RoundKind::Coreference => "coreference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Round {
    pub question_ids: Vec<usize>,
    pub answer_ids: Vec<usize>,
    pub candidate_ids: Vec<Vec<usize>>,
    pub gt_index: usize,
    pub kind: Option<RoundKind>,
    /// Index of the object the question is about, when known.
    pub referent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogInstance {
    pub image_id: String,
    pub caption_ids: Vec<usize>,
    pub rounds: Vec<Round>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub dialogs: Vec<DialogInstance>,
    pub features: BTreeMap<String, ImageFeatures>,
    pub split: Split,
    pub num_candidates: Option<usize>,
}

impl Corpus {
    pub fn num_rounds(&self) -> usize {
        self.dialogs.iter().map(|d| d.rounds.len()).sum()
    }

    /// Object count shared by every image.
    pub fn num_objects(&self) -> Option<usize> {
        self.features.values().next().map(ImageFeatures::num_objects)
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.values().next().map(ImageFeatures::dim)
    }

    pub fn image_features(&self, image_id: &str) -> Result<&ImageFeatures> {
        self.features
            .get(image_id)
            .ok_or_else(|| Error::MissingFeatures(image_id.to_owned()))
    }

    pub fn validate(&self) -> Result<()> {
        let size = self.vocabulary.len();
        let check_ids = |ids: &[usize]| -> Result<()> {
            match ids.iter().find(|&&i| i >= size) {
                Some(&id) => Err(Error::TokenOutOfRange { id, size }),
                None => Ok(()),
            }
        };
        let mut shape = None;
        for f in self.features.values() {
            if !f.matrix.is_finite() {
                return Err(Error::NonFinite(format!("features for {}", f.image_id)));
            }
            match shape {
                None => shape = Some(f.matrix.shape()),
                Some(s) if s != f.matrix.shape() => {
                    return Err(Error::Schema(format!(
                        "image {} has {}x{} features but the corpus uses {}x{} (K must be fixed)",
                        f.image_id,
                        f.matrix.rows(),
                        f.matrix.cols(),
                        s.0,
                        s.1
                    )))
                }
                _ => {}
            }
        }
        for d in &self.dialogs {
            if !self.features.contains_key(&d.image_id) {
                return Err(Error::MissingFeatures(d.image_id.clone()));
            }
            if d.rounds.is_empty() {
                return Err(Error::Schema(format!("dialog {} has no rounds", d.image_id)));
            }
            check_ids(&d.caption_ids)?;
            for r in &d.rounds {
                check_ids(&r.question_ids)?;
                check_ids(&r.answer_ids)?;
                for c in &r.candidate_ids {
                    check_ids(c)?;
                }
                if r.gt_index >= r.candidate_ids.len() {
                    return Err(Error::Schema(format!(
                        "gt_index {} out of range in dialog {}",
                        r.gt_index, d.image_id
                    )));
                }
            }
        }
        Ok(())
    }
}

//! Synthetic visually-grounded dialogs.
//!
//! Every image is a set of `K` objects, each a (shape, color, position)
//! triple with one-hot features. Shapes are distinct within an image so a
//! shape name identifies exactly one object. Rounds alternate between
//! attribute questions that name a shape ("what color is the cube") and
//! coreference questions ("where is it") about the object of the previous
//! round, asking for the attribute that round did not reveal.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetFile, DialogRecord, RoundRecord, DATASET_VERSION};
use super::features::ImageFeatures;
use super::vocab::{build_vocabulary, Vocabulary};
use super::{Corpus, RoundKind, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpace {
    pub shapes: Vec<String>,
    pub colors: Vec<String>,
    pub positions: Vec<String>,
}

impl Default for AttributeSpace {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        Self {
            shapes: s(&[
                "cube", "ball", "cone", "ring", "star", "box", "disk", "cup", "key", "bell",
            ]),
            colors: s(&["red", "blue", "green", "yellow", "purple", "orange"]),
            positions: s(&["left", "right", "top", "bottom", "center", "corner"]),
        }
    }
}

impl AttributeSpace {
    /// Width of an object feature row.
    pub fn feature_dim(&self) -> usize {
        self.shapes.len() + self.colors.len() + self.positions.len()
    }

    /// Largest object count an image can hold (shapes are unique per image).
    pub fn capacity(&self) -> usize {
        self.shapes.len()
    }

    fn candidate_pool(&self) -> Vec<String> {
        let mut pool = Vec::new();
        pool.extend(self.colors.iter().map(|c| color_answer(c)));
        pool.extend(self.positions.iter().map(|p| position_answer(p)));
        pool.extend(self.shapes.iter().map(|s| format!("it is a {s}")));
        pool.extend(self.colors.iter().cloned());
        pool.extend(self.positions.iter().map(|p| format!("on the {p}")));
        pool.extend(["yes", "no", "i can not tell"].map(String::from));
        pool
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_dialogs: usize,
    pub rounds_per_dialog: usize,
    pub num_objects: usize,
    pub num_candidates: usize,
    pub seed: u64,
    pub attribute_space: AttributeSpace,
    pub split: Split,
    /// Vocabulary threshold used when the generator builds its own vocabulary.
    pub min_count: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_dialogs: 50,
            rounds_per_dialog: 3,
            num_objects: 8,
            num_candidates: 20,
            seed: 7,
            attribute_space: AttributeSpace::default(),
            split: Split::Train,
            min_count: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Color,
    Position,
}

impl AttributeKind {
    fn other(self) -> Self {
        match self {
            AttributeKind::Color => AttributeKind::Position,
            AttributeKind::Position => AttributeKind::Color,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: usize,
    pub color: usize,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRound {
    pub kind: RoundKind,
    pub referent: usize,
    pub attribute: AttributeKind,
}

/// Ground truth behind one generated dialog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub image_id: String,
    pub objects: Vec<SceneObject>,
    pub salient: usize,
    pub rounds: Vec<SceneRound>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub file: DatasetFile,
    pub scenes: Vec<Scene>,
}

fn color_answer(color: &str) -> String {
    format!("it is {color}")
}

fn position_answer(position: &str) -> String {
    format!("it is on the {position}")
}

/// Generates a corpus. With `vocab = None` a vocabulary is built from the
/// generated text using `config.min_count`; pass the training vocabulary
/// when generating held-out splits.
pub fn generate_synthetic(config: &SynthConfig, vocab: Option<&Vocabulary>) -> Result<SyntheticData> {
    let space = &config.attribute_space;
    if config.num_objects == 0 {
        return Err(Error::Config("number of objects K must be at least 1".into()));
    }
    if config.num_objects > space.capacity() {
        return Err(Error::Config(format!(
            "K={} exceeds the attribute space capacity of {} distinct shapes",
            config.num_objects,
            space.capacity()
        )));
    }
    if space.colors.is_empty() || space.positions.is_empty() {
        return Err(Error::Config("attribute space needs colors and positions".into()));
    }
    if config.rounds_per_dialog == 0 {
        return Err(Error::Config("rounds per dialog must be at least 1".into()));
    }
    let pool = space.candidate_pool();
    if config.num_candidates == 0 || config.num_candidates > pool.len() {
        return Err(Error::Config(format!(
            "number of candidates must be in 1..={} for this attribute space",
            pool.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scenes = Vec::with_capacity(config.num_dialogs);
    let mut records = Vec::with_capacity(config.num_dialogs);
    let mut features = BTreeMap::new();

    for d in 0..config.num_dialogs {
        let image_id = format!("syn{}_{d:05}", config.seed);
        let mut shapes: Vec<usize> = (0..space.shapes.len()).collect();
        shapes.shuffle(&mut rng);
        let objects: Vec<SceneObject> = shapes[..config.num_objects]
            .iter()
            .map(|&shape| SceneObject {
                shape,
                color: rng.gen_range(0..space.colors.len()),
                position: rng.gen_range(0..space.positions.len()),
            })
            .collect();
        let salient = rng.gen_range(0..objects.len());

        let mut rows = Vec::with_capacity(objects.len());
        for o in &objects {
            let mut row = vec![0.0; space.feature_dim()];
            row[o.shape] = 1.0;
            row[space.shapes.len() + o.color] = 1.0;
            row[space.shapes.len() + space.colors.len() + o.position] = 1.0;
            rows.push(row);
        }
        features.insert(
            image_id.clone(),
            ImageFeatures::new(image_id.clone(), Tensor::from_rows(&rows)?)?,
        );

        let so = objects[salient];
        let caption = format!(
            "there is a {} {} on the {}",
            space.colors[so.color], space.shapes[so.shape], space.positions[so.position]
        );

        let mut scene_rounds: Vec<SceneRound> = Vec::new();
        let mut round_records = Vec::new();
        let mut used = vec![false; objects.len()];
        for r in 0..config.rounds_per_dialog {
            let sr = if r % 2 == 0 {
                let pick = |allow: &dyn Fn(usize) -> bool| -> Vec<usize> {
                    (0..objects.len()).filter(|&i| allow(i)).collect()
                };
                let mut options = pick(&|i| i != salient && !used[i]);
                if options.is_empty() {
                    options = pick(&|i| !used[i]);
                }
                if options.is_empty() {
                    options = pick(&|_| true);
                }
                let referent = options[rng.gen_range(0..options.len())];
                let attribute = if rng.gen_bool(0.5) {
                    AttributeKind::Color
                } else {
                    AttributeKind::Position
                };
                SceneRound {
                    kind: RoundKind::Attribute,
                    referent,
                    attribute,
                }
            } else {
                let prev = scene_rounds.last().expect("coreference follows a round");
                SceneRound {
                    kind: RoundKind::Coreference,
                    referent: prev.referent,
                    attribute: prev.attribute.other(),
                }
            };
            used[sr.referent] = true;
            let obj = objects[sr.referent];
            let question = match (sr.kind, sr.attribute) {
                (RoundKind::Attribute, AttributeKind::Color) => {
                    format!("what color is the {}", space.shapes[obj.shape])
                }
                (RoundKind::Attribute, AttributeKind::Position) => {
                    format!("where is the {}", space.shapes[obj.shape])
                }
                (RoundKind::Coreference, AttributeKind::Color) => "what color is it".to_owned(),
                (RoundKind::Coreference, AttributeKind::Position) => "where is it".to_owned(),
            };
            let answer = match sr.attribute {
                AttributeKind::Color => color_answer(&space.colors[obj.color]),
                AttributeKind::Position => position_answer(&space.positions[obj.position]),
            };

            let mut distractors: Vec<&String> = pool.iter().filter(|c| **c != answer).collect();
            distractors.shuffle(&mut rng);
            let mut candidates: Vec<String> = distractors[..config.num_candidates - 1]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let gt_index = rng.gen_range(0..config.num_candidates);
            candidates.insert(gt_index, answer.clone());

            round_records.push(RoundRecord {
                question,
                answer,
                candidates,
                gt_index,
                kind: Some(sr.kind),
                referent: Some(sr.referent),
            });
            scene_rounds.push(sr);
        }

        records.push(DialogRecord {
            image_id: image_id.clone(),
            caption,
            rounds: round_records,
        });
        scenes.push(Scene {
            image_id,
            objects,
            salient,
            rounds: scene_rounds,
        });
    }

    let file = DatasetFile {
        version: DATASET_VERSION.to_owned(),
        split: Some(config.split),
        num_candidates: Some(config.num_candidates),
        dialogs: records,
    };
    file.check()?;
    let vocabulary = match vocab {
        Some(v) => v.clone(),
        None => build_vocabulary(file.token_streams(), config.min_count)?,
    };
    let corpus = Corpus {
        dialogs: file.to_dialogs(&vocabulary),
        vocabulary,
        features,
        split: config.split,
        num_candidates: Some(config.num_candidates),
    };
    corpus.validate()?;
    Ok(SyntheticData {
        corpus,
        file,
        scenes,
    })
}

pub fn generate_synthetic_corpus(config: &SynthConfig) -> Result<Corpus> {
    generate_synthetic(config, None).map(|d| d.corpus)
}

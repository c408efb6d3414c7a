//! Zero-shot collision-type classification against prompt ensembles.
//!
//! Each class vector is the mean of its L2-normalized prompt embeddings; a
//! video is represented by the mean of the normalized embeddings of eight
//! frames around the detected peak. Neither mean is re-normalized, and the
//! class score is the plain dot product.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use crate::bank::{frame_key, EmbeddingBank, Section};
use crate::{CollisionClass, Error, Result};

/// Number of frames averaged into a video embedding.
pub const PEAK_FRAMES: usize = 8;

/// Built-in prompt sets. The first prompt of each class is the published
/// example; the remaining four are this project's own wording.
pub const DEFAULT_PROMPTS_JSON: &str = include_str!("../data/prompts.json");

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn normalized_entry(bank: &EmbeddingBank, name: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = bank.require(name)?.iter().map(|&x| x as f64).collect();
    l2_normalize(&v).map_err(|_| Error::Bank(format!("entry `{name}` is a zero vector")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPromptSet {
    pub class: CollisionClass,
    pub prompts: Vec<String>,
}

/// Parses a `{"<class>": ["<prompt>", ...]}` file covering all five classes,
/// returned in taxonomy order.
pub fn parse_prompt_sets(json: &str) -> Result<Vec<ClassPromptSet>> {
    let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(json)?;
    let mut sets: Vec<Option<ClassPromptSet>> = vec![None; CollisionClass::ALL.len()];
    for (name, prompts) in raw {
        let class: CollisionClass = name.parse()?;
        if prompts.is_empty() || prompts.iter().any(|p| p.trim().is_empty()) {
            return Err(Error::Config(format!("class `{class}` needs non-empty prompts")));
        }
        if sets[class.index()].replace(ClassPromptSet { class, prompts }).is_some() {
            return Err(Error::Config(format!("class `{class}` listed twice")));
        }
    }
    sets.into_iter()
        .zip(CollisionClass::ALL)
        .map(|(s, c)| s.ok_or_else(|| Error::Config(format!("prompt file lacks class `{c}`"))))
        .collect()
}

pub fn load_prompt_sets(path: &Path) -> Result<Vec<ClassPromptSet>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_prompt_sets(&text)
}

pub fn default_prompt_sets() -> Vec<ClassPromptSet> {
    parse_prompt_sets(DEFAULT_PROMPTS_JSON).expect("built-in prompt file is valid")
}

/// One mean prompt vector per class, indexed in taxonomy order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCentroids {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl ClassCentroids {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.len() != CollisionClass::ALL.len() {
            return Err(Error::Config(format!("need 5 class vectors, got {}", vectors.len())));
        }
        let dim = vectors[0].len();
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        Ok(ClassCentroids { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, class: CollisionClass) -> &[f64] {
        &self.vectors[class.index()]
    }
}

pub fn build_class_centroids(
    prompt_bank: &EmbeddingBank,
    prompt_sets: &[ClassPromptSet],
) -> Result<ClassCentroids> {
    if prompt_bank.section() != Section::Prompts {
        return Err(Error::Bank("expected a prompts bank, got a frames bank".into()));
    }
    let mut seen = HashSet::new();
    let mut vectors = vec![Vec::new(); CollisionClass::ALL.len()];
    for set in prompt_sets {
        if set.prompts.is_empty() {
            return Err(Error::Config(format!("class `{}` has no prompts", set.class)));
        }
        let mut mean = vec![0.0; prompt_bank.dim()];
        for p in &set.prompts {
            if !seen.insert(p.as_str()) {
                return Err(Error::Bank(format!("prompt `{p}` listed more than once")));
            }
            for (m, x) in mean.iter_mut().zip(normalized_entry(prompt_bank, p)?) {
                *m += x;
            }
        }
        let k = set.prompts.len() as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        vectors[set.class.index()] = mean;
    }
    if let Some(c) = CollisionClass::ALL.into_iter().find(|c| vectors[c.index()].is_empty()) {
        return Err(Error::Config(format!("no prompt set for class `{c}`")));
    }
    ClassCentroids::new(vectors)
}

/// Eight consecutive frame indices `peak - 4 ..= peak + 3`, shifted to stay
/// inside the clip; short clips repeat their last frame.
pub fn select_peak_frames(n_frames: usize, peak_frame: usize) -> [usize; PEAK_FRAMES] {
    assert!(n_frames >= 1);
    let mut out = [0; PEAK_FRAMES];
    if n_frames < PEAK_FRAMES {
        for (i, o) in out.iter_mut().enumerate() {
            *o = i.min(n_frames - 1);
        }
        return out;
    }
    let start = peak_frame
        .saturating_sub(PEAK_FRAMES / 2)
        .min(n_frames - PEAK_FRAMES);
    for (i, o) in out.iter_mut().enumerate() {
        *o = start + i;
    }
    out
}

/// Mean of the normalized frame embeddings of `video_id` at `indices`.
pub fn aggregate_image_embedding(
    frame_bank: &EmbeddingBank,
    video_id: &str,
    indices: &[usize],
) -> Result<Vec<f64>> {
    if indices.is_empty() {
        return Err(Error::Config("no frames to aggregate".into()));
    }
    let mut mean = vec![0.0; frame_bank.dim()];
    for &i in indices {
        let v = normalized_entry(frame_bank, &frame_key(video_id, i))?;
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    let k = indices.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub predicted: CollisionClass,
    /// Dot-product scores in taxonomy order.
    pub scores: [f64; 5],
}

pub fn classify(v: &[f64], centroids: &ClassCentroids) -> Result<ClassificationResult> {
    if v.len() != centroids.dim {
        return Err(Error::DimensionMismatch {
            expected: centroids.dim,
            actual: v.len(),
        });
    }
    let mut scores = [0.0; 5];
    for (s, t) in scores.iter_mut().zip(&centroids.vectors) {
        *s = v.iter().zip(t).map(|(a, b)| a * b).sum();
    }
    let mut best = 0;
    for k in 1..scores.len() {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    Ok(ClassificationResult {
        predicted: CollisionClass::ALL[best],
        scores,
    })
}

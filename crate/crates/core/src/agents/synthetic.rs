//! A deterministic attribute world standing in for real videos and models.
//!
//! Every video is an assignment of one value to each of `n_attributes`
//! attributes, written as `name=value` tokens (`color=val2`). Assignments are
//! unique within a world. The roles behave like idealized agents:
//!
//! * the encoder embeds the set of attribute tokens in a text through a
//!   seeded projection (orthonormal token directions whenever the dimension
//!   allows), plus small seeded components for every other word and for the
//!   exact text, so any edit to a text moves its embedding;
//! * the questioner asks about an attribute not yet asked in the transcript;
//! * the frame answerer reads the attribute off a frame caption of the video
//!   in mind, which may show one attribute in only a single frame;
//! * the aggregator answers positively if any frame does.
//!
//! Everything is a pure function of the [`WorldSpec`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    is_affirmative, AgentBackend, AgentError, Aggregator, ChatTranscript, Encoder, FrameAnswerer,
    PromptTemplates, Questioner,
};
use crate::embedding::Embedding;
use crate::index::{VideoMetadata, VideoRecord};

const ATTRIBUTE_NAMES: [&str; 8] = [
    "color", "count", "setting", "action", "object", "weather", "camera", "mood",
];

/// Weight of each non-attribute word relative to an attribute token.
const WORD_WEIGHT: f64 = 0.05;
/// Weight of the whole-text component.
const TEXT_WEIGHT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    pub n_videos: usize,
    pub n_attributes: usize,
    pub values_per_attribute: usize,
    pub dimension: usize,
    pub frames_per_video: usize,
    /// Attribute that is visible in only one frame of each video.
    pub partial_attribute: Option<usize>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            n_videos: 1000,
            n_attributes: 8,
            values_per_attribute: 4,
            dimension: 64,
            frames_per_video: 4,
            partial_attribute: Some(0),
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<(), AgentError> {
        let invalid = |msg: String| Err(AgentError::InvalidConfig(msg));
        if self.n_attributes < 2 {
            return invalid(format!("need at least 2 attributes, got {}", self.n_attributes));
        }
        if self.values_per_attribute < 2 {
            return invalid(format!(
                "need at least 2 values per attribute, got {}",
                self.values_per_attribute
            ));
        }
        if self.dimension < self.n_attributes.max(2) {
            return invalid(format!(
                "dimension {} is smaller than the attribute count {}",
                self.dimension, self.n_attributes
            ));
        }
        if self.frames_per_video == 0 {
            return invalid("frames_per_video must be positive".into());
        }
        if let Some(p) = self.partial_attribute {
            if p >= self.n_attributes {
                return invalid(format!("partial attribute {p} out of range"));
            }
        }
        let combos = (self.values_per_attribute as f64).powi(self.n_attributes as i32);
        if self.n_videos as f64 > combos {
            return invalid(format!(
                "{} videos cannot have distinct assignments over {combos} combinations",
                self.n_videos
            ));
        }
        Ok(())
    }

    pub fn attribute_names(&self) -> Vec<String> {
        attribute_names(self.n_attributes)
    }
}

fn attribute_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match ATTRIBUTE_NAMES.get(i) {
            Some(name) => name.to_string(),
            None => format!("attr{i}"),
        })
        .collect()
}

pub fn value_name(value: usize) -> String {
    format!("val{value}")
}

pub fn token(attribute: &str, value: &str) -> String {
    format!("{attribute}={value}")
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        // Separator so ("ab","c") and ("a","bc") differ.
        hash ^= 0xff;
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Seeded text encoder over attribute tokens.
#[derive(Debug)]
pub struct SyntheticEncoder {
    seed: u64,
    dim: usize,
    tokens: HashMap<String, Vec<f64>>,
}

impl SyntheticEncoder {
    pub fn new(spec: &WorldSpec) -> Self {
        let names = spec.attribute_names();
        let all_tokens: Vec<String> = names
            .iter()
            .flat_map(|n| (0..spec.values_per_attribute).map(move |v| token(n, &value_name(v))))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_70c3_u64);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(all_tokens.len());
        let orthogonal = all_tokens.len() <= spec.dimension;
        for _ in &all_tokens {
            let mut v = gaussian_unit(&mut rng, spec.dimension);
            if orthogonal {
                // Modified Gram-Schmidt, two passes.
                for _ in 0..2 {
                    for b in &basis {
                        let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                        v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                    }
                }
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= n);
            }
            basis.push(v);
        }
        Self {
            seed: spec.seed,
            dim: spec.dimension,
            tokens: all_tokens.into_iter().zip(basis).collect(),
        }
    }

    fn hashed(&self, kind: &[u8], text: &str) -> Vec<f64> {
        let seed = fnv1a(&[&self.seed.to_le_bytes(), kind, text.as_bytes()]);
        gaussian_unit(&mut ChaCha8Rng::seed_from_u64(seed), self.dim)
    }

    pub fn is_token(&self, word: &str) -> bool {
        self.tokens.contains_key(word)
    }
}

fn strip_word(word: &str) -> &str {
    word.trim_matches(|c: char| !(c.is_alphanumeric() || c == '=' || c == '_'))
}

/// Attribute tokens in `text`, in sorted order.
pub fn tokens_in(text: &str) -> BTreeSet<&str> {
    text.split_whitespace()
        .map(strip_word)
        .filter(|w| w.contains('='))
        .collect()
}

impl Encoder for SyntheticEncoder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding, AgentError> {
        if text.trim().is_empty() {
            return Err(AgentError::EmptyText);
        }
        let mut tokens = BTreeSet::new();
        let mut words = BTreeSet::new();
        for raw in text.split_whitespace() {
            let word = strip_word(raw);
            if self.tokens.contains_key(word) {
                tokens.insert(word);
            } else if !word.is_empty() {
                words.insert(word.to_lowercase());
            }
        }
        let mut acc = vec![0.0; self.dim];
        let mut add = |v: &[f64], w: f64| acc.iter_mut().zip(v).for_each(|(a, x)| *a += w * x);
        for t in &tokens {
            add(&self.tokens[*t], 1.0);
        }
        for w in &words {
            add(&self.hashed(b"word", w), WORD_WEIGHT);
        }
        add(&self.hashed(b"text", text), TEXT_WEIGHT);
        Ok(Embedding::normalize(&acc)?)
    }
}

/// Finds which attribute a synthetic question is about.
fn asked_attribute<'a>(names: &'a [String], question: &str) -> Option<&'a str> {
    names
        .iter()
        .find(|n| question.contains(&format!("the {n} of")))
        .map(String::as_str)
}

#[derive(Debug, Clone)]
pub struct SyntheticQuestioner {
    names: Vec<String>,
}

impl SyntheticQuestioner {
    pub fn new(spec: &WorldSpec) -> Self {
        Self {
            names: spec.attribute_names(),
        }
    }
}

pub const FALLBACK_QUESTION: &str = "Is there anything else you remember about the video?";

impl Questioner for SyntheticQuestioner {
    fn ask(&self, transcript: &ChatTranscript, anchor: &VideoMetadata) -> Result<String, AgentError> {
        let asked: HashSet<&str> = transcript
            .assistant_messages()
            .filter_map(|q| asked_attribute(&self.names, q))
            .collect();
        let offset = (fnv1a(&[anchor.caption.as_bytes()]) % self.names.len() as u64) as usize;
        let pick = (0..self.names.len())
            .map(|i| &self.names[(offset + i) % self.names.len()])
            .find(|n| !asked.contains(n.as_str()));
        let Some(name) = pick else {
            return Ok(FALLBACK_QUESTION.to_string());
        };
        let shown = anchor
            .attributes
            .as_ref()
            .and_then(|a| a.get(name))
            .map(|v| format!(" The top result shows {}.", token(name, v)))
            .unwrap_or_default();
        Ok(format!(
            "What is the {name} of the video you have in mind?{shown}"
        ))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticAnswerer {
    names: Vec<String>,
}

impl SyntheticAnswerer {
    pub fn new(spec: &WorldSpec) -> Self {
        Self {
            names: spec.attribute_names(),
        }
    }
}

impl FrameAnswerer for SyntheticAnswerer {
    fn answer_frame(&self, question: &str, frame: &str) -> Result<String, AgentError> {
        let Some(name) = asked_attribute(&self.names, question) else {
            return Ok("No, nothing in this frame answers that.".to_string());
        };
        let prefix = format!("{name}=");
        let seen = frame
            .split_whitespace()
            .map(strip_word)
            .find(|w| w.starts_with(&prefix));
        Ok(match seen {
            Some(tok) => format!("Yes, the {name} is {tok}."),
            None => format!("No, the {name} is not visible in this frame."),
        })
    }
}

/// Positive if any frame is positive; otherwise the first frame's answer.
#[derive(Debug, Clone, Default)]
pub struct SyntheticAggregator;

impl Aggregator for SyntheticAggregator {
    fn aggregate(&self, _question: &str, answers: &[String]) -> Result<String, AgentError> {
        let first = answers.first().ok_or(AgentError::NoFrames)?;
        Ok(answers
            .iter()
            .find(|a| is_affirmative(a))
            .unwrap_or(first)
            .clone())
    }
}

/// A generated corpus plus the agent backend that understands it.
pub struct SyntheticWorld {
    pub spec: WorldSpec,
    pub corpus: Vec<VideoRecord>,
    pub backend: AgentBackend,
}

/// Builds only the role implementations for `spec` (no corpus).
pub fn synthetic_backend(spec: &WorldSpec) -> Result<AgentBackend, AgentError> {
    spec.validate()?;
    Ok(AgentBackend {
        encoder: Arc::new(SyntheticEncoder::new(spec)),
        questioner: Arc::new(SyntheticQuestioner::new(spec)),
        answerer: Arc::new(SyntheticAnswerer::new(spec)),
        aggregator: Arc::new(SyntheticAggregator),
        templates: PromptTemplates::default(),
    })
}

pub fn caption_for(tokens: &[String]) -> String {
    format!("A video with {}.", tokens.join(", "))
}

pub fn synthetic_world(spec: &WorldSpec) -> Result<SyntheticWorld, AgentError> {
    let backend = synthetic_backend(spec)?;
    let names = spec.attribute_names();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seen = HashSet::with_capacity(spec.n_videos);
    let mut corpus = Vec::with_capacity(spec.n_videos);
    while corpus.len() < spec.n_videos {
        let values: Vec<usize> = (0..spec.n_attributes)
            .map(|_| rng.random_range(0..spec.values_per_attribute))
            .collect();
        if !seen.insert(values.clone()) {
            continue;
        }
        let tokens: Vec<String> = names
            .iter()
            .zip(&values)
            .map(|(n, &v)| token(n, &value_name(v)))
            .collect();
        let visible_frame = rng.random_range(0..spec.frames_per_video);
        let frame_captions = (0..spec.frames_per_video)
            .map(|f| {
                let shown: Vec<&str> = tokens
                    .iter()
                    .enumerate()
                    .filter(|(a, _)| spec.partial_attribute != Some(*a) || f == visible_frame)
                    .map(|(_, t)| t.as_str())
                    .collect();
                format!("Frame {f}: {}.", shown.join(", "))
            })
            .collect();
        let caption = caption_for(&tokens);
        let embedding = backend.encoder.encode(&caption)?;
        corpus.push(VideoRecord {
            id: format!("vid{:05}", corpus.len()),
            embedding,
            metadata: VideoMetadata {
                caption,
                frame_captions,
                attributes: Some(
                    names
                        .iter()
                        .zip(&values)
                        .map(|(n, &v)| (n.clone(), value_name(v)))
                        .collect(),
                ),
                source_uri: None,
            },
        });
    }
    Ok(SyntheticWorld {
        spec: spec.clone(),
        corpus,
        backend,
    })
}

/// Query text naming `n_known` of `target`'s attributes, chosen by `rng`.
pub fn partial_query(target: &VideoMetadata, n_known: usize, rng: &mut impl Rng) -> String {
    let attrs: Vec<(&String, &String)> = target
        .attributes
        .as_ref()
        .map(|a| a.iter().collect())
        .unwrap_or_default();
    let n_known = n_known.min(attrs.len());
    let mut picked: Vec<usize> = sample(rng, attrs.len(), n_known).into_vec();
    picked.sort_unstable();
    let tokens: Vec<String> = picked
        .into_iter()
        .map(|i| token(attrs[i].0, attrs[i].1))
        .collect();
    format!("a video with {}", tokens.join(" and "))
}

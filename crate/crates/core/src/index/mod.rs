//! Exact cosine retrieval over a video-embedding collection.
//!
//! The index is a flat brute-force scan: every query scores the whole
//! corpus. Orderings are total and deterministic: descending score, then
//! ascending id.

mod corpus;
mod persist;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::agents::AgentError;
use crate::embedding::{Embedding, GeometryError};

pub use corpus::{parse_corpus, read_corpus, CorpusLine};
pub use persist::{FORMAT_VERSION, MAGIC};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("video id {0:?} is already indexed")]
    DuplicateId(String),
    #[error("dimension mismatch: index has {expected}, record has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("unknown video id {0:?}")]
    UnknownId(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt index file: {0}")]
    CorruptIndex(String),
    #[error("malformed corpus record on line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("encoding failed on line {line}: {source}")]
    Encode { line: usize, source: AgentError },
}

/// Descriptive data attached to a video.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoMetadata {
    #[serde(default)]
    pub caption: String,
    /// One caption per sampled frame, in timestamp order.
    #[serde(default)]
    pub frame_captions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_uri: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub embedding: Embedding,
    pub metadata: VideoMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredVideo {
    pub id: String,
    pub score: f64,
}

/// Top-k result, best first. Serializes as a bare array of `{id, score}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    /// Requested cutoff; `entries.len() == min(k, corpus size)`.
    pub k: usize,
    pub entries: Vec<ScoredVideo>,
}

impl RankedList {
    pub fn top(&self) -> Option<&ScoredVideo> {
        self.entries.first()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// 1-based position of `id`, if it made the cut.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id).map(|p| p + 1)
    }
}

impl Serialize for RankedList {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RankedList {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let entries = Vec::<ScoredVideo>::deserialize(deserializer)?;
        Ok(Self {
            k: entries.len(),
            entries,
        })
    }
}

/// Ordering used everywhere a ranking is produced.
pub(crate) fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

#[derive(Debug, Clone, Default)]
pub struct VideoIndex {
    dim: Option<usize>,
    records: Vec<VideoRecord>,
    positions: HashMap<String, usize>,
}

impl VideoIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// An empty index whose dimension is fixed up front.
    pub fn with_dimension(dim: usize) -> Self {
        Self {
            dim: Some(dim),
            ..Self::default()
        }
    }

    pub fn from_records(records: impl IntoIterator<Item = VideoRecord>) -> Result<Self, IndexError> {
        let mut index = Self::new();
        for record in records {
            index.add(record)?;
        }
        Ok(index)
    }

    pub fn add(&mut self, record: VideoRecord) -> Result<(), IndexError> {
        if self.positions.contains_key(&record.id) {
            return Err(IndexError::DuplicateId(record.id));
        }
        let dim = record.embedding.dim();
        match self.dim {
            Some(expected) if expected != dim => {
                return Err(IndexError::DimensionMismatch {
                    expected,
                    actual: dim,
                })
            }
            _ => self.dim = Some(dim),
        }
        self.positions.insert(record.id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dim
    }

    pub fn get(&self, id: &str) -> Option<&VideoRecord> {
        self.positions.get(id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    fn check_query(&self, query: &Embedding) -> Result<(), IndexError> {
        let dim = self.dim.ok_or(IndexError::EmptyIndex)?;
        if self.records.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != dim {
            return Err(IndexError::DimensionMismatch {
                expected: dim,
                actual: query.dim(),
            });
        }
        Ok(())
    }

    fn score(&self, query: &Embedding, record: &VideoRecord) -> f64 {
        let s = crate::embedding::dot(query.as_slice(), record.embedding.as_slice()).clamp(-1.0, 1.0);
        // A sum of products can be -0.0, which total_cmp would order below 0.0.
        if s == 0.0 {
            0.0
        } else {
            s
        }
    }

    /// The `k` most similar videos, best first.
    pub fn top_k(&self, query: &Embedding, k: usize) -> Result<RankedList, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        self.check_query(query)?;
        let mut scored: Vec<(f64, usize)> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (self.score(query, r), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            rank_order(
                (a.0, &self.records[a.1].id),
                (b.0, &self.records[b.1].id),
            )
        };
        let take = k.min(scored.len());
        if take < scored.len() {
            scored.select_nth_unstable_by(take - 1, cmp);
            scored.truncate(take);
        }
        scored.sort_unstable_by(cmp);
        Ok(RankedList {
            k,
            entries: scored
                .into_iter()
                .map(|(score, i)| ScoredVideo {
                    id: self.records[i].id.clone(),
                    score,
                })
                .collect(),
        })
    }

    /// 1-based position of `target_id` in the full ordering for `query`.
    pub fn rank_of(&self, query: &Embedding, target_id: &str) -> Result<usize, IndexError> {
        self.check_query(query)?;
        let target = self
            .get(target_id)
            .ok_or_else(|| IndexError::UnknownId(target_id.to_string()))?;
        let target_score = self.score(query, target);
        let ahead = self
            .records
            .iter()
            .filter(|r| {
                rank_order((self.score(query, r), &r.id), (target_score, target_id))
                    == Ordering::Less
            })
            .count();
        Ok(ahead + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(id: &str, v: &[f64]) -> VideoRecord {
        VideoRecord {
            id: id.to_string(),
            embedding: Embedding::normalize(v).unwrap(),
            metadata: VideoMetadata {
                caption: format!("caption of {id}"),
                ..Default::default()
            },
        }
    }

    #[test]
    fn add_and_size() {
        let mut index = VideoIndex::new();
        index.add(record("v1", &[1.0, 0.0])).unwrap();
        assert_eq!(index.len(), 1);
        assert!(matches!(
            index.add(record("v1", &[0.0, 1.0])),
            Err(IndexError::DuplicateId(id)) if id == "v1"
        ));
        assert!(matches!(
            index.add(record("v2", &[0.0, 1.0, 0.0])),
            Err(IndexError::DimensionMismatch { expected: 2, actual: 3 })
        ));
        for i in 0..999 {
            index
                .add(record(&format!("x{i:04}"), &[1.0, i as f64]))
                .unwrap();
        }
        assert_eq!(index.len(), 1000);
    }

    #[test]
    fn top_k_examples() {
        let index =
            VideoIndex::from_records([record("a", &[1.0, 0.0]), record("b", &[0.0, 1.0])]).unwrap();
        let q = Embedding::normalize(&[1.0, 0.0]).unwrap();
        let top = index.top_k(&q, 1).unwrap();
        assert_eq!(top.entries, vec![ScoredVideo { id: "a".into(), score: 1.0 }]);

        let mid = Embedding::normalize(&[1.0, 1.0]).unwrap();
        let both = index.top_k(&mid, 2).unwrap();
        assert_eq!(both.ids().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(both.entries[0].score, both.entries[1].score);

        let all = index.top_k(&q, 10).unwrap();
        assert_eq!(all.entries.len(), 2);
        assert_eq!(all.k, 10);
    }

    #[test]
    fn tie_break_is_by_id_regardless_of_insertion_order() {
        let index = VideoIndex::from_records([
            record("c", &[1.0, 0.0]),
            record("a", &[1.0, 0.0]),
            record("b", &[1.0, 0.0]),
        ])
        .unwrap();
        let q = Embedding::normalize(&[1.0, 0.0]).unwrap();
        assert_eq!(index.top_k(&q, 3).unwrap().ids().collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(index.top_k(&q, 1).unwrap().ids().collect::<Vec<_>>(), ["a"]);
        assert_eq!(index.rank_of(&q, "c").unwrap(), 3);
    }

    #[test]
    fn errors() {
        let empty = VideoIndex::new();
        let q = Embedding::normalize(&[1.0, 0.0]).unwrap();
        assert!(matches!(empty.top_k(&q, 1), Err(IndexError::EmptyIndex)));
        let index = VideoIndex::from_records([record("a", &[1.0, 0.0])]).unwrap();
        assert!(matches!(index.top_k(&q, 0), Err(IndexError::InvalidK)));
        assert!(matches!(index.rank_of(&q, "zz"), Err(IndexError::UnknownId(_))));
        let q3 = Embedding::normalize(&[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            index.top_k(&q3, 1),
            Err(IndexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rank_of_extremes() {
        let index = VideoIndex::from_records([
            record("near", &[1.0, 0.0]),
            record("mid", &[1.0, 1.0]),
            record("far", &[-1.0, 0.1]),
        ])
        .unwrap();
        let q = Embedding::normalize(&[1.0, 0.0]).unwrap();
        assert_eq!(index.rank_of(&q, "near").unwrap(), 1);
        assert_eq!(index.rank_of(&q, "far").unwrap(), 3);
        let top = index.top_k(&q, 1).unwrap();
        assert_eq!(index.rank_of(&q, &top.entries[0].id).unwrap(), 1);
    }

    #[test]
    fn ranked_list_serializes_as_array() {
        let list = RankedList {
            k: 5,
            entries: vec![ScoredVideo { id: "a".into(), score: 0.5 }],
        };
        let json = serde_json::to_string(&list).unwrap();
        assert_eq!(json, r#"[{"id":"a","score":0.5}]"#);
        let back: RankedList = serde_json::from_str(&json).unwrap();
        assert_eq!(back.entries, list.entries);
    }
}

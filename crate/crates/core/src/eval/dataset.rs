//! Query/target pairs for benchmarking against an existing index.
//!
//! Each JSON line names an indexed video and its candidate query captions:
//!
//! ```json
//! {"id": "video7010", "captions": ["a man is cooking", "someone fries an egg"]}
//! ```
//!
//! One caption per video is picked with a seeded generator.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::index::{VideoIndex, VideoRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLine {
    pub id: String,
    pub captions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPair {
    pub query_text: String,
    pub target: VideoRecord,
}

pub fn parse_dataset(
    reader: impl BufRead,
    seed: u64,
    index: &VideoIndex,
) -> Result<Vec<QueryPair>, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| EvalError::MalformedRecord {
            line: line_no,
            message,
        };
        let parsed: DatasetLine =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let captions: Vec<&String> = parsed
            .captions
            .iter()
            .filter(|c| !c.trim().is_empty())
            .collect();
        if captions.is_empty() {
            return Err(malformed("no non-empty captions".into()));
        }
        let target = index
            .get(&parsed.id)
            .ok_or_else(|| malformed(format!("video {:?} is not in the index", parsed.id)))?;
        let pick = rng.random_range(0..captions.len());
        pairs.push(QueryPair {
            query_text: captions[pick].clone(),
            target: target.clone(),
        });
    }
    Ok(pairs)
}

/// Reads `path` and selects one query per video under `seed`.
pub fn load_dataset(
    path: impl AsRef<Path>,
    seed: u64,
    index: &VideoIndex,
) -> Result<Vec<QueryPair>, EvalError> {
    let file = File::open(path)?;
    parse_dataset(BufReader::new(file), seed, index)
}

//! JSON-lines corpus ingestion.
//!
//! Each non-blank line is one video: `id`, either `embedding` (array) or
//! `embed_text` (encoded at ingest), and optional `caption`,
//! `frame_captions`, `attributes`, `source_uri`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IndexError, VideoMetadata, VideoRecord};
use crate::agents::Encoder;
use crate::embedding::Embedding;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorpusLine {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_text: Option<String>,
    #[serde(default)]
    pub caption: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frame_captions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_uri: Option<String>,
}

impl CorpusLine {
    pub fn into_record(
        self,
        line: usize,
        encoder: Option<&dyn Encoder>,
    ) -> Result<VideoRecord, IndexError> {
        let malformed = |message: &str| IndexError::MalformedRecord {
            line,
            message: message.to_string(),
        };
        if self.id.is_empty() {
            return Err(malformed("empty id"));
        }
        let embedding = match (self.embedding, self.embed_text) {
            (Some(raw), _) => Embedding::normalize(&raw).map_err(|e| IndexError::MalformedRecord {
                line,
                message: e.to_string(),
            })?,
            (None, Some(text)) => {
                let encoder = encoder.ok_or_else(|| {
                    malformed("record has `embed_text` but no encoder was configured")
                })?;
                encoder
                    .encode(&text)
                    .map_err(|source| IndexError::Encode { line, source })?
            }
            (None, None) => return Err(malformed("record needs `embedding` or `embed_text`")),
        };
        Ok(VideoRecord {
            id: self.id,
            embedding,
            metadata: VideoMetadata {
                caption: self.caption,
                frame_captions: self.frame_captions,
                attributes: self.attributes,
                source_uri: self.source_uri,
            },
        })
    }
}

/// Parses JSON-lines from a reader. Line numbers in errors are 1-based.
pub fn parse_corpus(
    reader: impl BufRead,
    encoder: Option<&dyn Encoder>,
) -> Result<Vec<VideoRecord>, IndexError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine =
            serde_json::from_str(&line).map_err(|e| IndexError::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        records.push(parsed.into_record(line_no, encoder)?);
    }
    Ok(records)
}

pub fn read_corpus(
    path: impl AsRef<Path>,
    encoder: Option<&dyn Encoder>,
) -> Result<Vec<VideoRecord>, IndexError> {
    parse_corpus(BufReader::new(File::open(path)?), encoder)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_embedding_lines() {
        let input = r#"{"id":"a","embedding":[3,4],"caption":"first","frame_captions":["x","y"]}

{"id":"b","embedding":[0,2]}"#;
        let records = parse_corpus(input.as_bytes(), None).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].embedding.as_slice(), &[0.6, 0.8]);
        assert_eq!(records[0].metadata.frame_captions, ["x", "y"]);
        assert_eq!(records[1].metadata.caption, "");
    }

    #[test]
    fn reports_line_numbers() {
        let input = "{\"id\":\"a\",\"embedding\":[1,0]}\n{\"id\":\"b\"}\n";
        match parse_corpus(input.as_bytes(), None) {
            Err(IndexError::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let input = "not json\n";
        assert!(matches!(
            parse_corpus(input.as_bytes(), None),
            Err(IndexError::MalformedRecord { line: 1, .. })
        ));
        let input = "{\"id\":\"a\",\"embed_text\":\"hello\"}\n";
        assert!(matches!(
            parse_corpus(input.as_bytes(), None),
            Err(IndexError::MalformedRecord { line: 1, .. })
        ));
    }
}

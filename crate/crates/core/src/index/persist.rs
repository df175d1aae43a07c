//! On-disk index layout (all integers little-endian):
//!
//! ```text
//! "MRLN" | version: u16 | dim: u32 | count: u64
//! count * dim f64 values, record order
//! trailer_len: u64 | trailer: JSON array of {id, caption, frame_captions, attributes?, source_uri?}
//! crc32 of every preceding byte: u32
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IndexError, VideoIndex, VideoMetadata, VideoRecord};
use crate::embedding::Embedding;

pub const MAGIC: &[u8; 4] = b"MRLN";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4 + 8;

#[derive(Serialize, Deserialize)]
struct TrailerEntry {
    id: String,
    #[serde(flatten)]
    metadata: VideoMetadata,
}

impl VideoIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.dim.unwrap_or(0);
        let mut out = Vec::with_capacity(HEADER_LEN + self.records.len() * dim * 8 + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for record in &self.records {
            for v in record.embedding.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let trailer: Vec<TrailerEntry> = self
            .records
            .iter()
            .map(|r| TrailerEntry {
                id: r.id.clone(),
                metadata: r.metadata.clone(),
            })
            .collect();
        let trailer = serde_json::to_vec(&trailer).expect("metadata serializes");
        out.extend_from_slice(&(trailer.len() as u64).to_le_bytes());
        out.extend_from_slice(&trailer);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let corrupt = |msg: &str| IndexError::CorruptIndex(msg.to_string());
        if bytes.len() < HEADER_LEN + 8 + 4 {
            return Err(corrupt("file too short"));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        let stored_crc = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored_crc {
            return Err(corrupt("checksum mismatch"));
        }
        if &body[..4] != MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let version = u16::from_le_bytes(body[4..6].try_into().expect("2 bytes"));
        if version != FORMAT_VERSION {
            return Err(IndexError::CorruptIndex(format!(
                "unsupported format version {version}"
            )));
        }
        let dim = u32::from_le_bytes(body[6..10].try_into().expect("4 bytes")) as usize;
        let count = u64::from_le_bytes(body[10..18].try_into().expect("8 bytes")) as usize;

        let vectors_len = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| corrupt("header overflows"))?;
        let vectors_end = HEADER_LEN
            .checked_add(vectors_len)
            .filter(|&end| end + 8 <= body.len())
            .ok_or_else(|| corrupt("embedding block truncated"))?;
        let trailer_len = u64::from_le_bytes(
            body[vectors_end..vectors_end + 8]
                .try_into()
                .expect("8 bytes"),
        ) as usize;
        let trailer_start = vectors_end + 8;
        if trailer_start.checked_add(trailer_len) != Some(body.len()) {
            return Err(corrupt("metadata trailer length mismatch"));
        }
        let trailer: Vec<TrailerEntry> = serde_json::from_slice(&body[trailer_start..])
            .map_err(|e| IndexError::CorruptIndex(format!("metadata trailer: {e}")))?;
        if trailer.len() != count {
            return Err(corrupt("record count disagrees with metadata trailer"));
        }

        let mut index = VideoIndex::with_dimension(dim);
        let mut values = body[HEADER_LEN..vectors_end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        for entry in trailer {
            let raw: Vec<f64> = values.by_ref().take(dim).collect();
            let embedding = Embedding::from_unit(raw)
                .map_err(|e| IndexError::CorruptIndex(format!("record {:?}: {e}", entry.id)))?;
            index.add(VideoRecord {
                id: entry.id,
                embedding,
                metadata: entry.metadata,
            })?;
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

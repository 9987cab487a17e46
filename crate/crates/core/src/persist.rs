//! Versioned binary files for indexes and embedding models.
//!
//! Layout: 8-byte magic, little-endian `u32` format version, then the
//! bincode encoding of the payload.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::LexicalIndex;
use crate::pvdm::EmbeddingModel;

pub const FORMAT_VERSION: u32 = 1;
pub const INDEX_MAGIC: &[u8; 8] = b"LXCINDEX";
pub const EMBED_MAGIC: &[u8; 8] = b"LXCEMBED";

fn save<T: Serialize>(path: &Path, magic: &[u8; 8], value: &T) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bincode::serialize_into(&mut buf, value).map_err(|e| Error::ModelFormat {
        path: path.to_owned(),
        reason: e.to_string(),
    })?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn load<T: DeserializeOwned>(path: &Path, magic: &[u8; 8]) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::ModelFormat {
        path: path.to_owned(),
        reason,
    };
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(bad(format!("not a {} file", String::from_utf8_lossy(magic))));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(format!("format version {version}, this build reads {FORMAT_VERSION}")));
    }
    bincode::deserialize(&bytes[12..]).map_err(|e| bad(e.to_string()))
}

pub fn save_index(path: impl AsRef<Path>, index: &LexicalIndex) -> Result<()> {
    save(path.as_ref(), INDEX_MAGIC, index)
}

pub fn load_index(path: impl AsRef<Path>) -> Result<LexicalIndex> {
    load(path.as_ref(), INDEX_MAGIC)
}

pub fn save_embedding(path: impl AsRef<Path>, model: &EmbeddingModel) -> Result<()> {
    save(path.as_ref(), EMBED_MAGIC, model)
}

pub fn load_embedding(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    load(path.as_ref(), EMBED_MAGIC)
}

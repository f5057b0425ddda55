//! `SWFT1` container: 5-byte magic, u64 little-endian header length, a UTF-8
//! JSON header, then raw little-endian f32 payloads at header-declared byte
//! offsets (relative to the end of the header).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::bundle::{ModelBundle, Tensor};
use crate::model::config::ArchConfig;
use crate::model::tokenizer::Tokenizer;

pub const MAGIC: &[u8; 5] = b"SWFT1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ArchConfig,
    tokenizer: Tokenizer,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

pub fn to_bytes(bundle: &ModelBundle) -> Vec<u8> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for (name, t) in bundle.tensors() {
        entries.push(TensorEntry {
            name,
            shape: t.shape.clone(),
            offset,
        });
        offset += t.data.len() * 4;
    }
    let header = Header {
        config: bundle.config,
        tokenizer: bundle.tokenizer.clone(),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");

    let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in bundle.tensors() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelBundle> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 8 {
        return Err(Error::BadHeader("truncated header length".into()));
    }
    let header_len = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
    let rest = &rest[8..];
    if rest.len() < header_len {
        return Err(Error::BadHeader("header extends past end of file".into()));
    }
    let header: Header =
        serde_json::from_slice(&rest[..header_len]).map_err(|e| Error::BadHeader(e.to_string()))?;
    let payload = &rest[header_len..];
    header.config.validate()?;

    let entries: BTreeMap<&str, &TensorEntry> = header.tensors.iter().map(|e| (e.name.as_str(), e)).collect();
    let mut tensors = BTreeMap::new();
    for (name, shape) in header.config.manifest() {
        let entry = entries.get(name.as_str()).ok_or_else(|| Error::MissingTensor(name.clone()))?;
        if entry.shape != shape {
            return Err(Error::ShapeMismatch {
                name,
                expected: shape,
                got: entry.shape.clone(),
            });
        }
        let numel: usize = shape.iter().product();
        let available = payload.len().saturating_sub(entry.offset) / 4;
        if available < numel {
            return Err(Error::ShapeMismatch {
                name,
                expected: shape,
                got: vec![available],
            });
        }
        let raw = &payload[entry.offset..entry.offset + numel * 4];
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.insert(name, Tensor::new(shape, data));
    }
    if let Some(extra) = header.tensors.iter().find(|e| !tensors.contains_key(&e.name)) {
        return Err(Error::BadHeader(format!("unexpected tensor {}", extra.name)));
    }
    ModelBundle::from_tensors(header.config, tensors, header.tokenizer)
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(bundle)).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synthetic::make_synthetic_model;

    fn tiny() -> ModelBundle {
        make_synthetic_model(3, ArchConfig::new(2, 8, 2, 12, 16, 32), &[1]).unwrap()
    }

    #[test]
    fn minimal_bundle_has_four_sublayers() {
        let b = from_bytes(&to_bytes(&tiny())).unwrap();
        assert_eq!(b.sublayers(), 4);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = to_bytes(&tiny());
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(Error::BadMagic)));
        assert!(matches!(from_bytes(b"SWF"), Err(Error::BadMagic)));
    }

    #[test]
    fn truncated_payload_is_shape_mismatch() {
        let bytes = to_bytes(&tiny());
        let cut = &bytes[..bytes.len() - 10];
        match from_bytes(cut) {
            Err(Error::ShapeMismatch { name, .. }) => assert_eq!(name, "lm_head"),
            other => panic!("expected ShapeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn nan_payload_rejected() {
        let mut bytes = to_bytes(&tiny());
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(from_bytes(&bytes), Err(Error::NonFiniteWeight(_))));
    }

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&tiny());
        assert_eq!(&bytes[..5], b"SWFT1");
        let len = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[13..13 + len]).unwrap();
        assert_eq!(header["config"]["n_blocks"], 2);
        assert_eq!(header["tensors"][0]["name"], "tok_embeddings");
        assert_eq!(header["tensors"][0]["offset"], 0);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = save_bundle(&tiny(), "/nonexistent-dir/x/model.swft").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}

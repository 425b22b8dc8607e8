//! Model checkpoints.
//!
//! Layout, little-endian: magic `MDNN`, version `u8`, `u32` length of the
//! JSON-encoded [`ModelConfig`], the JSON bytes, `u32` tensor count, then each
//! parameter as an `MDNT` tensor in layer order (weight before bias).
//! Parameters are stored as `f32`.

use std::fs;
use std::path::Path;

use super::model::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor_file::TensorFile;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MDNN";
pub const CHECKPOINT_VERSION: u8 = 1;

pub fn encode_checkpoint(model: &Model) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(model.config())?;
    let params = model.params();
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        TensorFile::new(p.dims.clone(), p.value.iter().map(|&v| v as f32).collect())?.encode(&mut out)?;
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos + n;
        if end > bytes.len() {
            return Err(Error::Truncated { needed: end, available: bytes.len() });
        }
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    let found: [u8; 4] = take(4)?.try_into().expect("4 bytes");
    if found != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { expected: CHECKPOINT_MAGIC, found });
    }
    let version = take(1)?[0];
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let config_len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let config: ModelConfig = serde_json::from_slice(take(config_len)?)?;
    let count = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;

    let template = super::model::build_model(&config, 0)?;
    let slots = template.params();
    if slots.len() != count {
        return Err(Error::shape(format!("{} parameter tensors", slots.len()), format!("{count}")));
    }
    let mut rest = &bytes[pos..];
    let mut params = Vec::with_capacity(count);
    for (i, slot) in slots.iter().enumerate() {
        let (t, used) = TensorFile::decode(rest)?;
        if t.dims != slot.dims {
            return Err(Error::shape(format!("parameter {i} dims {:?}", slot.dims), format!("{:?}", t.dims)));
        }
        params.push(t.data.into_iter().map(f64::from).collect());
        rest = &rest[used..];
    }
    if !rest.is_empty() {
        return Err(Error::DimsOverflow(format!("{} trailing bytes after last tensor", rest.len())));
    }
    Model::from_parts(&config, params)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::DimsOverflow(reason) if reason.contains("trailing") => Error::Malformed { path: path.to_path_buf(), reason },
        other => other,
    })
}

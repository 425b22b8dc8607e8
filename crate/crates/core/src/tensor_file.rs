//! `MDNT` tensor files.
//!
//! Layout, all little-endian:
//!
//! | bytes        | field                               |
//! |--------------|-------------------------------------|
//! | 4            | magic `MDNT`                        |
//! | 1            | version (1)                         |
//! | 1            | rank                                |
//! | 4 × rank     | dims, `u32`                         |
//! | 4 × Π dims   | payload, IEEE-754 `f32`, row-major  |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"MDNT";
pub const TENSOR_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let len = element_count(&dims)?;
        if len != data.len() {
            return Err(Error::shape(format!("{len} elements for dims {dims:?}"), format!("{}", data.len())));
        }
        Ok(TensorFile { dims, data })
    }

    pub fn encoded_len(&self) -> usize {
        6 + 4 * self.dims.len() + 4 * self.data.len()
    }

    pub fn encode<W: Write>(&self, mut w: W) -> Result<()> {
        if self.dims.len() > u8::MAX as usize {
            return Err(Error::DimsOverflow(format!("rank {} exceeds 255", self.dims.len())));
        }
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(&TENSOR_MAGIC);
        buf.push(TENSOR_VERSION);
        buf.push(self.dims.len() as u8);
        for &d in &self.dims {
            let d = u32::try_from(d).map_err(|_| Error::DimsOverflow(format!("dim {d} exceeds u32")))?;
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode(&mut out)?;
        Ok(out)
    }

    /// Decodes one tensor from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        let need = |needed: usize| -> Result<()> {
            if bytes.len() < needed {
                Err(Error::Truncated { needed, available: bytes.len() })
            } else {
                Ok(())
            }
        };
        need(4)?;
        let found: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if found != TENSOR_MAGIC {
            return Err(Error::BadMagic { expected: TENSOR_MAGIC, found });
        }
        need(6)?;
        if bytes[4] != TENSOR_VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        let rank = bytes[5] as usize;
        let header = 6 + 4 * rank;
        need(header)?;
        let dims: Vec<usize> =
            bytes[6..header].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize).collect();
        let len = element_count(&dims)?;
        let payload = len.checked_mul(4).ok_or_else(|| Error::DimsOverflow(format!("{dims:?}")))?;
        let total = header.checked_add(payload).ok_or_else(|| Error::DimsOverflow(format!("{dims:?}")))?;
        need(total)?;
        let data = bytes[header..total].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        Ok((TensorFile { dims, data }, total))
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n.checked_mul(4).is_some())
        .ok_or_else(|| Error::DimsOverflow(format!("{dims:?}")))
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &TensorFile) -> Result<()> {
    fs::write(path, tensor.to_bytes()?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let (t, used) = TensorFile::decode(&bytes)?;
    if used != bytes.len() {
        return Err(Error::Malformed { path: path.to_path_buf(), reason: format!("{} trailing bytes", bytes.len() - used) });
    }
    Ok(t)
}

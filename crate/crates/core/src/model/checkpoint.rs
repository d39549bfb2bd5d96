//! Model checkpoints.
//!
//! Layout (little-endian): magic `TBJM`, `u32` format version, `u32` byte
//! length of the header followed by the header itself (canonical JSON with
//! the encoder config and vocabulary hash), `u32` tensor count, then per
//! tensor a `u32` name length, the UTF-8 name, and the tensor in `TBJT`
//! encoding. Tensors are written in name order.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EncoderConfig, ParamStore, TbjeModel};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 4] = b"TBJM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: EncoderConfig,
    vocab_hash: Option<String>,
}

pub(crate) fn write_named(out: &mut Vec<u8>, tensors: &[(&str, &Tensor)]) {
    out.extend((tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        t.write_to(out).expect("writing to a Vec cannot fail");
    }
}

pub(crate) fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated file".into()))?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_named(r: &mut &[u8]) -> Result<Vec<(String, Tensor)>> {
    let count = read_u32(r)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        if r.len() < len {
            return Err(Error::Format("truncated tensor name".into()));
        }
        let name = std::str::from_utf8(&r[..len])
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        *r = &r[len..];
        out.push((name, Tensor::read_from(r)?));
    }
    Ok(out)
}

pub(crate) fn read_header<'a>(bytes: &mut &'a [u8], magic: &[u8; 4], version: u32) -> Result<&'a [u8]> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::Format(format!("bad magic, expected {:?}", std::str::from_utf8(magic).unwrap_or("?"))));
    }
    *bytes = &bytes[4..];
    let found = read_u32(bytes)?;
    if found != version {
        return Err(Error::Format(format!("format version {found}, this build reads {version}")));
    }
    let len = read_u32(bytes)? as usize;
    if bytes.len() < len {
        return Err(Error::Format("truncated header".into()));
    }
    let (header, rest) = bytes.split_at(len);
    *bytes = rest;
    Ok(header)
}

pub(crate) fn write_header(out: &mut Vec<u8>, magic: &[u8; 4], version: u32, header: &str) {
    out.extend(magic);
    out.extend(version.to_le_bytes());
    out.extend((header.len() as u32).to_le_bytes());
    out.extend(header.as_bytes());
}

impl TbjeModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_string(&Header {
            config: self.config().clone(),
            vocab_hash: self.vocab_hash().map(str::to_string),
        })
        .expect("header serialises");
        let mut out = Vec::new();
        write_header(&mut out, MODEL_MAGIC, MODEL_FORMAT_VERSION, &header);
        let named: Vec<(&str, &Tensor)> = self.params().iter().map(|(n, t)| (n.as_str(), t)).collect();
        write_named(&mut out, &named);
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let header = read_header(&mut bytes, MODEL_MAGIC, MODEL_FORMAT_VERSION)?;
        let header: Header = serde_json::from_slice(header)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let mut params = ParamStore::new();
        for (name, t) in read_named(&mut bytes)? {
            params.insert(name, t);
        }
        if !bytes.is_empty() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        TbjeModel::from_parts(header.config, params, header.vocab_hash)
    }
}

pub fn save_model(model: &TbjeModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TbjeModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TbjeModel::from_bytes(&bytes)
}

/// Loads a checkpoint and fails with a config error listing every field
/// that differs from `expected`.
pub fn load_model_expecting(path: impl AsRef<Path>, expected: &EncoderConfig) -> Result<TbjeModel> {
    let model = load_model(path)?;
    let diffs = model.config().differences(expected);
    if !diffs.is_empty() {
        return Err(Error::Config(format!(
            "checkpoint config differs from expected ({})",
            diffs.join("; ")
        )));
    }
    Ok(model)
}

//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "DMCHKPT\0"
//! version  u32 LE
//! config   u64 LE byte length, then UTF-8 JSON
//! arrays   u64 LE count, then for each: u64 LE length, length × f64 LE
//! ```
//!
//! Arrays follow [`Parameters::params`] order, then [`Parameters::buffers`].

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::deep::DeepModel;
use crate::error::{Error, Result};
use crate::params::Parameters;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DMCHKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_bytes(model: &DeepModel) -> Result<Vec<u8>> {
    let config = serde_json::to_string(model.config())?;
    let arrays: Vec<&[f64]> = model
        .params()
        .into_iter()
        .map(|p| p.value.as_slice())
        .chain(model.buffers().into_iter().map(|b| b.value.as_slice()))
        .collect();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(arrays.len() as u64).to_le_bytes());
    for a in arrays {
        out.extend_from_slice(&(a.len() as u64).to_le_bytes());
        for v in a {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(model: &DeepModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint_bytes(model)?)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!(
                "truncated while reading {what} at byte {} ({} bytes remain, {n} needed)",
                self.pos,
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} out of range")))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<DeepModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a deepmatch checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let config_len = r.u64("config length")?;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len, "config")?)
        .map_err(|e| Error::Checkpoint(format!("bad config: {e}")))?;
    let mut model = DeepModel::new(config)?;

    let count = r.u64("array count")?;
    let expected = model.params().len() + model.buffers().len();
    if count != expected {
        return Err(Error::Checkpoint(format!(
            "{count} arrays stored, model has {expected}"
        )));
    }
    let mut arrays = Vec::with_capacity(count);
    for i in 0..count {
        let len = r.u64("array length")?;
        let raw = r.take(len.saturating_mul(8), "array data")?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        arrays.push((i, values));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after last array",
            bytes.len() - r.pos
        )));
    }

    let mut arrays = arrays.into_iter();
    for p in model.params_mut() {
        let (i, v) = arrays.next().unwrap();
        if v.len() != p.value.len() {
            return Err(Error::Checkpoint(format!(
                "array {i} ({}) has {} values, expected {}",
                p.name,
                v.len(),
                p.value.len()
            )));
        }
        p.value = v;
    }
    for b in model.buffers_mut() {
        let (i, v) = arrays.next().unwrap();
        if v.len() != b.value.len() {
            return Err(Error::Checkpoint(format!(
                "array {i} ({}) has {} values, expected {}",
                b.name,
                v.len(),
                b.value.len()
            )));
        }
        b.value = v;
    }
    Ok(model)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DeepModel> {
    checkpoint_from_bytes(&fs::read(path)?)
}

//! Safetensors containers with string metadata, written atomically.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use candle_core::{Device, Tensor};
use safetensors::SafeTensors;

use crate::error::{Error, Result};

pub type Metadata = HashMap<String, String>;

/// Writes `tensors` plus `metadata` to `path` via a temporary file and rename.
pub fn save(path: &Path, tensors: &HashMap<String, Tensor>, metadata: Metadata) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let bytes = to_bytes(tensors, metadata)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn to_bytes(tensors: &HashMap<String, Tensor>, metadata: Metadata) -> Result<Vec<u8>> {
    let mut entries: Vec<(&String, &Tensor)> = tensors.iter().collect();
    entries.sort_by(|a, b| a.0.cmp(b.0));
    Ok(safetensors::serialize(entries, Some(metadata))?)
}

pub fn load(path: &Path, device: &Device) -> Result<(HashMap<String, Tensor>, Metadata)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, device)
}

pub fn from_bytes(bytes: &[u8], device: &Device) -> Result<(HashMap<String, Tensor>, Metadata)> {
    let (_, header) = SafeTensors::read_metadata(bytes)?;
    let metadata = header.metadata().clone().unwrap_or_default();
    let tensors = candle_core::safetensors::load_buffer(bytes, device)?;
    Ok((tensors, metadata))
}

pub(crate) fn require<'a>(metadata: &'a Metadata, key: &str) -> Result<&'a str> {
    metadata
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Checkpoint(format!("metadata key '{key}' missing")))
}

/// Order-independent FNV-1a digest of tensor names and values.
pub fn checksum(tensors: &HashMap<String, Tensor>) -> Result<u64> {
    let mut names: Vec<&String> = tensors.keys().collect();
    names.sort();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    };
    for name in names {
        name.bytes().for_each(&mut feed);
        let values = tensors[name]
            .to_dtype(candle_core::DType::F64)?
            .flatten_all()?
            .to_vec1::<f64>()?;
        for v in values {
            v.to_bits().to_le_bytes().into_iter().for_each(&mut feed);
        }
    }
    Ok(h)
}

//! Checkpoints are a text header (`key = value`) plus a sidecar of raw
//! little-endian `f64` parameter values at `<path>.bin`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{ConvCnp, ModelConfig};
use crate::error::{Error, Result};
use crate::kv::KvFile;

const FORMAT: &str = "sim2real-checkpoint-1";

pub fn weights_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".bin");
    PathBuf::from(s)
}

/// Writes `model` with caller-supplied metadata stored under `meta.`.
pub fn save(path: &Path, model: &ConvCnp, meta: &KvFile) -> Result<()> {
    let mut header = KvFile::new();
    header.set("format", FORMAT);
    header.set("n_params", model.params().len());
    header.merge_section("model", &model.config().to_kv());
    header.merge_section("meta", meta);
    let mut blob = Vec::with_capacity(model.params().len() * 8);
    for v in model.params().values() {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(weights_path(path), blob)?;
    header.save(path)
}

/// Returns the model and its `meta.` section.
pub fn load(path: &Path) -> Result<(ConvCnp, KvFile)> {
    let header = KvFile::load(path)?;
    match header.raw("format") {
        Some(FORMAT) => {}
        other => {
            return Err(Error::format(path, format!("unrecognised checkpoint format {other:?}")));
        }
    }
    let config = ModelConfig::from_kv(&header.section("model"))?;
    let mut model = ConvCnp::uninitialised(config)?;
    let n: usize = header.get("n_params")?;
    if n != model.params().len() {
        return Err(Error::format(
            path,
            format!("header lists {n} parameters, config implies {}", model.params().len()),
        ));
    }
    let wpath = weights_path(path);
    let blob = fs::read(&wpath)?;
    if blob.len() != n * 8 {
        return Err(Error::format(&wpath, format!("expected {} bytes, found {}", n * 8, blob.len())));
    }
    let values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    model.params_mut().set_values(values)?;
    Ok((model, header.section("meta")))
}

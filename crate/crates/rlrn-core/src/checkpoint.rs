//! Bit-exact parameter persistence.
//!
//! A checkpoint is a JSON manifest (name, shape and byte offset per
//! parameter, plus seed and step count) next to a binary blob of
//! little-endian f32 values, row-major, in manifest order. Files are
//! written to a temporary path and renamed so an interrupted run never
//! leaves a partial checkpoint behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub seed: u64,
    pub step: u64,
    pub entries: Vec<CheckpointEntry>,
}

pub struct Checkpoint;

fn manifest_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

fn blob_path(stem: &Path) -> PathBuf {
    stem.with_extension("bin")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Checkpoint {
    /// Save `params` under `stem` (producing `stem.json` + `stem.bin`).
    pub fn save(stem: &Path, params: &ParamSet, seed: u64, step: u64) -> Result<()> {
        if let Some(dir) = stem.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut entries = Vec::with_capacity(params.len());
        let mut blob: Vec<u8> = Vec::new();
        for (_, name, tensor) in params.iter() {
            entries.push(CheckpointEntry {
                name: name.to_string(),
                shape: tensor.shape().to_vec(),
                offset: blob.len() as u64,
            });
            for v in tensor.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = CheckpointManifest { seed, step, entries };
        write_atomic(&manifest_path(stem), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        write_atomic(&blob_path(stem), &blob)?;
        Ok(())
    }

    pub fn exists(stem: &Path) -> bool {
        manifest_path(stem).is_file() && blob_path(stem).is_file()
    }

    /// Load a checkpoint into a fresh [`ParamSet`] (all parameters trainable;
    /// callers apply freeze flags afterwards).
    pub fn load(stem: &Path) -> Result<(ParamSet, CheckpointManifest)> {
        let manifest_file = manifest_path(stem);
        let manifest: CheckpointManifest =
            serde_json::from_str(&fs::read_to_string(&manifest_file).map_err(|e| {
                Error::Staging(format!("missing checkpoint {}: {e}", manifest_file.display()))
            })?)?;
        let blob = fs::read(blob_path(stem))?;
        let mut params = ParamSet::new();
        for entry in &manifest.entries {
            let numel: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let end = start + numel * 4;
            if end > blob.len() {
                return Err(Error::CorruptDataset(format!(
                    "checkpoint blob truncated at parameter {}",
                    entry.name
                )));
            }
            let data: Vec<f32> = blob[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.register(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?)?;
        }
        Ok((params, manifest))
    }
}

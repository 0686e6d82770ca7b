// SPDX-License-Identifier: MIT OR Apache-2.0

//! Checkpoint directories.
//!
//! ```text
//! ckpt/
//!   manifest.json         format version, dtype, step, config, array table
//!   style_tokens.bin      raw little-endian f32, one file per array
//!   mapper.coarse.weight.bin
//!   ...
//! ```
//!
//! Each manifest entry records the array's shape, file, byte offset and
//! length within that file, and a CRC32 of its bytes. Writes go to a sibling
//! temporary directory that is renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use laekit_core::mapper::MapperParams;
use laekit_core::params::{ParamArray, ParamSet};
use laekit_core::prompt::StyleTokenTable;
use laekit_core::LaeError;
use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::config::TrainConfig;
use crate::error::Result;
use crate::state::TrainState;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const DTYPE: &str = "f32-le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
    pub byte_offset: u64,
    pub byte_len: u64,
    pub crc32: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    pub step: u64,
    pub attribute_names: Vec<String>,
    pub frozen_fingerprint: String,
    pub config: TrainConfig,
    pub arrays: Vec<ManifestEntry>,
}

fn corrupt(msg: impl Into<String>) -> LaeError {
    LaeError::CorruptCheckpoint(msg.into())
}

fn array_bytes(a: &ParamArray) -> Vec<u8> {
    a.data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn all_arrays(state: &TrainState) -> Vec<&ParamArray> {
    let mut out = state.param_arrays();
    out.extend(&state.adam.first);
    out.extend(&state.adam.second);
    out
}

fn temp_sibling(dir: &Path, tag: &str) -> Result<PathBuf> {
    let name = dir
        .file_name()
        .ok_or_else(|| LaeError::InvalidArgument(format!("checkpoint path {} has no final component", dir.display())))?;
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    Ok(parent.join(format!(".{}.{tag}-{}", name.to_string_lossy(), std::process::id())))
}

/// Write `state` to the directory `dir`, replacing any existing checkpoint.
pub fn save_checkpoint(state: &TrainState, dir: &Path) -> Result<Manifest> {
    let tmp = temp_sibling(dir, "tmp")?;
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    let mut entries = Vec::new();
    for a in all_arrays(state) {
        let bytes = array_bytes(a);
        let file = format!("{}.bin", a.name);
        let mut f = fs::File::create(tmp.join(&file))?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        entries.push(ManifestEntry {
            name: a.name.clone(),
            shape: a.shape.clone(),
            file,
            byte_offset: 0,
            byte_len: bytes.len() as u64,
            crc32: crc32fast::hash(&bytes),
        });
    }
    let manifest = Manifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        dtype: DTYPE.into(),
        step: state.step,
        attribute_names: state.attribute_names().to_vec(),
        frozen_fingerprint: state.frozen_fingerprint(),
        config: state.config.clone(),
        arrays: entries,
    };
    let mut f = fs::File::create(tmp.join(MANIFEST_FILE))?;
    f.write_all(&serde_json::to_vec_pretty(&manifest)?)?;
    f.sync_all()?;

    if dir.exists() {
        let old = temp_sibling(dir, "old")?;
        if old.exists() {
            fs::remove_dir_all(&old)?;
        }
        fs::rename(dir, &old)?;
        fs::rename(&tmp, dir)?;
        fs::remove_dir_all(&old)?;
    } else {
        fs::rename(&tmp, dir)?;
    }
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(corrupt(format!("{} has no {MANIFEST_FILE}", dir.display())).into());
    }
    let manifest: Manifest =
        serde_json::from_slice(&fs::read(&path)?).map_err(|e| corrupt(format!("unreadable manifest: {e}")))?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(LaeError::UnsupportedVersion { found: manifest.format_version, expected: CHECKPOINT_FORMAT_VERSION }.into());
    }
    if manifest.dtype != DTYPE {
        return Err(corrupt(format!("unsupported dtype {}", manifest.dtype)).into());
    }
    Ok(manifest)
}

fn read_array(dir: &Path, manifest: &Manifest, name: &str) -> Result<ParamArray> {
    let entry = manifest.arrays.iter().find(|e| e.name == name).ok_or_else(|| corrupt(format!("missing array {name}")))?;
    if entry.file.contains(['/', '\\']) || entry.file.starts_with('.') {
        return Err(corrupt(format!("array {name} points outside the checkpoint")).into());
    }
    let bytes = fs::read(dir.join(&entry.file)).map_err(|e| corrupt(format!("array file {}: {e}", entry.file)))?;
    let start = entry.byte_offset as usize;
    let raw = bytes
        .get(start..start + entry.byte_len as usize)
        .ok_or_else(|| corrupt(format!("array {name} is truncated")))?;
    if crc32fast::hash(raw) != entry.crc32 {
        return Err(corrupt(format!("checksum mismatch in {name}")).into());
    }
    let count: usize = entry.shape.iter().product();
    if raw.len() != count * 4 {
        return Err(corrupt(format!("array {name} holds {} bytes for shape {:?}", raw.len(), entry.shape)).into());
    }
    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok(ParamArray::new(name, entry.shape.clone(), data)?)
}

/// Rebuild a training state. The frozen bundles are reconstructed from the
/// stored config and must hash to the recorded fingerprint.
pub fn load_checkpoint(dir: &Path) -> Result<TrainState> {
    let manifest = read_manifest(dir)?;
    let fresh = TrainState::new(manifest.config.clone())?;
    if fresh.frozen_fingerprint() != manifest.frozen_fingerprint {
        return Err(corrupt("frozen backbone or encoder weights differ from the ones this checkpoint was trained with").into());
    }
    if fresh.attribute_names() != manifest.attribute_names.as_slice() {
        return Err(corrupt("attribute list in manifest disagrees with its config").into());
    }
    let names: Vec<String> = fresh.param_arrays().iter().map(|a| a.name.clone()).collect();
    let read = |n: &str| read_array(dir, &manifest, n);
    let params = names.iter().map(|n| read(n)).collect::<Result<Vec<_>>>()?;
    let first = names.iter().map(|n| read(&crate::adam::first_moment_name(n))).collect::<Result<Vec<_>>>()?;
    let second = names.iter().map(|n| read(&crate::adam::second_moment_name(n))).collect::<Result<Vec<_>>>()?;

    let mut params = params.into_iter();
    let tokens = StyleTokenTable::from_array(manifest.attribute_names.clone(), params.next().expect("token array"))?;
    let mapper_arrays: Vec<ParamArray> = params.by_ref().take(6).collect();
    let mapper = MapperParams::from_arrays(
        fresh.mapper.latent_dim(),
        fresh.mapper.embed_dim(),
        manifest.config.edit_scale,
        ParamSet::new(mapper_arrays),
    )?;
    let alpha = ParamSet::new(params.collect());
    if alpha.arrays.iter().chain(&mapper.arrays().arrays).chain(std::iter::once(tokens.array())).any(|a| !a.is_finite()) {
        return Err(corrupt("non-finite parameter values").into());
    }
    let TrainState { config, backbone, encoders, split, .. } = fresh;
    TrainState::from_parts(
        config,
        backbone,
        encoders,
        split,
        tokens,
        mapper,
        alpha,
        Some(AdamState { first, second }),
        manifest.step,
    )
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Single-file backbone export format.
//!
//! Layout: 8-byte magic `LAEKITBB`, little-endian `u32` header length, a JSON
//! [`BackboneFileHeader`], then the raw `f64` little-endian payload. Each
//! array entry records its byte offset into the payload and a CRC32.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    BackboneBundle, BackboneKind, LatentDims, LinearMapping, LinearMpiGenerator, MpiCompositor, PlaneConfig,
};
use crate::error::{LaeError, Result};
use crate::mpi::CompositorConfig;

pub const BACKBONE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"LAEKITBB";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub len: usize,
    pub offset: usize,
    pub crc32: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneFileHeader {
    pub format_version: u32,
    pub kind: BackboneKind,
    pub dtype: String,
    pub z_dim: usize,
    pub latent_dim: usize,
    pub n_layers: usize,
    pub image_size: usize,
    pub planes: PlaneConfig,
    pub parallax_px: f64,
    pub alpha_branch_grid: usize,
    pub arrays: Vec<ArrayEntry>,
}

const ARRAYS: [&str; 6] = ["mapping.weight", "mapping.offsets", "generator.depths", "generator.color_weight", "generator.color_bias", "generator.alpha_base"];

/// Write the frozen parts of a linear-family backbone under the declared `kind`.
pub fn export_backbone(
    kind: BackboneKind,
    mapping: &LinearMapping,
    generator: &LinearMpiGenerator,
    compositor: CompositorConfig,
    path: &Path,
) -> Result<()> {
    let sources: [&[f64]; 6] = [
        &mapping.weight,
        &mapping.layer_offsets,
        &generator.depths,
        &generator.color_weight,
        &generator.color_bias,
        &generator.alpha_base,
    ];
    let mut payload = Vec::new();
    let mut arrays = Vec::new();
    for (name, data) in ARRAYS.iter().zip(sources) {
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        arrays.push(ArrayEntry { name: name.to_string(), len: data.len(), offset: payload.len(), crc32: crc32fast::hash(&bytes) });
        payload.extend_from_slice(&bytes);
    }
    let header = BackboneFileHeader {
        format_version: BACKBONE_FORMAT_VERSION,
        kind,
        dtype: "f64-le".into(),
        z_dim: mapping.z_dim,
        latent_dim: generator.dims.dim,
        n_layers: generator.dims.n_layers,
        image_size: generator.size,
        planes: generator.planes,
        parallax_px: compositor.parallax_px,
        alpha_branch_grid: generator.branch_grid,
        arrays,
    };
    let json = serde_json::to_vec(&header)?;
    let mut f = fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(json.len() as u32).to_le_bytes())?;
    f.write_all(&json)?;
    f.write_all(&payload)?;
    f.sync_all()?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> LaeError {
    LaeError::CorruptCheckpoint(msg.into())
}

/// Parse and integrity-check a backbone file, returning its header and arrays
/// in the fixed order of the format.
pub fn read_backbone_file(path: &Path) -> Result<(BackboneFileHeader, Vec<Vec<f64>>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(corrupt(format!("{} is not a backbone file", path.display())));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: BackboneFileHeader = serde_json::from_slice(body).map_err(|e| corrupt(format!("bad header: {e}")))?;
    if header.format_version != BACKBONE_FORMAT_VERSION {
        return Err(LaeError::UnsupportedVersion { found: header.format_version, expected: BACKBONE_FORMAT_VERSION });
    }
    if header.dtype != "f64-le" {
        return Err(corrupt(format!("unsupported dtype {}", header.dtype)));
    }
    let payload = &bytes[12 + hlen..];
    let mut out = Vec::with_capacity(ARRAYS.len());
    for name in ARRAYS {
        let entry = header.arrays.iter().find(|a| a.name == name).ok_or_else(|| corrupt(format!("missing array {name}")))?;
        let raw = payload
            .get(entry.offset..entry.offset + entry.len * 8)
            .ok_or_else(|| corrupt(format!("array {name} extends past end of file")))?;
        if crc32fast::hash(raw) != entry.crc32 {
            return Err(corrupt(format!("checksum mismatch in {name}")));
        }
        out.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect());
    }
    Ok((header, out))
}

pub(super) fn load_backbone_file(kind: BackboneKind, path: &Path) -> Result<BackboneBundle> {
    let (header, mut arrays) = read_backbone_file(path)?;
    if header.kind != kind {
        return Err(LaeError::KindMismatch { requested: kind.to_string(), found: header.kind.to_string() });
    }
    let dims = LatentDims { dim: header.latent_dim, n_layers: header.n_layers };
    let alpha_base = arrays.pop().expect("six arrays");
    let color_bias = arrays.pop().expect("six arrays");
    let color_weight = arrays.pop().expect("six arrays");
    let depths = arrays.pop().expect("six arrays");
    let offsets = arrays.pop().expect("six arrays");
    let weight = arrays.pop().expect("six arrays");
    let mapping = LinearMapping::new(header.z_dim, dims, weight, offsets).map_err(|e| corrupt(e.to_string()))?;
    let generator = LinearMpiGenerator::new(header.image_size, dims, header.planes, depths, color_weight, color_bias, alpha_base, header.alpha_branch_grid)
        .map_err(|e| corrupt(e.to_string()))?;
    let compositor = CompositorConfig { parallax_px: header.parallax_px };
    Ok(BackboneBundle {
        kind,
        mapping: Arc::new(mapping),
        generator: Arc::new(generator),
        renderer: Arc::new(MpiCompositor { config: compositor }),
        compositor,
    })
}

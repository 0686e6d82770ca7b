// SPDX-License-Identifier: MIT OR Apache-2.0

//! PNG output and pose-sweep directories.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LaeError, Result};
use crate::mpi::RenderedImage;
use crate::pose::CameraPose;

/// Write an 8-bit RGB PNG.
pub fn write_png(image: &RenderedImage, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let size = u32::try_from(image.size()).map_err(|_| LaeError::Shape("image too large for PNG".into()))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), size, size);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&image.to_rgb8())?;
    writer.finish()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub yaw: f64,
    pub pitch: f64,
    pub file: String,
}

/// `index.json` of a pose sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepIndex {
    pub attribute: Option<String>,
    pub poses: Vec<SweepEntry>,
}

/// Write one PNG per render, named by pose, plus `index.json`.
pub fn write_pose_sweep(dir: &Path, attribute: Option<&str>, renders: &[RenderedImage]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut poses = Vec::with_capacity(renders.len());
    for img in renders {
        let CameraPose { yaw, pitch } = img.pose();
        let file = format!("{}.png", img.pose().file_stem());
        if poses.iter().any(|e: &SweepEntry| e.file == file) {
            return Err(LaeError::InvalidArgument(format!("two sweep poses share the file name {file}")));
        }
        write_png(img, &dir.join(&file))?;
        poses.push(SweepEntry { yaw, pitch, file });
    }
    let index = SweepIndex { attribute: attribute.map(str::to_string), poses };
    let path = dir.join("index.json");
    fs::write(&path, serde_json::to_vec_pretty(&index)?)?;
    Ok(path)
}

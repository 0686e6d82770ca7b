// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multiplane images and the reference differentiable compositor.
//!
//! An MPI is one shared RGB texture plus `L` fronto-parallel alpha planes at
//! increasing depth (plane 0 is nearest). Rendering at a pose translates each
//! plane by a parallax offset `k * (tan yaw, tan pitch) / depth` and
//! over-composites back to front onto a black background.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, LaeError, Result};
use crate::pose::CameraPose;
use crate::tape::{Graph, ImageGeom, Var};

/// Compositor settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositorConfig {
    /// Pixel shift of a plane at unit depth when `tan(angle) = 1`.
    pub parallax_px: f64,
}

impl Default for CompositorConfig {
    fn default() -> Self {
        Self { parallax_px: 4.0 }
    }
}

impl CompositorConfig {
    pub fn plane_offset(&self, pose: CameraPose, depth: f64) -> (f64, f64) {
        let dx = self.parallax_px * pose.yaw.to_radians().tan() / depth;
        let dy = self.parallax_px * pose.pitch.to_radians().tan() / depth;
        (dx, dy)
    }
}

/// `n` plane depths evenly spaced over `[near, far]`.
pub fn plane_depths(n: usize, near: f64, far: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![near],
        _ => (0..n).map(|i| near + (far - near) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiplaneImage {
    size: usize,
    color: Vec<f64>,
    alphas: Vec<Vec<f64>>,
    depths: Vec<f64>,
}

fn in_unit(v: &[f64]) -> bool {
    v.iter().all(|x| (0.0..=1.0).contains(x))
}

impl MultiplaneImage {
    pub fn new(size: usize, color: Vec<f64>, alphas: Vec<Vec<f64>>, depths: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(LaeError::InvalidArgument("multiplane image needs at least one plane".into()));
        }
        if color.len() != size * size * 3 {
            return Err(LaeError::Shape(format!("color has {} values, expected {}", color.len(), size * size * 3)));
        }
        if alphas.len() != depths.len() {
            return Err(LaeError::Shape(format!("{} alpha planes but {} depths", alphas.len(), depths.len())));
        }
        if alphas.iter().any(|a| a.len() != size * size) {
            return Err(LaeError::Shape("alpha plane size does not match texture".into()));
        }
        if !in_unit(&color) {
            return Err(LaeError::InvalidRange("color values outside [0, 1]".into()));
        }
        if !alphas.iter().all(|a| in_unit(a)) {
            return Err(LaeError::InvalidRange("alpha values outside [0, 1]".into()));
        }
        ensure_finite(&depths, "plane depths")?;
        if depths.windows(2).any(|w| w[0] >= w[1]) || depths[0] <= 0.0 {
            return Err(LaeError::InvalidRange("plane depths must be positive and strictly increasing".into()));
        }
        Ok(Self { size, color, alphas, depths })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn color(&self) -> &[f64] {
        &self.color
    }

    pub fn alphas(&self) -> &[Vec<f64>] {
        &self.alphas
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn n_planes(&self) -> usize {
        self.alphas.len()
    }

    /// Place this MPI on a graph as constants.
    pub fn to_vars(&self, g: &mut Graph) -> MpiVars {
        MpiVars {
            size: self.size,
            color: g.constant(self.color.clone()),
            alphas: self.alphas.iter().map(|a| g.constant(a.clone())).collect(),
            depths: self.depths.clone(),
            alpha_logits: None,
        }
    }
}

/// Graph-resident MPI, as produced by a generator.
#[derive(Clone, Debug)]
pub struct MpiVars {
    pub size: usize,
    pub color: Var,
    pub alphas: Vec<Var>,
    pub depths: Vec<f64>,
    /// Raw output of the trainable alpha branch, when the generator has one.
    pub alpha_logits: Option<Var>,
}

impl MpiVars {
    pub fn to_value(&self, g: &Graph) -> Result<MultiplaneImage> {
        MultiplaneImage::new(
            self.size,
            g.value(self.color).to_vec(),
            self.alphas.iter().map(|&a| g.value(a).to_vec()).collect(),
            self.depths.clone(),
        )
    }
}

/// RGB image in `[0, 1]`, row-major `(y, x, channel)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    size: usize,
    pixels: Vec<f64>,
    pose: CameraPose,
}

impl RenderedImage {
    pub fn new(size: usize, pixels: Vec<f64>, pose: CameraPose) -> Result<Self> {
        if pixels.len() != size * size * 3 {
            return Err(LaeError::Shape(format!("{} pixel values for a {size}x{size} RGB image", pixels.len())));
        }
        ensure_finite(&pixels, "rendered image")?;
        if !in_unit(&pixels) {
            return Err(LaeError::InvalidRange("pixel values outside [0, 1]".into()));
        }
        Ok(Self { size, pixels, pose })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pose(&self) -> CameraPose {
        self.pose
    }

    pub fn geom(&self) -> ImageGeom {
        ImageGeom::new(self.size, self.size, 3)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }
}

/// Differentiable back-to-front compositing of `mpi` at `pose`.
pub fn composite_vars(g: &mut Graph, mpi: &MpiVars, pose: CameraPose, cfg: &CompositorConfig) -> Var {
    let rgb = ImageGeom::new(mpi.size, mpi.size, 3);
    let mono = ImageGeom::new(mpi.size, mpi.size, 1);
    let mut acc = g.constant(vec![0.0; rgb.len()]);
    for (alpha, &depth) in mpi.alphas.iter().zip(&mpi.depths).rev() {
        let (dx, dy) = cfg.plane_offset(pose, depth);
        let color = g.shift2d(mpi.color, rgb, dx, dy);
        let a = g.shift2d(*alpha, mono, dx, dy);
        let a3 = g.repeat_channels(a, 3);
        let front = g.mul(color, a3);
        let keep = g.one_minus(a3);
        let behind = g.mul(acc, keep);
        acc = g.add(front, behind);
    }
    acc
}

/// Render an MPI at a pose with the reference compositor.
pub fn composite_mpi(mpi: &MultiplaneImage, pose: CameraPose, cfg: &CompositorConfig) -> Result<RenderedImage> {
    let mut g = Graph::new();
    let vars = mpi.to_vars(&mut g);
    let out = composite_vars(&mut g, &vars, pose, cfg);
    // over-compositing of unit-range inputs can overshoot 1 by an ulp
    let pixels = g.value(out).iter().map(|v| v.clamp(0.0, 1.0)).collect();
    RenderedImage::new(mpi.size, pixels, pose)
}

/// Per-pixel expected depth under the compositing weights, with the
/// uncovered remainder placed at the farthest plane.
pub fn depth_map(mpi: &MultiplaneImage, pose: CameraPose, cfg: &CompositorConfig) -> Vec<f64> {
    let mono = ImageGeom::new(mpi.size, mpi.size, 1);
    let mut g = Graph::new();
    let shifted: Vec<Vec<f64>> = mpi
        .alphas
        .iter()
        .zip(&mpi.depths)
        .map(|(a, &d)| {
            let (dx, dy) = cfg.plane_offset(pose, d);
            let v = g.constant(a.clone());
            let s = g.shift2d(v, mono, dx, dy);
            g.value(s).to_vec()
        })
        .collect();
    let far = *mpi.depths.last().expect("validated non-empty");
    (0..mono.len())
        .map(|p| {
            let mut transmit = 1.0;
            let mut depth = 0.0;
            for (a, &d) in shifted.iter().zip(&mpi.depths) {
                depth += transmit * a[p] * d;
                transmit *= 1.0 - a[p];
            }
            depth + transmit * far
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mpi(rng: &mut ChaCha8Rng, size: usize, planes: usize) -> MultiplaneImage {
        MultiplaneImage::new(
            size,
            (0..size * size * 3).map(|_| rng.random()).collect(),
            (0..planes).map(|_| (0..size * size).map(|_| rng.random()).collect()).collect(),
            plane_depths(planes, 0.95, 1.12),
        )
        .unwrap()
    }

    #[test]
    fn opaque_single_plane_reproduces_texture() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let color: Vec<f64> = (0..8 * 8 * 3).map(|_| rng.random()).collect();
        let mpi = MultiplaneImage::new(8, color.clone(), vec![vec![1.0; 64]], vec![1.0]).unwrap();
        let out = composite_mpi(&mpi, CameraPose::FRONTAL, &CompositorConfig::default()).unwrap();
        assert_eq!(out.pixels(), color.as_slice());
    }

    #[test]
    fn transparent_planes_give_background() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut mpi = random_mpi(&mut rng, 8, 3);
        mpi.alphas.iter_mut().for_each(|a| a.fill(0.0));
        let pose = CameraPose::new(20.0, -10.0).unwrap();
        let out = composite_mpi(&mpi, pose, &CompositorConfig::default()).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn opaque_front_plane_occludes_everything_behind() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mpi = random_mpi(&mut rng, 8, 4);
        mpi.alphas[0].fill(1.0);
        let front_only = MultiplaneImage::new(8, mpi.color.clone(), vec![vec![1.0; 64]], vec![0.95]).unwrap();
        let a = composite_mpi(&mpi, CameraPose::FRONTAL, &CompositorConfig::default()).unwrap();
        let b = composite_mpi(&front_only, CameraPose::FRONTAL, &CompositorConfig::default()).unwrap();
        assert_eq!(a.pixels(), b.pixels());
    }

    #[test]
    fn two_plane_frontal_matches_over_operator_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mpi = random_mpi(&mut rng, 6, 2);
        let out = composite_mpi(&mpi, CameraPose::FRONTAL, &CompositorConfig::default()).unwrap();
        for p in 0..36 {
            let (af, ab) = (mpi.alphas[0][p], mpi.alphas[1][p]);
            for c in 0..3 {
                let col = mpi.color[p * 3 + c];
                let expect = col * af + col * ab * (1.0 - af);
                assert!((out.pixels()[p * 3 + c] - expect).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn rejects_invalid_planes() {
        assert!(MultiplaneImage::new(2, vec![0.5; 12], vec![], vec![]).is_err());
        assert!(MultiplaneImage::new(2, vec![0.5; 12], vec![vec![1.5; 4]], vec![1.0]).is_err());
        assert!(MultiplaneImage::new(2, vec![0.5; 12], vec![vec![0.5; 4]; 2], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn outputs_stay_in_unit_range_at_extreme_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mpi = random_mpi(&mut rng, 8, 4);
        for (y, p) in [(-30.0, -20.0), (30.0, 20.0), (17.3, -4.2)] {
            let out = composite_mpi(&mpi, CameraPose::new(y, p).unwrap(), &CompositorConfig::default()).unwrap();
            assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn depth_map_of_opaque_plane_is_its_depth() {
        let mpi = MultiplaneImage::new(4, vec![0.5; 48], vec![vec![0.0; 16], vec![1.0; 16]], vec![1.0, 1.1]).unwrap();
        let d = depth_map(&mpi, CameraPose::FRONTAL, &CompositorConfig::default());
        assert!(d.iter().all(|&v| (v - 1.1).abs() < 1e-12));
    }
}

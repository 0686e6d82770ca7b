// SPDX-License-Identifier: MIT OR Apache-2.0

//! Depth and pose accuracy of renders against pseudo ground truth.
//!
//! The pseudo ground truth for a render is the compositor's expected depth
//! of the MPI it came from and the pose it was requested at. Per sample the
//! depth error is the RMS difference over pixels; the pose error is the mean
//! squared yaw/pitch difference in radians.

use laekit_core::backbones::labelled_rng;
use laekit_core::mpi::depth_map;
use laekit_core::{sample_pose, CameraPose, CompositorConfig, MultiplaneImage, RenderedImage};
use laekit_train::{Branch, TrainState};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::identity::edit_target;

/// Everything an estimator may look at for one render.
pub struct EstimatorInput<'a> {
    pub image: &'a RenderedImage,
    pub mpi: &'a MultiplaneImage,
    pub pose: CameraPose,
    pub compositor: &'a CompositorConfig,
}

pub trait DepthEstimator: Send + Sync {
    /// One depth per pixel.
    fn estimate_depth(&self, input: &EstimatorInput<'_>) -> std::result::Result<Vec<f64>, String>;
}

pub trait PoseEstimator: Send + Sync {
    fn estimate_pose(&self, input: &EstimatorInput<'_>) -> std::result::Result<CameraPose, String>;
}

/// Reads the compositor's own depth.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleDepth;

impl DepthEstimator for OracleDepth {
    fn estimate_depth(&self, input: &EstimatorInput<'_>) -> std::result::Result<Vec<f64>, String> {
        Ok(depth_map(input.mpi, input.pose, input.compositor))
    }
}

/// Returns the requested pose.
#[derive(Clone, Copy, Debug, Default)]
pub struct OraclePose;

impl PoseEstimator for OraclePose {
    fn estimate_pose(&self, input: &EstimatorInput<'_>) -> std::result::Result<CameraPose, String> {
        Ok(input.pose)
    }
}

/// Compositor depth smoothed by a `(2r+1)²` box filter with edge clamping,
/// standing in for a learned estimator that misses fine structure.
#[derive(Clone, Copy, Debug)]
pub struct BoxBlurDepth {
    pub radius: usize,
}

impl DepthEstimator for BoxBlurDepth {
    fn estimate_depth(&self, input: &EstimatorInput<'_>) -> std::result::Result<Vec<f64>, String> {
        let d = depth_map(input.mpi, input.pose, input.compositor);
        let n = input.mpi.size();
        let r = self.radius as isize;
        let at = |y: isize, x: isize| d[y.clamp(0, n as isize - 1) as usize * n + x.clamp(0, n as isize - 1) as usize];
        let area = ((2 * r + 1) * (2 * r + 1)) as f64;
        Ok((0..n * n)
            .map(|p| {
                let (y, x) = ((p / n) as isize, (p % n) as isize);
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        acc += at(y + dy, x + dx);
                    }
                }
                acc / area
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    /// Edited latents through the trained alpha branch.
    #[default]
    Edited,
    /// Original latents through the original alpha branch.
    Unedited,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseDepthOptions {
    pub n_samples: usize,
    pub mode: RenderMode,
    pub attribute: Option<String>,
    pub seed: u64,
}

impl Default for PoseDepthOptions {
    fn default() -> Self {
        Self { n_samples: 1000, mode: RenderMode::Edited, attribute: None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseDepthSample {
    pub sample: usize,
    pub yaw: f64,
    pub pitch: f64,
    pub depth_err: f64,
    pub pose_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseDepthError {
    pub depth_err: f64,
    pub pose_err: f64,
    pub samples: Vec<PoseDepthSample>,
}

pub fn rms_difference(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn pose_squared_error(requested: CameraPose, estimated: CameraPose) -> f64 {
    let dy = (requested.yaw - estimated.yaw).to_radians();
    let dp = (requested.pitch - estimated.pitch).to_radians();
    (dy * dy + dp * dp) / 2.0
}

pub fn pose_depth_error(
    state: &TrainState,
    depth: &dyn DepthEstimator,
    pose: &dyn PoseEstimator,
    opts: &PoseDepthOptions,
) -> Result<PoseDepthError> {
    if opts.n_samples == 0 {
        return Err(EvalError::Empty("n_samples is 0".into()));
    }
    let mut latent_rng = labelled_rng(opts.seed, "eval.depth.latents");
    let mut pose_rng = labelled_rng(opts.seed, "eval.depth.poses");
    let cfg = &state.backbone.compositor;
    let mut samples = Vec::with_capacity(opts.n_samples);
    for i in 0..opts.n_samples {
        let w = state.sample_latent(&mut latent_rng)?;
        let requested = sample_pose(&mut pose_rng, state.config.yaw_range, state.config.pitch_range)?;
        let mpi = match opts.mode {
            RenderMode::Edited => state.generate(&state.edit(&w, edit_target(state, opts.attribute.as_deref(), i)?)?, Branch::Trained)?,
            RenderMode::Unedited => state.generate(&w, Branch::Original)?,
        };
        let image = laekit_core::composite_mpi(&mpi, requested, cfg)?;
        let input = EstimatorInput { image: &image, mpi: &mpi, pose: requested, compositor: cfg };
        let failed = |message: String| EvalError::Estimator { index: i, message };
        let est_depth = depth.estimate_depth(&input).map_err(failed)?;
        let est_pose = pose.estimate_pose(&input).map_err(failed)?;
        let truth = depth_map(&mpi, requested, cfg);
        if est_depth.len() != truth.len() {
            return Err(failed(format!("depth map has {} values, expected {}", est_depth.len(), truth.len())));
        }
        samples.push(PoseDepthSample {
            sample: i,
            yaw: requested.yaw,
            pitch: requested.pitch,
            depth_err: rms_difference(&est_depth, &truth),
            pose_err: pose_squared_error(requested, est_pose),
        });
    }
    let n = samples.len() as f64;
    Ok(PoseDepthError {
        depth_err: samples.iter().map(|s| s.depth_err).sum::<f64>() / n,
        pose_err: samples.iter().map(|s| s.pose_err).sum::<f64>() / n,
        samples,
    })
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Camera poses and the sampling protocols used for training and sweeps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LaeError, Result};

/// Yaw/pitch in degrees, both within `[-90, 90]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub yaw: f64,
    pub pitch: f64,
}

impl CameraPose {
    pub const FRONTAL: CameraPose = CameraPose { yaw: 0.0, pitch: 0.0 };

    pub fn new(yaw: f64, pitch: f64) -> Result<Self> {
        let ok = |a: f64| a.is_finite() && (-90.0..=90.0).contains(&a);
        if !ok(yaw) || !ok(pitch) {
            return Err(LaeError::InvalidRange(format!("pose ({yaw}, {pitch}) outside [-90, 90] degrees")));
        }
        Ok(Self { yaw, pitch })
    }

    pub fn is_frontal(&self) -> bool {
        self.yaw == 0.0 && self.pitch == 0.0
    }

    /// File stem used by pose sweeps, e.g. `yaw-30_pitch+20`.
    pub fn file_stem(&self) -> String {
        format!("yaw{:+03}_pitch{:+03}", self.yaw.round() as i64, self.pitch.round() as i64)
    }
}

/// Closed angular interval in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleRange {
    pub min: f64,
    pub max: f64,
}

impl AngleRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        let r = Self { min, max };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min <= self.max) || self.min < -90.0 || self.max > 90.0 {
            return Err(LaeError::InvalidRange(format!("[{}, {}] is not an ordered range within [-90, 90]", self.min, self.max)));
        }
        Ok(())
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    /// `n` evenly spaced values with exact endpoints.
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.mid()],
            _ => (0..n)
                .map(|i| {
                    if i == 0 {
                        self.min
                    } else if i == n - 1 {
                        self.max
                    } else {
                        let t = i as f64 / (n - 1) as f64;
                        self.min * (1.0 - t) + self.max * t
                    }
                })
                .collect(),
        }
    }
}

/// Arrangement of the poses returned by [`pose_grid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoseLayout {
    /// `sqrt(n) x sqrt(n)` Cartesian grid; `n` must be a perfect square.
    Grid,
    /// `n` poses moving jointly from `(yaw_min, pitch_min)` to `(yaw_max, pitch_max)`.
    Diagonal,
}

/// Deterministic pose set over the given ranges. In grid mode poses are
/// ordered pitch-major (rows) then yaw (columns).
pub fn pose_grid(yaw: AngleRange, pitch: AngleRange, n: usize, layout: PoseLayout) -> Result<Vec<CameraPose>> {
    yaw.validate()?;
    pitch.validate()?;
    if n < 1 {
        return Err(LaeError::InvalidArgument("pose count must be at least 1".into()));
    }
    match layout {
        PoseLayout::Grid => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(LaeError::InvalidArgument(format!("grid layout needs a perfect square, got {n}")));
            }
            let (ys, ps) = (yaw.linspace(side), pitch.linspace(side));
            ps.iter().flat_map(|&p| ys.iter().map(move |&y| CameraPose::new(y, p))).collect()
        }
        PoseLayout::Diagonal => {
            let (ys, ps) = (yaw.linspace(n), pitch.linspace(n));
            ys.into_iter().zip(ps).map(|(y, p)| CameraPose::new(y, p)).collect()
        }
    }
}

/// Uniform pose within the ranges.
pub fn sample_pose<R: Rng + ?Sized>(rng: &mut R, yaw: AngleRange, pitch: AngleRange) -> Result<CameraPose> {
    yaw.validate()?;
    pitch.validate()?;
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    CameraPose::new(yaw.min + (yaw.max - yaw.min) * u, pitch.min + (pitch.max - pitch.min) * v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(a: f64, b: f64) -> AngleRange {
        AngleRange::new(a, b).unwrap()
    }

    #[test]
    fn nine_pose_grid_has_corners_and_center() {
        let poses = pose_grid(r(-30.0, 30.0), r(-20.0, 20.0), 9, PoseLayout::Grid).unwrap();
        assert_eq!(poses.len(), 9);
        assert_eq!(poses[0], CameraPose { yaw: -30.0, pitch: -20.0 });
        assert_eq!(poses[4], CameraPose { yaw: 0.0, pitch: 0.0 });
        assert_eq!(poses[8], CameraPose { yaw: 30.0, pitch: 20.0 });
    }

    #[test]
    fn degenerate_single_pose() {
        let poses = pose_grid(r(0.0, 0.0), r(0.0, 0.0), 1, PoseLayout::Grid).unwrap();
        assert_eq!(poses, vec![CameraPose::FRONTAL]);
    }

    #[test]
    fn twenty_five_pose_grid_steps() {
        let poses = pose_grid(r(-30.0, 30.0), r(-20.0, 20.0), 25, PoseLayout::Grid).unwrap();
        // oracle: numpy-style linspace with 5 points
        let yaws: Vec<f64> = (0..5).map(|i| -30.0 + 15.0 * i as f64).collect();
        let pitches: Vec<f64> = (0..5).map(|i| -20.0 + 10.0 * i as f64).collect();
        for (k, p) in poses.iter().enumerate() {
            assert!((p.yaw - yaws[k % 5]).abs() < 1e-12);
            assert!((p.pitch - pitches[k / 5]).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_layout_walks_both_axes() {
        let poses = pose_grid(r(-30.0, 30.0), r(-20.0, 20.0), 5, PoseLayout::Diagonal).unwrap();
        assert_eq!(poses.first().unwrap(), &CameraPose { yaw: -30.0, pitch: -20.0 });
        assert_eq!(poses.last().unwrap(), &CameraPose { yaw: 30.0, pitch: 20.0 });
    }

    #[test]
    fn invalid_requests_are_rejected() {
        assert!(pose_grid(r(-30.0, 30.0), r(-20.0, 20.0), 0, PoseLayout::Grid).is_err());
        assert!(pose_grid(r(-30.0, 30.0), r(-20.0, 20.0), 8, PoseLayout::Grid).is_err());
        assert!(AngleRange::new(10.0, -10.0).is_err());
        let inverted = AngleRange { min: 5.0, max: -5.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_pose(&mut rng, inverted, r(0.0, 0.0)).is_err());
        assert!(CameraPose::new(91.0, 0.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_centered() {
        let (y, p) = (r(-30.0, 30.0), r(-20.0, 20.0));
        let a = sample_pose(&mut ChaCha8Rng::seed_from_u64(9), y, p).unwrap();
        let b = sample_pose(&mut ChaCha8Rng::seed_from_u64(9), y, p).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mean = (0..10_000).map(|_| sample_pose(&mut rng, y, p).unwrap().yaw).sum::<f64>() / 10_000.0;
        assert!(mean.abs() <= 1.5, "mean yaw {mean}");
    }

    #[test]
    fn zero_width_sampling_returns_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pose = sample_pose(&mut rng, r(12.0, 12.0), r(-3.0, -3.0)).unwrap();
        assert_eq!(pose, CameraPose { yaw: 12.0, pitch: -3.0 });
    }

    #[test]
    fn file_stems_are_signed_and_padded() {
        assert_eq!(CameraPose { yaw: -30.0, pitch: 20.0 }.file_stem(), "yaw-30_pitch+20");
        assert_eq!(CameraPose::FRONTAL.file_stem(), "yaw+00_pitch+00");
    }
}

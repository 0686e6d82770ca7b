// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multi-pose identity similarity, bucketed by absolute yaw.

use laekit_core::backbones::labelled_rng;
use laekit_core::losses::cosine;
use laekit_core::{sample_pose, AngleRange, CameraPose};
use laekit_train::{Branch, TrainState};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

/// Absolute-yaw interval in degrees. Half-open unless `closed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseBucket {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub closed: bool,
}

impl PoseBucket {
    pub fn new(label: impl Into<String>, lo: f64, hi: f64, closed: bool) -> Result<Self> {
        if !(lo >= 0.0 && lo < hi && hi <= 90.0) {
            return Err(EvalError::InvalidArgument(format!("bad yaw bucket [{lo}, {hi}]")));
        }
        Ok(Self { label: label.into(), lo, hi, closed })
    }

    pub fn contains(&self, yaw: f64) -> bool {
        let a = yaw.abs();
        a >= self.lo && (a < self.hi || (self.closed && a == self.hi))
    }

    /// `[0, 10)` and `[10, 30]`.
    pub fn defaults() -> Vec<PoseBucket> {
        vec![
            PoseBucket { label: "ID(0-10)".into(), lo: 0.0, hi: 10.0, closed: false },
            PoseBucket { label: "ID(10-30)".into(), lo: 10.0, hi: 30.0, closed: true },
        ]
    }
}

/// What each edited render is compared against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityReference {
    /// The original latent rendered at the same pose.
    #[default]
    SamePose,
    /// The original latent rendered frontally.
    OriginalFrontal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentitySweepOptions {
    pub n_samples: usize,
    pub buckets: Vec<PoseBucket>,
    /// Edit one attribute; `None` cycles through all of them.
    pub attribute: Option<String>,
    pub reference: IdentityReference,
    pub seed: u64,
}

impl Default for IdentitySweepOptions {
    fn default() -> Self {
        Self { n_samples: 1000, buckets: PoseBucket::defaults(), attribute: None, reference: IdentityReference::SamePose, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketMean {
    pub label: String,
    pub mean: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentitySample {
    pub sample: usize,
    pub attribute: String,
    pub yaw: f64,
    pub pitch: f64,
    pub bucket: String,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentitySweep {
    pub buckets: Vec<BucketMean>,
    pub samples: Vec<IdentitySample>,
}

/// Attribute edited for sample `i`.
pub(crate) fn edit_target(state: &TrainState, attribute: Option<&str>, i: usize) -> Result<usize> {
    match attribute {
        Some(name) => state.attribute_index(name).map_err(|_| EvalError::UnknownAttribute(name.to_string())),
        None => Ok(i % state.n_attributes()),
    }
}

/// Sample `i` lands in bucket `i mod n_buckets`: |yaw| is drawn uniformly
/// inside the bucket with a random sign, pitch from the configured range.
pub fn identity_sweep(state: &TrainState, opts: &IdentitySweepOptions) -> Result<IdentitySweep> {
    if opts.buckets.is_empty() {
        return Err(EvalError::Empty("no pose buckets".into()));
    }
    if opts.n_samples < opts.buckets.len() {
        return Err(EvalError::Empty(format!("{} samples cannot fill {} buckets", opts.n_samples, opts.buckets.len())));
    }
    let mut latent_rng = labelled_rng(opts.seed, "eval.identity.latents");
    let mut pose_rng = labelled_rng(opts.seed, "eval.identity.poses");
    let pitch = state.config.pitch_range;
    let mut samples = Vec::with_capacity(opts.n_samples);
    for i in 0..opts.n_samples {
        let attr = edit_target(state, opts.attribute.as_deref(), i)?;
        let bucket = &opts.buckets[i % opts.buckets.len()];
        let magnitude = sample_pose(&mut pose_rng, AngleRange::new(bucket.lo, bucket.hi)?, pitch)?;
        let sign = if pose_rng.random::<bool>() { 1.0 } else { -1.0 };
        let pose = CameraPose::new(sign * magnitude.yaw, magnitude.pitch)?;

        let w = state.sample_latent(&mut latent_rng)?;
        let edited = state.render(&state.edit(&w, attr)?, pose, Branch::Trained)?;
        let reference_pose = match opts.reference {
            IdentityReference::SamePose => pose,
            IdentityReference::OriginalFrontal => CameraPose::FRONTAL,
        };
        let original = state.render(&w, reference_pose, Branch::Original)?;
        let similarity = cosine(&state.identity_embedding(&edited)?, &state.identity_embedding(&original)?)?;
        samples.push(IdentitySample {
            sample: i,
            attribute: state.attribute_names()[attr].clone(),
            yaw: pose.yaw,
            pitch: pose.pitch,
            bucket: bucket.label.clone(),
            similarity,
        });
    }
    let buckets = opts
        .buckets
        .iter()
        .map(|b| {
            let hits: Vec<f64> = samples.iter().filter(|s| s.bucket == b.label).map(|s| s.similarity).collect();
            if hits.is_empty() {
                return Err(EvalError::Empty(format!("bucket {} received no samples", b.label)));
            }
            Ok(BucketMean { label: b.label.clone(), mean: hits.iter().sum::<f64>() / hits.len() as f64, count: hits.len() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IdentitySweep { buckets, samples })
}

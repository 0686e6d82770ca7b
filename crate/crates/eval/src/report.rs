// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end evaluation of a checkpoint and its JSON/CSV output.

use std::fs;
use std::path::Path;

use laekit_core::backbones::labelled_rng;
use laekit_core::{CameraPose, RenderedImage};
use laekit_train::{Branch, TrainState};
use serde::{Deserialize, Serialize};

use crate::attributes::attribute_scores;
use crate::classifier::{AttributeClassifier, LinearProbeClassifier};
use crate::depth::{pose_depth_error, DepthEstimator, PoseDepthOptions, PoseEstimator, RenderMode};
use crate::error::{EvalError, Result};
use crate::identity::{identity_sweep, BucketMean, IdentityReference, IdentitySweepOptions, PoseBucket};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    pub attribute: String,
    pub altering: f64,
    pub dependency: f64,
    pub count: usize,
}

/// One per-sample value, as written to CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub metric: String,
    pub attribute: String,
    pub sample: usize,
    pub yaw: f64,
    pub pitch: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub step: u64,
    pub attributes: Vec<AttributeReport>,
    pub identity: Vec<BucketMean>,
    pub depth_err: f64,
    pub pose_err: f64,
    pub depth_count: usize,
    #[serde(skip)]
    pub rows: Vec<SampleRow>,
}

impl MetricReport {
    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_pretty()? + "\n")?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = csv::Writer::from_path(path)?;
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub n_samples: usize,
    /// Latents used to calibrate the classifier's σ.
    pub n_reference: usize,
    pub buckets: Vec<PoseBucket>,
    pub reference: IdentityReference,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { n_samples: 1000, n_reference: 64, buckets: PoseBucket::defaults(), reference: IdentityReference::SamePose, seed: 0 }
    }
}

/// Frontal renders of `n` latents through the original branch.
pub fn reference_renders(state: &TrainState, n: usize, seed: u64) -> Result<Vec<RenderedImage>> {
    let mut rng = labelled_rng(seed, "eval.reference");
    (0..n).map(|_| Ok(state.render(&state.sample_latent(&mut rng)?, CameraPose::FRONTAL, Branch::Original)?)).collect()
}

/// Band probe over the checkpoint's attributes, calibrated on its own
/// unedited renders.
pub fn toy_classifier(state: &TrainState, n_reference: usize, seed: u64) -> Result<LinearProbeClassifier> {
    let size = state.backbone.dims().image_size;
    LinearProbeClassifier::bands(state.attribute_names().to_vec(), size)?.calibrate(&reference_renders(state, n_reference, seed)?)
}

/// Frontal (edited, original) render pairs for one attribute.
pub fn frontal_pairs(state: &TrainState, attribute: usize, n: usize, seed: u64) -> Result<(Vec<RenderedImage>, Vec<RenderedImage>)> {
    let mut rng = labelled_rng(seed, &format!("eval.pairs.{attribute}"));
    let mut edited = Vec::with_capacity(n);
    let mut originals = Vec::with_capacity(n);
    for _ in 0..n {
        let w = state.sample_latent(&mut rng)?;
        edited.push(state.render(&state.edit(&w, attribute)?, CameraPose::FRONTAL, Branch::Trained)?);
        originals.push(state.render(&w, CameraPose::FRONTAL, Branch::Original)?);
    }
    Ok((edited, originals))
}

pub fn evaluate_checkpoint(
    state: &TrainState,
    clf: &dyn AttributeClassifier,
    depth: &dyn DepthEstimator,
    pose: &dyn PoseEstimator,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    if opts.n_samples == 0 {
        return Err(EvalError::Empty("n_samples is 0".into()));
    }
    let mut rows = Vec::new();
    let mut attributes = Vec::new();
    for (i, name) in state.attribute_names().iter().enumerate() {
        let (edited, originals) = frontal_pairs(state, i, opts.n_samples, opts.seed)?;
        let scores = attribute_scores(&edited, &originals, name, clf)?;
        for (metric, values) in [("aa", &scores.per_sample_altering), ("ad", &scores.per_sample_dependency)] {
            rows.extend(values.iter().enumerate().map(|(s, &value)| SampleRow {
                metric: metric.into(),
                attribute: name.clone(),
                sample: s,
                yaw: 0.0,
                pitch: 0.0,
                value,
            }));
        }
        attributes.push(AttributeReport { attribute: name.clone(), altering: scores.altering, dependency: scores.dependency, count: edited.len() });
    }

    let sweep = identity_sweep(
        state,
        &IdentitySweepOptions { n_samples: opts.n_samples, buckets: opts.buckets.clone(), attribute: None, reference: opts.reference, seed: opts.seed },
    )?;
    rows.extend(sweep.samples.iter().map(|s| SampleRow {
        metric: "id".into(),
        attribute: s.attribute.clone(),
        sample: s.sample,
        yaw: s.yaw,
        pitch: s.pitch,
        value: s.similarity,
    }));

    let pd = pose_depth_error(state, depth, pose, &PoseDepthOptions { n_samples: opts.n_samples, mode: RenderMode::Edited, attribute: None, seed: opts.seed })?;
    for s in &pd.samples {
        for (metric, value) in [("depth", s.depth_err), ("pose", s.pose_err)] {
            rows.push(SampleRow { metric: metric.into(), attribute: String::new(), sample: s.sample, yaw: s.yaw, pitch: s.pitch, value });
        }
    }
    Ok(MetricReport {
        step: state.step,
        attributes,
        identity: sweep.buckets,
        depth_err: pd.depth_err,
        pose_err: pd.pose_err,
        depth_count: pd.samples.len(),
        rows,
    })
}

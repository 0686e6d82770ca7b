// SPDX-License-Identifier: MIT OR Apache-2.0

//! Evaluation of trained editors: attribute altering and dependency,
//! identity similarity across poses, depth and pose error, prompt
//! perturbations and a prompt-bias probe.

pub mod attributes;
pub mod bias;
pub mod classifier;
pub mod depth;
pub mod error;
pub mod identity;
pub mod perturb;
pub mod report;

pub use attributes::{attribute_altering, attribute_dependency, attribute_scores, AttributeScores};
pub use bias::{prompt_bias_probe, BiasTable};
pub use classifier::{AttributeClassifier, LinearProbeClassifier};
pub use depth::{pose_depth_error, BoxBlurDepth, DepthEstimator, OracleDepth, OraclePose, PoseDepthError, PoseDepthOptions, PoseEstimator, RenderMode};
pub use error::{EvalError, Result};
pub use identity::{identity_sweep, IdentityReference, IdentitySweep, IdentitySweepOptions, PoseBucket};
pub use perturb::{perturb_prompt, PerturbationKind};
pub use report::{evaluate_checkpoint, toy_classifier, EvalOptions, MetricReport};

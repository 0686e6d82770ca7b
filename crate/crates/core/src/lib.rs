// SPDX-License-Identifier: MIT OR Apache-2.0

//! Text-driven latent attribute editing for multiplane-image generators.
//!
//! Everything differentiable is built on the reverse-mode [`tape::Graph`].
//! Trainable state is stored in single precision ([`params::ParamArray`]) and
//! promoted to `f64` when bound into a graph.

pub mod backbones;
pub mod error;
pub mod io;
pub mod latent;
pub mod losses;
pub mod mapper;
pub mod mpi;
pub mod params;
pub mod pose;
pub mod prompt;
pub mod tape;

pub use error::{LaeError, Result};
pub use latent::{apply_edit, merge_latent, split_latent, EditDirection, LatentCode, LatentSplit, LayerGroup};
pub use losses::{LossBreakdown, LossTerms, LossWeights};
pub use mpi::{composite_mpi, CompositorConfig, MultiplaneImage, RenderedImage};
pub use pose::{pose_grid, sample_pose, AngleRange, CameraPose, PoseLayout};
pub use prompt::{AttributeSpec, EmbeddingVector, PromptAssembly, StyleTokenTable, SystemPrompt};

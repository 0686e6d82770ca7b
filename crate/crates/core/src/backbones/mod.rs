// SPDX-License-Identifier: MIT OR Apache-2.0

//! Adapter contracts for the frozen generator stack and the three encoders.
//!
//! Every component computes on a [`Graph`] so that losses can be
//! differentiated end to end. Frozen weights live outside the graph (see
//! [`Graph::frozen_matvec`]); the only generator parameters that ever become
//! graph leaves are the alpha-branch arrays passed to
//! [`MpiGenerator::generate`].

mod file;
mod linear;
pub mod toy;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LaeError, Result};
use crate::latent::LatentCode;
use crate::mpi::{composite_vars, CompositorConfig, MpiVars};
use crate::params::ParamSet;
use crate::pose::CameraPose;
use crate::tape::{Graph, Var};

pub use file::{export_backbone, read_backbone_file, BackboneFileHeader, BACKBONE_FORMAT_VERSION};
pub use linear::{bilinear_upsample_matrix, LinearMapping, LinearMpiGenerator, ALPHA_BRANCH_BIAS, ALPHA_BRANCH_WEIGHT};
pub use toy::{labelled_rng, toy_backbone, toy_encoders, ToyConfig, ToyIdentityEncoder, ToyImageEncoder, ToyTextEncoder};

/// Backbone families reachable through [`load_backbone`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Toy,
    Gmpi,
    Eg3d,
    Stylenerf,
    Cips3d,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 5] = [Self::Toy, Self::Gmpi, Self::Eg3d, Self::Stylenerf, Self::Cips3d];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Toy => "toy",
            Self::Gmpi => "gmpi",
            Self::Eg3d => "eg3d",
            Self::Stylenerf => "stylenerf",
            Self::Cips3d => "cips3d",
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackboneKind {
    type Err = LaeError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| LaeError::InvalidArgument(format!("unknown backbone kind {s:?}")))
    }
}

/// Latent layout of a backbone's W+ space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentDims {
    pub dim: usize,
    pub n_layers: usize,
}

/// Plane counts and depth bounds of an MPI generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneConfig {
    pub train_planes: usize,
    pub infer_planes: usize,
    pub near: f64,
    pub far: f64,
}

impl PlaneConfig {
    /// Plane counts and depth range used with the multiplane backbone.
    pub const MULTIPLANE: PlaneConfig = PlaneConfig { train_planes: 32, infer_planes: 96, near: 0.95, far: 1.12 };
}

/// Dimensions a bundle reports when it is loaded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleDims {
    pub latent_dim: usize,
    pub n_layers: usize,
    pub image_size: usize,
    pub planes: usize,
}

pub trait MappingNetwork: Send + Sync {
    fn z_dim(&self) -> usize;
    fn map(&self, z: &[f64]) -> Result<LatentCode>;
    fn update_digest(&self, hasher: &mut Sha256);
}

pub trait MpiGenerator: Send + Sync {
    fn dims(&self) -> LatentDims;
    fn image_size(&self) -> usize;
    fn planes(&self) -> PlaneConfig;
    fn n_planes(&self) -> usize;
    /// Pretrained alpha-branch parameters; the only trainable generator state.
    fn alpha_branch_init(&self) -> ParamSet;
    /// MPI for a flat `n_layers x dim` latent with the given alpha-branch
    /// arrays (same order as [`MpiGenerator::alpha_branch_init`]).
    fn generate(&self, g: &mut Graph, w: Var, alpha_branch: &[Var]) -> Result<MpiVars>;
    fn update_digest(&self, hasher: &mut Sha256);
}

pub trait Renderer: Send + Sync {
    fn render(&self, g: &mut Graph, mpi: &MpiVars, pose: CameraPose) -> Var;
    fn update_digest(&self, hasher: &mut Sha256);
}

/// Continuous-prompt text encoder. Word embedding happens once at setup;
/// `encode` consumes token-embedding sequences so learnable slots can
/// bypass tokenisation.
pub trait TextEncoder: Send + Sync {
    fn token_dim(&self) -> usize;
    fn embed_dim(&self) -> usize;
    fn context_len(&self) -> usize;
    /// Start and end token embeddings.
    fn special_tokens(&self) -> (Vec<f64>, Vec<f64>);
    fn embed_words(&self, text: &str) -> Vec<Vec<f64>>;
    fn encode(&self, g: &mut Graph, sequence: &[Var]) -> Result<Var>;
    fn update_digest(&self, hasher: &mut Sha256);
}

pub trait ImageEncoder: Send + Sync {
    fn embed_dim(&self) -> usize;
    fn encode(&self, g: &mut Graph, image: Var, size: usize) -> Result<Var>;
    fn update_digest(&self, hasher: &mut Sha256);
}

pub trait IdentityEncoder: Send + Sync {
    fn embed_dim(&self) -> usize;
    fn encode(&self, g: &mut Graph, image: Var, size: usize) -> Result<Var>;
    fn update_digest(&self, hasher: &mut Sha256);
}

/// The reference compositor as a [`Renderer`].
#[derive(Clone, Copy, Debug, Default)]
pub struct MpiCompositor {
    pub config: CompositorConfig,
}

impl Renderer for MpiCompositor {
    fn render(&self, g: &mut Graph, mpi: &MpiVars, pose: CameraPose) -> Var {
        composite_vars(g, mpi, pose, &self.config)
    }

    fn update_digest(&self, hasher: &mut Sha256) {
        hasher.update(b"compositor");
        hasher.update(self.config.parallax_px.to_le_bytes());
    }
}

#[derive(Clone)]
pub struct BackboneBundle {
    pub kind: BackboneKind,
    pub mapping: Arc<dyn MappingNetwork>,
    pub generator: Arc<dyn MpiGenerator>,
    pub renderer: Arc<dyn Renderer>,
    pub compositor: CompositorConfig,
}

impl fmt::Debug for BackboneBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackboneBundle").field("kind", &self.kind).field("dims", &self.dims()).finish()
    }
}

impl BackboneBundle {
    pub fn dims(&self) -> BundleDims {
        let d = self.generator.dims();
        BundleDims {
            latent_dim: d.dim,
            n_layers: d.n_layers,
            image_size: self.generator.image_size(),
            planes: self.generator.n_planes(),
        }
    }
}

#[derive(Clone)]
pub struct EncoderBundle {
    pub text: Arc<dyn TextEncoder>,
    pub image: Arc<dyn ImageEncoder>,
    pub identity: Arc<dyn IdentityEncoder>,
}

impl fmt::Debug for EncoderBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EncoderBundle")
            .field("token_dim", &self.text.token_dim())
            .field("embed_dim", &self.text.embed_dim())
            .field("identity_dim", &self.identity.embed_dim())
            .finish()
    }
}

impl EncoderBundle {
    pub fn validate(&self) -> Result<()> {
        if self.text.embed_dim() != self.image.embed_dim() {
            return Err(LaeError::Shape(format!(
                "text ({}) and image ({}) encoders must share an embedding dimension",
                self.text.embed_dim(),
                self.image.embed_dim()
            )));
        }
        Ok(())
    }
}

/// SHA-256 over every frozen weight of the backbone and encoders, hex encoded.
pub fn frozen_fingerprint(backbone: &BackboneBundle, encoders: &EncoderBundle) -> String {
    let mut h = Sha256::new();
    backbone.mapping.update_digest(&mut h);
    backbone.generator.update_digest(&mut h);
    backbone.renderer.update_digest(&mut h);
    encoders.text.update_digest(&mut h);
    encoders.image.update_digest(&mut h);
    encoders.identity.update_digest(&mut h);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn digest_f64(hasher: &mut Sha256, label: &str, values: &[f64]) {
    hasher.update(label.as_bytes());
    for v in values {
        hasher.update(v.to_le_bytes());
    }
}

/// Resolve a backbone by kind. The toy kind is built from `toy` when no
/// file is given; every other kind requires an exported backbone file whose
/// header declares the same kind.
pub fn load_backbone(kind: BackboneKind, path: Option<&Path>, toy: &ToyConfig) -> Result<BackboneBundle> {
    let bundle = match (kind, path) {
        (BackboneKind::Toy, None) => toy_backbone(toy)?,
        (_, Some(p)) => file::load_backbone_file(kind, p)?,
        (k, None) => {
            return Err(LaeError::InvalidArgument(format!("backbone kind {k} needs a checkpoint path")));
        }
    };
    let d = bundle.dims();
    log::info!(
        "loaded {} backbone: D_w={} N_layers={} H={} L={}",
        bundle.kind,
        d.latent_dim,
        d.n_layers,
        d.image_size,
        d.planes
    );
    Ok(bundle)
}

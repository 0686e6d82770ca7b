// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic toy backbone and encoders.
//!
//! All frozen weights derive from one seed; each component draws from its
//! own labelled ChaCha stream so changing one dimension does not reshuffle
//! the others. Textures are smooth random fields (a coarse Gaussian grid
//! bilinearly upsampled) so small parallax shifts behave like camera motion.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    digest_f64, BackboneBundle, BackboneKind, EncoderBundle, IdentityEncoder, ImageEncoder, LatentDims, LinearMapping,
    LinearMpiGenerator, MpiCompositor, PlaneConfig, TextEncoder,
};
use crate::error::{LaeError, Result};
use crate::mpi::{plane_depths, CompositorConfig};
use crate::tape::{Graph, ImageGeom, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub seed: u64,
    pub latent_dim: usize,
    pub n_layers: usize,
    pub image_size: usize,
    pub planes: usize,
    pub z_dim: usize,
    pub token_dim: usize,
    pub embed_dim: usize,
    pub identity_dim: usize,
    pub context_len: usize,
    pub parallax_px: f64,
    pub near: f64,
    pub far: f64,
    /// Side of the coarse grid that textures are upsampled from.
    pub texture_cells: usize,
    /// Scale of frozen word embeddings.
    pub word_scale: f64,
    /// Gain of the text projection before `tanh`.
    pub text_gain: f64,
    /// Gain of the image projection before `tanh`.
    pub image_gain: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            latent_dim: 32,
            n_layers: 12,
            image_size: 32,
            planes: 4,
            z_dim: 32,
            token_dim: 32,
            embed_dim: 64,
            identity_dim: 64,
            context_len: 32,
            parallax_px: 2.0,
            near: 0.95,
            far: 1.12,
            texture_cells: 8,
            word_scale: 0.02,
            text_gain: 4.0,
            image_gain: 2.0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.latent_dim,
            self.image_size,
            self.planes,
            self.z_dim,
            self.token_dim,
            self.embed_dim,
            self.identity_dim,
            self.context_len,
            self.texture_cells,
        ];
        if positive.contains(&0) || self.n_layers < 3 {
            return Err(LaeError::InvalidArgument("toy dimensions must be positive with at least 3 layers".into()));
        }
        if self.image_size % 4 != 0 {
            return Err(LaeError::InvalidArgument("toy image size must be divisible by 4".into()));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(LaeError::InvalidRange(format!("near/far {}/{}", self.near, self.far)));
        }
        Ok(())
    }
}

/// FNV-1a, used to derive stable per-label streams.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Independent deterministic stream for `label` under `seed`.
pub fn labelled_rng(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(label.as_bytes()).rotate_left(17))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| std * { let x: f64 = StandardNormal.sample(rng); x }).collect::<Vec<f64>>()
}

/// Smooth `size x size x channels` field: Gaussian values on a
/// `cells x cells` grid, bilinearly upsampled with aligned corners.
fn smooth_field(rng: &mut ChaCha8Rng, size: usize, cells: usize, channels: usize, std: f64) -> Vec<f64> {
    let grid = gaussian(rng, cells * cells * channels, std);
    let coord = |p: usize| -> (usize, usize, f64) {
        if cells == 1 || size == 1 {
            return (0, 0, 0.0);
        }
        let t = p as f64 * (cells - 1) as f64 / (size - 1) as f64;
        let i0 = (t.floor() as usize).min(cells - 2);
        (i0, i0 + 1, t - i0 as f64)
    };
    let mut out = Vec::with_capacity(size * size * channels);
    for y in 0..size {
        let (y0, y1, fy) = coord(y);
        for x in 0..size {
            let (x0, x1, fx) = coord(x);
            for c in 0..channels {
                let at = |yy: usize, xx: usize| grid[(yy * cells + xx) * channels + c];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    out
}

/// Row-major `(size*size*channels) x cols` matrix whose columns are smooth fields.
fn smooth_matrix(rng: &mut ChaCha8Rng, size: usize, cells: usize, channels: usize, cols: usize, std: f64) -> Vec<f64> {
    let columns: Vec<Vec<f64>> = (0..cols).map(|_| smooth_field(rng, size, cells, channels, std)).collect();
    let rows = size * size * channels;
    let mut m = vec![0.0; rows * cols];
    for (j, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            m[r * cols + j] = *v;
        }
    }
    m
}

pub fn toy_backbone(cfg: &ToyConfig) -> Result<BackboneBundle> {
    cfg.validate()?;
    let dims = LatentDims { dim: cfg.latent_dim, n_layers: cfg.n_layers };
    let mut rng = labelled_rng(cfg.seed, "toy.mapping");
    let mapping = LinearMapping::new(
        cfg.z_dim,
        dims,
        gaussian(&mut rng, cfg.latent_dim * cfg.z_dim, 1.0 / (cfg.z_dim as f64).sqrt()),
        gaussian(&mut rng, cfg.n_layers * cfg.latent_dim, 0.3),
    )?;

    let (size, cells, d) = (cfg.image_size, cfg.texture_cells, cfg.latent_dim);
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut rng = labelled_rng(cfg.seed, "toy.generator.color");
    let color_weight = smooth_matrix(&mut rng, size, cells, 3, d, 1.5 * inv_sqrt_d);
    let color_bias = smooth_field(&mut rng, size, cells, 3, 0.5);
    let mut rng = labelled_rng(cfg.seed, "toy.generator.alpha");
    let alpha_base: Vec<f64> = (0..cfg.planes)
        .flat_map(|_| smooth_matrix(&mut rng, size, cells, 1, d, 2.0 * inv_sqrt_d))
        .collect();
    let planes = PlaneConfig { train_planes: cfg.planes, infer_planes: cfg.planes, near: cfg.near, far: cfg.far };
    let generator = LinearMpiGenerator::new(
        size,
        dims,
        planes,
        plane_depths(cfg.planes, cfg.near, cfg.far),
        color_weight,
        color_bias,
        alpha_base,
        cfg.texture_cells.min(size),
    )?;
    let compositor = CompositorConfig { parallax_px: cfg.parallax_px };
    Ok(BackboneBundle {
        kind: BackboneKind::Toy,
        mapping: Arc::new(mapping),
        generator: Arc::new(generator),
        renderer: Arc::new(MpiCompositor { config: compositor }),
        compositor,
    })
}

/// `tanh(P · mean(sequence))` over hashed word embeddings.
#[derive(Clone, Debug)]
pub struct ToyTextEncoder {
    seed: u64,
    token_dim: usize,
    embed_dim: usize,
    context_len: usize,
    word_scale: f64,
    projection: Arc<[f64]>,
    sos: Vec<f64>,
    eos: Vec<f64>,
}

impl ToyTextEncoder {
    pub fn new(cfg: &ToyConfig) -> Self {
        let mut rng = labelled_rng(cfg.seed, "toy.text.projection");
        let projection = gaussian(&mut rng, cfg.embed_dim * cfg.token_dim, cfg.text_gain / (cfg.token_dim as f64).sqrt());
        let mut rng = labelled_rng(cfg.seed, "toy.text.special");
        let sos = gaussian(&mut rng, cfg.token_dim, cfg.word_scale);
        let eos = gaussian(&mut rng, cfg.token_dim, cfg.word_scale);
        Self {
            seed: cfg.seed,
            token_dim: cfg.token_dim,
            embed_dim: cfg.embed_dim,
            context_len: cfg.context_len,
            word_scale: cfg.word_scale,
            projection: projection.into(),
            sos,
            eos,
        }
    }

    fn word(&self, word: &str) -> Vec<f64> {
        let mut rng = labelled_rng(self.seed, &format!("toy.text.word:{}", word.to_lowercase()));
        gaussian(&mut rng, self.token_dim, self.word_scale)
    }
}

impl TextEncoder for ToyTextEncoder {
    fn token_dim(&self) -> usize {
        self.token_dim
    }

    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn context_len(&self) -> usize {
        self.context_len
    }

    fn special_tokens(&self) -> (Vec<f64>, Vec<f64>) {
        (self.sos.clone(), self.eos.clone())
    }

    fn embed_words(&self, text: &str) -> Vec<Vec<f64>> {
        text.split_whitespace().map(|w| self.word(w)).collect()
    }

    fn encode(&self, g: &mut Graph, sequence: &[Var]) -> Result<Var> {
        if sequence.is_empty() {
            return Err(LaeError::InvalidArgument("empty token sequence".into()));
        }
        if sequence.iter().any(|&s| g.value(s).len() != self.token_dim) {
            return Err(LaeError::Shape(format!("token embeddings must have dimension {}", self.token_dim)));
        }
        let stacked = g.concat(sequence);
        let mean = g.mean_rows(stacked, sequence.len(), self.token_dim);
        let proj = g.frozen_matvec(&self.projection, mean, self.embed_dim, self.token_dim);
        Ok(g.tanh(proj))
    }

    fn update_digest(&self, hasher: &mut Sha256) {
        hasher.update(self.seed.to_le_bytes());
        digest_f64(hasher, "text.projection", &self.projection);
        digest_f64(hasher, "text.sos", &self.sos);
        digest_f64(hasher, "text.eos", &self.eos);
    }
}

/// `tanh(E · (pixels - 0.5))`; each row of `E` is a smooth random field.
#[derive(Clone, Debug)]
pub struct ToyImageEncoder {
    size: usize,
    embed_dim: usize,
    projection: Arc<[f64]>,
}

impl ToyImageEncoder {
    pub fn new(cfg: &ToyConfig) -> Self {
        let n = cfg.image_size * cfg.image_size * 3;
        let mut rng = labelled_rng(cfg.seed, "toy.image.projection");
        let projection: Vec<f64> = (0..cfg.embed_dim)
            .flat_map(|_| smooth_field(&mut rng, cfg.image_size, cfg.texture_cells, 3, cfg.image_gain / (n as f64).sqrt()))
            .collect();
        Self { size: cfg.image_size, embed_dim: cfg.embed_dim, projection: projection.into() }
    }
}

fn check_image(g: &Graph, image: Var, size: usize, expect: usize) -> Result<()> {
    if size != expect || g.value(image).len() != size * size * 3 {
        return Err(LaeError::Shape(format!("encoder expects {expect}x{expect}x3 images")));
    }
    Ok(())
}

impl ImageEncoder for ToyImageEncoder {
    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn encode(&self, g: &mut Graph, image: Var, size: usize) -> Result<Var> {
        check_image(g, image, size, self.size)?;
        let centered = g.affine(image, 1.0, -0.5);
        let proj = g.frozen_matvec(&self.projection, centered, self.embed_dim, size * size * 3);
        Ok(g.tanh(proj))
    }

    fn update_digest(&self, hasher: &mut Sha256) {
        digest_f64(hasher, "image.projection", &self.projection);
    }
}

/// Unit-norm projection of 4x4 average-pooled, centered pixels.
#[derive(Clone, Debug)]
pub struct ToyIdentityEncoder {
    size: usize,
    embed_dim: usize,
    projection: Arc<[f64]>,
}

pub const IDENTITY_POOL: usize = 4;

impl ToyIdentityEncoder {
    pub fn new(cfg: &ToyConfig) -> Self {
        let pooled = (cfg.image_size / IDENTITY_POOL).pow(2) * 3;
        let mut rng = labelled_rng(cfg.seed, "toy.identity.projection");
        let projection = gaussian(&mut rng, cfg.identity_dim * pooled, 1.0 / (pooled as f64).sqrt());
        Self { size: cfg.image_size, embed_dim: cfg.identity_dim, projection: projection.into() }
    }
}

impl IdentityEncoder for ToyIdentityEncoder {
    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn encode(&self, g: &mut Graph, image: Var, size: usize) -> Result<Var> {
        check_image(g, image, size, self.size)?;
        let pooled = g.avg_pool(image, ImageGeom::new(size, size, 3), IDENTITY_POOL);
        let centered = g.affine(pooled, 1.0, -0.5);
        let n = g.value(centered).len();
        let proj = g.frozen_matvec(&self.projection, centered, self.embed_dim, n);
        let norm = g.norm(proj);
        if g.scalar(norm) == 0.0 {
            return Err(LaeError::ZeroNorm("identity embedding".into()));
        }
        Ok(g.div_scalar(proj, norm))
    }

    fn update_digest(&self, hasher: &mut Sha256) {
        digest_f64(hasher, "identity.projection", &self.projection);
    }
}

pub fn toy_encoders(cfg: &ToyConfig) -> Result<EncoderBundle> {
    cfg.validate()?;
    let bundle = EncoderBundle {
        text: Arc::new(ToyTextEncoder::new(cfg)),
        image: Arc::new(ToyImageEncoder::new(cfg)),
        identity: Arc::new(ToyIdentityEncoder::new(cfg)),
    };
    bundle.validate()?;
    Ok(bundle)
}

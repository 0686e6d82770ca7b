// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scalar-loop reference implementations used as test oracles. Nothing here
//! goes through the tape; every sum is an explicit loop.

#![allow(dead_code)]

pub mod suite;

pub use suite::loss_oracle_suite;

use std::sync::Arc;

use laekit_core::backbones::{IdentityEncoder, ImageEncoder};
use laekit_core::latent::{LatentCode, LatentSplit};
use laekit_core::mapper::MapperParams;
use laekit_core::tape::{Graph, ImageGeom, Var};
use laekit_core::{CameraPose, LaeError, MultiplaneImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::Digest;

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    // Box-Muller, so the oracle does not share the crate's sampler
    (0..n)
        .map(|_| {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

pub fn loop_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn loop_norm(a: &[f64]) -> f64 {
    loop_dot(a, a).sqrt()
}

pub fn loop_cosine(a: &[f64], b: &[f64]) -> f64 {
    loop_dot(a, b) / (loop_norm(a) * loop_norm(b))
}

fn unit(a: &[f64]) -> Vec<f64> {
    let n = loop_norm(a);
    a.iter().map(|v| v / n).collect()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn loop_dclip(edited: &[Vec<f64>], source: &[Vec<f64>], targets: &[Vec<f64>], source_text: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..edited.len() {
        let di = diff(&unit(&edited[i]), &unit(&source[i]));
        let dt = diff(&unit(&targets[i]), &unit(source_text));
        total += 1.0 - loop_cosine(&di, &dt);
    }
    total
}

pub fn loop_contrastive(embs: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for i in 0..embs.len() {
        for j in 0..embs.len() {
            if i < j {
                total += loop_cosine(&embs[i], &embs[j]);
            }
        }
    }
    total
}

/// `Δw` for every layer, with weights read from the stored arrays.
pub fn loop_map_edit(w: &LatentCode, dv: &[f64], mapper: &MapperParams, split: &LatentSplit) -> Vec<f64> {
    let d = w.dim();
    let e = dv.len();
    let mut out = vec![0.0; w.n_layers() * d];
    for layer in 0..w.n_layers() {
        let group = split.group_of(layer).expect("layer in split");
        let weight = &mapper.weight(group).data;
        let bias = &mapper.bias(group).data;
        let input: Vec<f64> = w.layer(layer).iter().chain(dv).copied().collect();
        for r in 0..d {
            let mut acc = f64::from(bias[r]);
            for c in 0..d + e {
                acc += f64::from(weight[r * (d + e) + c]) * input[c];
            }
            out[layer * d + r] = mapper.edit_scale() * acc;
        }
    }
    out
}

/// Bilinear translation with zero padding: output `(x, y)` samples input
/// `(x - dx, y - dy)`.
pub fn loop_shift(img: &[f64], size: usize, channels: usize, dx: f64, dy: f64) -> Vec<f64> {
    let mut out = vec![0.0; img.len()];
    let sample = |y: i64, x: i64, c: usize| -> f64 {
        if y < 0 || x < 0 || y >= size as i64 || x >= size as i64 {
            0.0
        } else {
            img[(y as usize * size + x as usize) * channels + c]
        }
    };
    for y in 0..size {
        for x in 0..size {
            let sy = y as f64 - dy;
            let sx = x as f64 - dx;
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            let (y0, x0) = (y0 as i64, x0 as i64);
            for c in 0..channels {
                out[(y * size + x) * channels + c] = (1.0 - fy) * (1.0 - fx) * sample(y0, x0, c)
                    + (1.0 - fy) * fx * sample(y0, x0 + 1, c)
                    + fy * (1.0 - fx) * sample(y0 + 1, x0, c)
                    + fy * fx * sample(y0 + 1, x0 + 1, c);
            }
        }
    }
    out
}

/// Back-to-front over-compositing onto black.
pub fn loop_render(mpi: &MultiplaneImage, pose: CameraPose, parallax_px: f64) -> Vec<f64> {
    let size = mpi.size();
    let mut acc = vec![0.0; size * size * 3];
    for p in (0..mpi.n_planes()).rev() {
        let depth = mpi.depths()[p];
        let dx = parallax_px * pose.yaw.to_radians().tan() / depth;
        let dy = parallax_px * pose.pitch.to_radians().tan() / depth;
        let color = loop_shift(mpi.color(), size, 3, dx, dy);
        let alpha = loop_shift(&mpi.alphas()[p], size, 1, dx, dy);
        for px in 0..size * size {
            for c in 0..3 {
                let i = px * 3 + c;
                acc[i] = color[i] * alpha[px] + acc[i] * (1.0 - alpha[px]);
            }
        }
    }
    acc
}

/// Identity encoder with visible weights: 4x4 average pool, centre at 0.5,
/// project, normalise.
#[derive(Clone, Debug)]
pub struct OpenIdentityEncoder {
    pub size: usize,
    pub dim: usize,
    pub projection: Arc<[f64]>,
}

impl OpenIdentityEncoder {
    pub fn new(rng: &mut ChaCha8Rng, size: usize, dim: usize) -> Self {
        let n = (size / 4).pow(2) * 3;
        Self { size, dim, projection: gaussian_vec(rng, dim * n, 1.0 / (n as f64).sqrt()).into() }
    }

    pub fn loop_embed(&self, pixels: &[f64]) -> Vec<f64> {
        let p = self.size / 4;
        let mut pooled = vec![0.0; p * p * 3];
        for y in 0..self.size {
            for x in 0..self.size {
                for c in 0..3 {
                    pooled[((y / 4) * p + x / 4) * 3 + c] += pixels[(y * self.size + x) * 3 + c] / 16.0;
                }
            }
        }
        let centred: Vec<f64> = pooled.iter().map(|v| v - 0.5).collect();
        let n = centred.len();
        let mut out = vec![0.0; self.dim];
        for r in 0..self.dim {
            for c in 0..n {
                out[r] += self.projection[r * n + c] * centred[c];
            }
        }
        unit(&out)
    }
}

impl IdentityEncoder for OpenIdentityEncoder {
    fn embed_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, g: &mut Graph, image: Var, size: usize) -> laekit_core::Result<Var> {
        if size != self.size {
            return Err(LaeError::Shape("size".into()));
        }
        let pooled = g.avg_pool(image, ImageGeom::new(size, size, 3), 4);
        let centred = g.affine(pooled, 1.0, -0.5);
        let n = g.value(centred).len();
        let proj = g.frozen_matvec(&self.projection, centred, self.dim, n);
        let norm = g.norm(proj);
        Ok(g.div_scalar(proj, norm))
    }

    fn update_digest(&self, hasher: &mut sha2::Sha256) {
        for v in self.projection.iter() {
            hasher.update(v.to_le_bytes());
        }
    }
}

/// Image encoder with visible weights: `tanh(P · (pixels - 0.5))`.
#[derive(Clone, Debug)]
pub struct OpenImageEncoder {
    pub size: usize,
    pub dim: usize,
    pub projection: Arc<[f64]>,
}

impl OpenImageEncoder {
    pub fn new(rng: &mut ChaCha8Rng, size: usize, dim: usize) -> Self {
        let n = size * size * 3;
        Self { size, dim, projection: gaussian_vec(rng, dim * n, 2.0 / (n as f64).sqrt()).into() }
    }

    pub fn loop_embed(&self, pixels: &[f64]) -> Vec<f64> {
        let n = pixels.len();
        (0..self.dim)
            .map(|r| {
                let mut acc = 0.0;
                for c in 0..n {
                    acc += self.projection[r * n + c] * (pixels[c] - 0.5);
                }
                acc.tanh()
            })
            .collect()
    }
}

impl ImageEncoder for OpenImageEncoder {
    fn embed_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, g: &mut Graph, image: Var, size: usize) -> laekit_core::Result<Var> {
        let centred = g.affine(image, 1.0, -0.5);
        let proj = g.frozen_matvec(&self.projection, centred, self.dim, size * size * 3);
        Ok(g.tanh(proj))
    }

    fn update_digest(&self, hasher: &mut sha2::Sha256) {
        for v in self.projection.iter() {
            hasher.update(v.to_le_bytes());
        }
    }
}

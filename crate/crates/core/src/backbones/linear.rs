// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear MPI generator family used by the toy backbone and by exported
//! backbone files.
//!
//! With `m = mean_l(w_l)`:
//! - `color = sigmoid(C m + c)`
//! - `alpha logits = B m + H(m)` where `B` is frozen and `H` is the trainable
//!   alpha branch, stored as a residual that starts at zero.
//!
//! `H(m) = U (A m + a)`: the branch predicts a `grid x grid` logit map per
//! plane which the fixed bilinear operator `U` upsamples to image resolution.
//! With `grid == size`, `U` is the identity and is skipped.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{digest_f64, LatentDims, MappingNetwork, MpiGenerator, PlaneConfig};
use crate::error::{LaeError, Result};
use crate::latent::LatentCode;
use crate::mpi::MpiVars;
use crate::params::{ParamArray, ParamSet};
use crate::tape::{Graph, Var};

pub const ALPHA_BRANCH_WEIGHT: &str = "alpha_branch.weight";
pub const ALPHA_BRANCH_BIAS: &str = "alpha_branch.bias";

/// `w_l = W z + o_l`: one shared projection plus a fixed per-layer offset.
#[derive(Clone, Debug)]
pub struct LinearMapping {
    pub z_dim: usize,
    pub dims: LatentDims,
    pub weight: Arc<[f64]>,
    pub layer_offsets: Arc<[f64]>,
}

impl LinearMapping {
    pub fn new(z_dim: usize, dims: LatentDims, weight: Vec<f64>, layer_offsets: Vec<f64>) -> Result<Self> {
        if weight.len() != dims.dim * z_dim || layer_offsets.len() != dims.n_layers * dims.dim {
            return Err(LaeError::Shape("mapping network arrays do not match declared dims".into()));
        }
        Ok(Self { z_dim, dims, weight: weight.into(), layer_offsets: layer_offsets.into() })
    }
}

impl MappingNetwork for LinearMapping {
    fn z_dim(&self) -> usize {
        self.z_dim
    }

    fn map(&self, z: &[f64]) -> Result<LatentCode> {
        if z.len() != self.z_dim {
            return Err(LaeError::Shape(format!("z has {} entries, mapping expects {}", z.len(), self.z_dim)));
        }
        let d = self.dims.dim;
        let base: Vec<f64> = self.weight.chunks_exact(self.z_dim).map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum()).collect();
        let data = self.layer_offsets.chunks_exact(d).flat_map(|off| off.iter().zip(&base).map(|(o, b)| o + b)).collect();
        LatentCode::from_flat(self.dims.n_layers, d, data)
    }

    fn update_digest(&self, hasher: &mut Sha256) {
        digest_f64(hasher, "mapping.weight", &self.weight);
        digest_f64(hasher, "mapping.offsets", &self.layer_offsets);
    }
}

#[derive(Clone, Debug)]
pub struct LinearMpiGenerator {
    pub size: usize,
    pub dims: LatentDims,
    pub planes: PlaneConfig,
    pub depths: Vec<f64>,
    pub color_weight: Arc<[f64]>,
    pub color_bias: Arc<[f64]>,
    pub alpha_base: Arc<[f64]>,
    /// Side of the per-plane grid the alpha branch predicts on.
    pub branch_grid: usize,
    upsample: Option<Arc<[f64]>>,
}

/// Row-major `(size*size) x (grid*grid)` bilinear upsampling matrix with
/// aligned corners.
pub fn bilinear_upsample_matrix(size: usize, grid: usize) -> Vec<f64> {
    let taps = |p: usize| -> [(usize, f64); 2] {
        if grid == 1 || size == 1 {
            return [(0, 1.0), (0, 0.0)];
        }
        let t = p as f64 * (grid - 1) as f64 / (size - 1) as f64;
        let i0 = (t.floor() as usize).min(grid - 2);
        let f = t - i0 as f64;
        [(i0, 1.0 - f), (i0 + 1, f)]
    };
    let cols = grid * grid;
    let mut m = vec![0.0; size * size * cols];
    for y in 0..size {
        for x in 0..size {
            let row = &mut m[(y * size + x) * cols..][..cols];
            for (gy, wy) in taps(y) {
                for (gx, wx) in taps(x) {
                    row[gy * grid + gx] += wy * wx;
                }
            }
        }
    }
    m
}

impl LinearMpiGenerator {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        size: usize,
        dims: LatentDims,
        planes: PlaneConfig,
        depths: Vec<f64>,
        color_weight: Vec<f64>,
        color_bias: Vec<f64>,
        alpha_base: Vec<f64>,
        branch_grid: usize,
    ) -> Result<Self> {
        if branch_grid == 0 || branch_grid > size {
            return Err(LaeError::Shape(format!("alpha-branch grid {branch_grid} must lie in 1..={size}")));
        }
        let px = size * size;
        let l = depths.len();
        if l == 0
            || color_weight.len() != 3 * px * dims.dim
            || color_bias.len() != 3 * px
            || alpha_base.len() != l * px * dims.dim
        {
            return Err(LaeError::Shape("generator arrays do not match declared dims".into()));
        }
        if depths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LaeError::InvalidRange("plane depths must increase".into()));
        }
        Ok(Self {
            size,
            dims,
            planes,
            depths,
            color_weight: color_weight.into(),
            color_bias: color_bias.into(),
            alpha_base: alpha_base.into(),
            branch_grid,
            upsample: (branch_grid != size).then(|| bilinear_upsample_matrix(size, branch_grid).into()),
        })
    }

    fn alpha_rows(&self) -> usize {
        self.depths.len() * self.size * self.size
    }

    fn branch_rows(&self) -> usize {
        self.depths.len() * self.branch_grid * self.branch_grid
    }
}

impl MpiGenerator for LinearMpiGenerator {
    fn dims(&self) -> LatentDims {
        self.dims
    }

    fn image_size(&self) -> usize {
        self.size
    }

    fn planes(&self) -> PlaneConfig {
        self.planes
    }

    fn n_planes(&self) -> usize {
        self.depths.len()
    }

    fn alpha_branch_init(&self) -> ParamSet {
        ParamSet::new(vec![
            ParamArray::zeros(ALPHA_BRANCH_WEIGHT, vec![self.branch_rows(), self.dims.dim]),
            ParamArray::zeros(ALPHA_BRANCH_BIAS, vec![self.branch_rows()]),
        ])
    }

    fn generate(&self, g: &mut Graph, w: Var, alpha_branch: &[Var]) -> Result<MpiVars> {
        let LatentDims { dim, n_layers } = self.dims;
        if g.value(w).len() != dim * n_layers {
            return Err(LaeError::Shape(format!("latent has {} values, generator expects {n_layers}x{dim}", g.value(w).len())));
        }
        let [branch_w, branch_b] = alpha_branch else {
            return Err(LaeError::Shape(format!("alpha branch needs 2 arrays, got {}", alpha_branch.len())));
        };
        let rows = self.alpha_rows();
        let branch_rows = self.branch_rows();
        if g.value(*branch_w).len() != branch_rows * dim || g.value(*branch_b).len() != branch_rows {
            return Err(LaeError::Shape("alpha branch arrays do not match generator".into()));
        }
        let px = self.size * self.size;
        let m = g.mean_rows(w, n_layers, dim);

        let c = g.frozen_matvec(&self.color_weight, m, 3 * px, dim);
        let cb = g.constant(self.color_bias.to_vec());
        let c = g.add(c, cb);
        let color = g.sigmoid(c);

        let base = g.frozen_matvec(&self.alpha_base, m, rows, dim);
        let coarse = g.matvec(*branch_w, m, branch_rows, dim);
        let coarse = g.add(coarse, *branch_b);
        let h = match &self.upsample {
            None => coarse,
            Some(u) => {
                let cells = self.branch_grid * self.branch_grid;
                let planes: Vec<Var> = (0..self.depths.len())
                    .map(|p| {
                        let c = g.slice(coarse, p * cells, cells);
                        g.frozen_matvec(u, c, px, cells)
                    })
                    .collect();
                g.concat(&planes)
            }
        };
        let logits = g.add(base, h);
        let all = g.sigmoid(logits);
        let alphas = (0..self.depths.len()).map(|i| g.slice(all, i * px, px)).collect();

        Ok(MpiVars { size: self.size, color, alphas, depths: self.depths.clone(), alpha_logits: Some(h) })
    }

    fn update_digest(&self, hasher: &mut Sha256) {
        hasher.update((self.size as u64).to_le_bytes());
        hasher.update((self.branch_grid as u64).to_le_bytes());
        digest_f64(hasher, "generator.depths", &self.depths);
        digest_f64(hasher, "generator.color_weight", &self.color_weight);
        digest_f64(hasher, "generator.color_bias", &self.color_bias);
        digest_f64(hasher, "generator.alpha_base", &self.alpha_base);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsampling_preserves_constants_and_hits_grid_corners() {
        let (size, grid) = (9, 3);
        let u = bilinear_upsample_matrix(size, grid);
        let cells = grid * grid;
        for row in u.chunks_exact(cells) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // output pixel (0, 0) is grid cell (0, 0); pixel (8, 8) is cell (2, 2)
        assert_eq!(u[0], 1.0);
        assert_eq!(u[(size * size - 1) * cells + cells - 1], 1.0);
    }

    #[test]
    fn identity_grid_skips_upsampling() {
        let u = bilinear_upsample_matrix(4, 4);
        for (r, row) in u.chunks_exact(16).enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert_eq!(*v, if r == c { 1.0 } else { 0.0 });
            }
        }
    }
}

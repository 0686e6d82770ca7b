// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tri-level style mapper: one affine layer per coarse/middle/fine group,
//! shared by every attribute.
//!
//! For layer `l` in group `g`: `Δw_l = s * (W_g · [w_l; Δv] + b_g)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure_finite, LaeError, Result};
use crate::latent::{EditDirection, LatentCode, LatentSplit};
use crate::params::{ParamArray, ParamSet};
use crate::prompt::EmbeddingVector;
use crate::tape::{Graph, Var};

pub const GROUP_NAMES: [&str; 3] = ["coarse", "middle", "fine"];
pub const DEFAULT_EDIT_SCALE: f64 = 0.1;

pub fn weight_name(group: usize) -> String {
    format!("mapper.{}.weight", GROUP_NAMES[group])
}

pub fn bias_name(group: usize) -> String {
    format!("mapper.{}.bias", GROUP_NAMES[group])
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapperParams {
    latent_dim: usize,
    embed_dim: usize,
    edit_scale: f64,
    /// weight, bias for coarse, then middle, then fine.
    arrays: ParamSet,
}

impl MapperParams {
    pub fn from_arrays(latent_dim: usize, embed_dim: usize, edit_scale: f64, arrays: ParamSet) -> Result<Self> {
        if !(edit_scale > 0.0 && edit_scale.is_finite()) {
            return Err(LaeError::InvalidArgument(format!("edit scale must be positive, got {edit_scale}")));
        }
        let mut ordered = Vec::with_capacity(6);
        for g in 0..3 {
            let w = arrays.require(&weight_name(g))?;
            let b = arrays.require(&bias_name(g))?;
            if w.shape != [latent_dim, latent_dim + embed_dim] || b.shape != [latent_dim] {
                return Err(LaeError::Shape(format!("mapper group {} has shapes {:?}/{:?}", GROUP_NAMES[g], w.shape, b.shape)));
            }
            if !w.is_finite() || !b.is_finite() {
                return Err(LaeError::NonFinite(format!("mapper group {}", GROUP_NAMES[g])));
            }
            ordered.push(w.clone());
            ordered.push(b.clone());
        }
        Ok(Self { latent_dim, embed_dim, edit_scale, arrays: ParamSet::new(ordered) })
    }

    pub fn zeros(latent_dim: usize, embed_dim: usize, edit_scale: f64) -> Result<Self> {
        let arrays = (0..3)
            .flat_map(|g| {
                [
                    ParamArray::zeros(weight_name(g), vec![latent_dim, latent_dim + embed_dim]),
                    ParamArray::zeros(bias_name(g), vec![latent_dim]),
                ]
            })
            .collect();
        Self::from_arrays(latent_dim, embed_dim, edit_scale, ParamSet::new(arrays))
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn edit_scale(&self) -> f64 {
        self.edit_scale
    }

    pub fn arrays(&self) -> &ParamSet {
        &self.arrays
    }

    pub fn arrays_mut(&mut self) -> &mut ParamSet {
        &mut self.arrays
    }

    pub fn weight(&self, group: usize) -> &ParamArray {
        &self.arrays.arrays[2 * group]
    }

    pub fn bias(&self, group: usize) -> &ParamArray {
        &self.arrays.arrays[2 * group + 1]
    }
}

/// Gaussian weights with std `1/sqrt(D_w + d_e)`, zero biases.
pub fn init_mapper<R: Rng + ?Sized>(latent_dim: usize, embed_dim: usize, edit_scale: f64, rng: &mut R) -> Result<MapperParams> {
    if latent_dim == 0 || embed_dim == 0 {
        return Err(LaeError::InvalidArgument("mapper dimensions must be positive".into()));
    }
    let fan_in = latent_dim + embed_dim;
    let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
    let mut arrays = Vec::with_capacity(6);
    for g in 0..3 {
        let data = (0..latent_dim * fan_in).map(|_| normal.sample(rng) as f32).collect();
        arrays.push(ParamArray::new(weight_name(g), vec![latent_dim, fan_in], data)?);
        arrays.push(ParamArray::zeros(bias_name(g), vec![latent_dim]));
    }
    MapperParams::from_arrays(latent_dim, embed_dim, edit_scale, ParamSet::new(arrays))
}

/// Graph-resident mapper parameters: `[W_c, b_c, W_m, b_m, W_f, b_f]`.
#[derive(Clone, Copy, Debug)]
pub struct MapperVars {
    pub vars: [Var; 6],
    pub latent_dim: usize,
    pub embed_dim: usize,
    pub edit_scale: f64,
}

impl MapperVars {
    pub fn bind(g: &mut Graph, params: &MapperParams, trainable: bool) -> Self {
        let bound = params.arrays.bind(g, trainable);
        Self {
            vars: bound.try_into().expect("six mapper arrays"),
            latent_dim: params.latent_dim,
            embed_dim: params.embed_dim,
            edit_scale: params.edit_scale,
        }
    }
}

/// Graph-level edit direction for a flat `n_layers x D_w` latent.
pub fn map_edit_vars(g: &mut Graph, w: Var, n_layers: usize, dv: Var, mapper: &MapperVars, split: &LatentSplit) -> Result<Var> {
    let d = mapper.latent_dim;
    if g.value(w).len() != n_layers * d {
        return Err(LaeError::Shape(format!("latent has {} values, mapper expects {n_layers}x{d}", g.value(w).len())));
    }
    if g.value(dv).len() != mapper.embed_dim {
        return Err(LaeError::Shape(format!("Δv has dimension {}, mapper expects {}", g.value(dv).len(), mapper.embed_dim)));
    }
    split.validate(n_layers)?;
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let group = split.group_of(l).expect("validated split covers every layer");
        let wl = g.slice(w, l * d, d);
        let x = g.concat(&[wl, dv]);
        let y = g.matvec(mapper.vars[2 * group], x, d, d + mapper.embed_dim);
        let y = g.add(y, mapper.vars[2 * group + 1]);
        layers.push(g.scale(y, mapper.edit_scale));
    }
    let out = g.concat(&layers);
    ensure_finite(g.value(out), "edit direction")?;
    Ok(out)
}

pub fn map_edit(w: &LatentCode, dv: &EmbeddingVector, params: &MapperParams, split: &LatentSplit) -> Result<EditDirection> {
    if w.dim() != params.latent_dim {
        return Err(LaeError::Shape(format!("latent dim {} vs mapper dim {}", w.dim(), params.latent_dim)));
    }
    let mut g = Graph::new();
    let wv = g.constant(w.as_flat().to_vec());
    let dvv = g.constant(dv.values.clone());
    let mv = MapperVars::bind(&mut g, params, false);
    let out = map_edit_vars(&mut g, wv, w.n_layers(), dvv, &mv, split)?;
    EditDirection::from_flat(w.n_layers(), w.dim(), g.value(out).to_vec())
}

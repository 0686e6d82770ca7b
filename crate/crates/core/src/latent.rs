// SPDX-License-Identifier: MIT OR Apache-2.0

//! Extended-latent (W+) codes and their coarse/middle/fine grouping.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, LaeError, Result};

/// A point in W+: one `dim`-vector per generator layer, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    n_layers: usize,
    dim: usize,
    data: Vec<f64>,
}

/// Offset in W+ produced by the style mapper. Same layout as [`LatentCode`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditDirection {
    n_layers: usize,
    dim: usize,
    data: Vec<f64>,
}

fn check_layers(n_layers: usize, dim: usize, len: usize, min_layers: usize) -> Result<()> {
    if n_layers < min_layers {
        return Err(LaeError::Shape(format!("need at least {min_layers} layers, got {n_layers}")));
    }
    if dim == 0 {
        return Err(LaeError::Shape("latent dimension must be positive".into()));
    }
    if len != n_layers * dim {
        return Err(LaeError::Shape(format!("{len} values for {n_layers} layers of dim {dim}")));
    }
    Ok(())
}

macro_rules! layered {
    ($ty:ident, $min:expr, $what:literal) => {
        impl $ty {
            pub fn from_flat(n_layers: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
                check_layers(n_layers, dim, data.len(), $min)?;
                ensure_finite(&data, $what)?;
                Ok(Self { n_layers, dim, data })
            }

            pub fn from_layers(layers: &[Vec<f64>]) -> Result<Self> {
                let dim = layers.first().map_or(0, Vec::len);
                if layers.iter().any(|l| l.len() != dim) {
                    return Err(LaeError::Shape("layers have differing dimensions".into()));
                }
                Self::from_flat(layers.len(), dim, layers.concat())
            }

            pub fn zeros(n_layers: usize, dim: usize) -> Result<Self> {
                Self::from_flat(n_layers, dim, vec![0.0; n_layers * dim])
            }

            pub fn n_layers(&self) -> usize {
                self.n_layers
            }

            pub fn dim(&self) -> usize {
                self.dim
            }

            pub fn layer(&self, i: usize) -> &[f64] {
                &self.data[i * self.dim..(i + 1) * self.dim]
            }

            pub fn as_flat(&self) -> &[f64] {
                &self.data
            }

            pub fn into_flat(self) -> Vec<f64> {
                self.data
            }

            pub fn l2_norm(&self) -> f64 {
                self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
        }
    };
}

layered!(LatentCode, 3, "latent code");
layered!(EditDirection, 1, "edit direction");

impl EditDirection {
    pub fn same_shape_as(&self, w: &LatentCode) -> bool {
        self.n_layers == w.n_layers && self.dim == w.dim
    }
}

/// Which layers of a W+ code belong to the coarse, middle and fine groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentSplit {
    pub coarse: Range<usize>,
    pub middle: Range<usize>,
    pub fine: Range<usize>,
}

impl LatentSplit {
    pub fn new(coarse: Range<usize>, middle: Range<usize>, fine: Range<usize>) -> Self {
        Self { coarse, middle, fine }
    }

    /// Thirds of `n_layers`, remainder going to the later groups.
    pub fn thirds(n_layers: usize) -> Result<Self> {
        if n_layers < 3 {
            return Err(LaeError::InvalidSplit(format!("{n_layers} layers cannot form three groups")));
        }
        let a = n_layers / 3;
        let b = a + (n_layers - a) / 2;
        Ok(Self::new(0..a, a..b, b..n_layers))
    }

    pub fn groups(&self) -> [Range<usize>; 3] {
        [self.coarse.clone(), self.middle.clone(), self.fine.clone()]
    }

    /// Group index (0 coarse, 1 middle, 2 fine) owning `layer`.
    pub fn group_of(&self, layer: usize) -> Option<usize> {
        self.groups().iter().position(|g| g.contains(&layer))
    }

    pub fn validate(&self, n_layers: usize) -> Result<()> {
        let [c, m, f] = self.groups();
        let ok = c.start == 0
            && c.start < c.end
            && c.end == m.start
            && m.start < m.end
            && m.end == f.start
            && f.start < f.end
            && f.end == n_layers;
        if ok {
            Ok(())
        } else {
            Err(LaeError::InvalidSplit(format!("{:?}/{:?}/{:?} does not partition 0..{n_layers}", c, m, f)))
        }
    }
}

/// One group of consecutive layers taken out of a latent code.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGroup {
    pub dim: usize,
    pub layers: Vec<Vec<f64>>,
}

pub fn split_latent(w: &LatentCode, split: &LatentSplit) -> Result<(LayerGroup, LayerGroup, LayerGroup)> {
    split.validate(w.n_layers())?;
    let take = |r: Range<usize>| LayerGroup { dim: w.dim(), layers: r.map(|i| w.layer(i).to_vec()).collect() };
    let [c, m, f] = split.groups();
    Ok((take(c), take(m), take(f)))
}

pub fn merge_latent(coarse: &LayerGroup, middle: &LayerGroup, fine: &LayerGroup) -> Result<LatentCode> {
    let dim = coarse.dim;
    for g in [coarse, middle, fine] {
        if g.dim != dim || g.layers.iter().any(|l| l.len() != dim) {
            return Err(LaeError::Shape("layer groups disagree on latent dimension".into()));
        }
    }
    let layers: Vec<Vec<f64>> = [coarse, middle, fine].iter().flat_map(|g| g.layers.iter().cloned()).collect();
    LatentCode::from_flat(layers.len(), dim, layers.concat())
}

/// `w + dw`, rejecting shape mismatches and non-finite results.
pub fn apply_edit(w: &LatentCode, dw: &EditDirection) -> Result<LatentCode> {
    if !dw.same_shape_as(w) {
        return Err(LaeError::Shape(format!(
            "edit is {}x{}, latent is {}x{}",
            dw.n_layers(),
            dw.dim(),
            w.n_layers(),
            w.dim()
        )));
    }
    let data: Vec<f64> = w.as_flat().iter().zip(dw.as_flat()).map(|(a, b)| a + b).collect();
    LatentCode::from_flat(w.n_layers(), w.dim(), data)
}

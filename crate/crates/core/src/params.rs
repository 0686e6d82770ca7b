// SPDX-License-Identifier: MIT OR Apache-2.0

//! Named single-precision parameter arrays.
//!
//! Trainable state is stored in `f32` so checkpoints round-trip bit-exactly;
//! forward passes widen to `f64` on the way into a [`Graph`].

use serde::{Deserialize, Serialize};

use crate::error::{LaeError, Result};
use crate::tape::{Graph, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl ParamArray {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(LaeError::Shape(format!("{name}: shape {shape:?} holds {expect} values, got {}", data.len())));
        }
        Ok(Self { name, shape, data })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name: name.into(), shape, data: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Ordered collection of parameter arrays.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub arrays: Vec<ParamArray>,
}

impl ParamSet {
    pub fn new(arrays: Vec<ParamArray>) -> Self {
        Self { arrays }
    }

    pub fn get(&self, name: &str) -> Option<&ParamArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&ParamArray> {
        self.get(name).ok_or_else(|| LaeError::InvalidArgument(format!("missing parameter array {name}")))
    }

    pub fn total_len(&self) -> usize {
        self.arrays.iter().map(ParamArray::len).sum()
    }

    /// Bind every array as a trainable leaf (or a constant when `trainable` is false).
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.arrays
            .iter()
            .map(|a| if trainable { g.param(a.to_f64()) } else { g.constant(a.to_f64()) })
            .collect()
    }
}

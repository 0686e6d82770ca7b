// SPDX-License-Identifier: MIT OR Apache-2.0

//! Adam with bias correction. Arithmetic runs in `f64`; parameters and
//! moments are stored back in `f32`.

use laekit_core::params::ParamArray;
use laekit_core::LaeError;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moments, one pair per trainable array.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub first: Vec<ParamArray>,
    pub second: Vec<ParamArray>,
}

pub fn first_moment_name(param: &str) -> String {
    format!("adam.m.{param}")
}

pub fn second_moment_name(param: &str) -> String {
    format!("adam.v.{param}")
}

impl AdamState {
    pub fn zeros_like(params: &[&ParamArray]) -> Self {
        Self {
            first: params.iter().map(|p| ParamArray::zeros(first_moment_name(&p.name), p.shape.clone())).collect(),
            second: params.iter().map(|p| ParamArray::zeros(second_moment_name(&p.name), p.shape.clone())).collect(),
        }
    }

    pub fn check_matches(&self, params: &[&ParamArray]) -> Result<()> {
        let ok = self.first.len() == params.len()
            && self.second.len() == params.len()
            && params.iter().zip(self.first.iter().zip(&self.second)).all(|(p, (m, v))| {
                m.name == first_moment_name(&p.name) && v.name == second_moment_name(&p.name) && m.shape == p.shape && v.shape == p.shape
            });
        if ok {
            Ok(())
        } else {
            Err(LaeError::Shape("optimizer moments do not match the trainable arrays".into()).into())
        }
    }

    /// One update at 1-based step `t`.
    pub fn update(&mut self, params: &mut [&mut ParamArray], grads: &[Vec<f64>], t: u64, h: AdamHyper) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(LaeError::Shape("gradient count does not match the trainable arrays".into()).into());
        }
        let exp = i32::try_from(t).unwrap_or(i32::MAX);
        let c1 = 1.0 - h.beta1.powi(exp);
        let c2 = 1.0 - h.beta2.powi(exp);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            if g.len() != p.data.len() {
                return Err(LaeError::Shape(format!("gradient for {} has {} entries", p.name, g.len())).into());
            }
            for (k, &gk) in g.iter().enumerate() {
                let mk = h.beta1 * f64::from(m.data[k]) + (1.0 - h.beta1) * gk;
                let vk = h.beta2 * f64::from(v.data[k]) + (1.0 - h.beta2) * gk * gk;
                m.data[k] = mk as f32;
                v.data[k] = vk as f32;
                let step = h.lr * (mk / c1) / ((vk / c2).sqrt() + h.eps);
                p.data[k] = (f64::from(p.data[k]) - step) as f32;
            }
        }
        Ok(())
    }
}

/// Scale `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

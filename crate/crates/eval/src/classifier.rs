// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attribute classifiers used by the altering/dependency metrics.

use std::ops::Range;

use laekit_core::RenderedImage;

use crate::error::{EvalError, Result};

pub trait AttributeClassifier: Send + Sync {
    fn attribute_names(&self) -> &[String];
    /// One logit per attribute.
    fn logits(&self, image: &RenderedImage) -> Result<Vec<f64>>;
    /// Per-attribute logit standard deviation over a reference set.
    fn sigma(&self) -> &[f64];

    fn index_of(&self, name: &str) -> Result<usize> {
        self.attribute_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| EvalError::UnknownAttribute(name.to_string()))
    }
}

/// Sample standard deviation of each logit over `images`.
pub fn logit_std(clf: &dyn AttributeClassifier, images: &[RenderedImage]) -> Result<Vec<f64>> {
    if images.len() < 2 {
        return Err(EvalError::Empty("calibration needs at least two reference images".into()));
    }
    let logits = images.iter().map(|img| clf.logits(img)).collect::<Result<Vec<_>>>()?;
    let n = images.len() as f64;
    let k = clf.attribute_names().len();
    Ok((0..k)
        .map(|a| {
            let mean = logits.iter().map(|l| l[a]).sum::<f64>() / n;
            (logits.iter().map(|l| (l[a] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect())
}

/// `logit_k = bias_k + Σ weight_k · (pixel - 0.5)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbeClassifier {
    names: Vec<String>,
    size: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    sigma: Vec<f64>,
}

impl LinearProbeClassifier {
    pub fn new(names: Vec<String>, size: usize, weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(EvalError::Empty("classifier needs at least one attribute".into()));
        }
        if weights.len() != n || bias.len() != n || weights.iter().any(|w| w.len() != size * size * 3) {
            return Err(EvalError::InvalidArgument(format!("probe weights must be {n} rows of {size}x{size}x3")));
        }
        Ok(Self { names, size, weights, bias, sigma: vec![1.0; n] })
    }

    /// Rows of the image owned by attribute `k` of `n` in [`Self::bands`].
    pub fn band(size: usize, n: usize, k: usize) -> Range<usize> {
        k * size / n..(k + 1) * size / n
    }

    /// One disjoint horizontal band per attribute; each logit is the mean
    /// centred intensity of its band.
    pub fn bands(names: Vec<String>, size: usize) -> Result<Self> {
        let n = names.len();
        if n == 0 || n > size {
            return Err(EvalError::InvalidArgument(format!("cannot split {size} rows into {n} bands")));
        }
        let weights = (0..n)
            .map(|k| {
                let rows = Self::band(size, n, k);
                let count = (rows.len() * size * 3) as f64;
                (0..size * size * 3).map(|i| if rows.contains(&(i / 3 / size)) { 1.0 / count } else { 0.0 }).collect()
            })
            .collect();
        Self::new(names, size, weights, vec![0.0; n])
    }

    /// Set σ from the logit spread over `reference`.
    pub fn calibrate(mut self, reference: &[RenderedImage]) -> Result<Self> {
        let sigma = logit_std(&self, reference)?;
        self.sigma = sigma;
        self.check_sigma()?;
        Ok(self)
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.names.len() {
            return Err(EvalError::InvalidArgument("one σ per attribute".into()));
        }
        self.sigma = sigma;
        self.check_sigma()?;
        Ok(self)
    }

    fn check_sigma(&self) -> Result<()> {
        match self.sigma.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            Some(k) => Err(EvalError::InvalidArgument(format!("σ for {} is {}", self.names[k], self.sigma[k]))),
            None => Ok(()),
        }
    }
}

impl AttributeClassifier for LinearProbeClassifier {
    fn attribute_names(&self) -> &[String] {
        &self.names
    }

    fn logits(&self, image: &RenderedImage) -> Result<Vec<f64>> {
        if image.size() != self.size {
            return Err(EvalError::InvalidArgument(format!("classifier expects {0}x{0} images", self.size)));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(image.pixels()).map(|(w, p)| w * (p - 0.5)).sum::<f64>())
            .collect())
    }

    fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

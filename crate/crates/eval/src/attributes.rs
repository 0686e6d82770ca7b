// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attribute altering (AA) and attribute dependency (AD).
//!
//! With classifier logits `l_k` and reference spreads `σ_k`:
//!
//! - `AA = mean_i (l_t(edited_i) - l_t(original_i)) / σ_t`
//! - `AD = mean_i mean_{k≠t} |l_k(edited_i) - l_k(original_i)| / σ_k`
//!
//! AD is 0 when the classifier has a single attribute.

use laekit_core::RenderedImage;

use crate::classifier::AttributeClassifier;
use crate::error::{EvalError, Result};

/// Per-pair normalised logit shifts `(l_k(e) - l_k(o)) / σ_k`.
pub fn normalised_shifts(
    edited: &[RenderedImage],
    originals: &[RenderedImage],
    clf: &dyn AttributeClassifier,
) -> Result<Vec<Vec<f64>>> {
    if edited.is_empty() {
        return Err(EvalError::Empty("no image pairs".into()));
    }
    if edited.len() != originals.len() {
        return Err(EvalError::InvalidArgument(format!("{} edited images but {} originals", edited.len(), originals.len())));
    }
    let sigma = clf.sigma();
    edited
        .iter()
        .zip(originals)
        .map(|(e, o)| {
            let (le, lo) = (clf.logits(e)?, clf.logits(o)?);
            Ok(le.iter().zip(&lo).zip(sigma).map(|((a, b), s)| (a - b) / s).collect())
        })
        .collect()
}

fn altering_of(shifts: &[Vec<f64>], target: usize) -> f64 {
    shifts.iter().map(|s| s[target]).sum::<f64>() / shifts.len() as f64
}

fn dependency_row(shift: &[f64], target: usize) -> f64 {
    let others = shift.len() - 1;
    if others == 0 {
        return 0.0;
    }
    shift.iter().enumerate().filter(|&(k, _)| k != target).map(|(_, v)| v.abs()).sum::<f64>() / others as f64
}

fn dependency_of(shifts: &[Vec<f64>], target: usize) -> f64 {
    shifts.iter().map(|s| dependency_row(s, target)).sum::<f64>() / shifts.len() as f64
}

pub fn attribute_altering(
    edited: &[RenderedImage],
    originals: &[RenderedImage],
    target: &str,
    clf: &dyn AttributeClassifier,
) -> Result<f64> {
    let t = clf.index_of(target)?;
    Ok(altering_of(&normalised_shifts(edited, originals, clf)?, t))
}

pub fn attribute_dependency(
    edited: &[RenderedImage],
    originals: &[RenderedImage],
    target: &str,
    clf: &dyn AttributeClassifier,
) -> Result<f64> {
    let t = clf.index_of(target)?;
    Ok(dependency_of(&normalised_shifts(edited, originals, clf)?, t))
}

/// AA, AD and the per-pair values behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeScores {
    pub altering: f64,
    pub dependency: f64,
    pub per_sample_altering: Vec<f64>,
    pub per_sample_dependency: Vec<f64>,
}

pub fn attribute_scores(
    edited: &[RenderedImage],
    originals: &[RenderedImage],
    target: &str,
    clf: &dyn AttributeClassifier,
) -> Result<AttributeScores> {
    let t = clf.index_of(target)?;
    let shifts = normalised_shifts(edited, originals, clf)?;
    Ok(AttributeScores {
        altering: altering_of(&shifts, t),
        dependency: dependency_of(&shifts, t),
        per_sample_altering: shifts.iter().map(|s| s[t]).collect(),
        per_sample_dependency: shifts.iter().map(|s| dependency_row(s, t)).collect(),
    })
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! The six training objectives and their weighted total.
//!
//! | term     | definition                                                   |
//! |----------|--------------------------------------------------------------|
//! | `dclip`  | `Σ_i 1 - cos(ΔI_i, ΔT_i)`                                    |
//! | `sc`     | `Σ_{i<j} cos(Δv_i, Δv_j)`                                    |
//! | `id`     | `1 - cos(AF(edited @ p_o), AF(source @ p_o))`                |
//! | `idvc`   | `Σ_{i<j} 1 - cos(AF(ŵ_i @ p_t1), AF(ŵ_j @ p_t2))`            |
//! | `latent` | `‖ŵ - w‖₂ = ‖M(w, Δv)‖₂`                                     |
//! | `alpha`  | `‖H(ŵ)‖₂`, the raw alpha-branch output                       |
//!
//! `ΔI_i` is the difference of unit image embeddings (edited render at one
//! pose, source render at another) and `ΔT_i` the difference of unit text
//! embeddings (attribute prompt minus the source text). Pairwise sums run over
//! unordered pairs. Every cosine rejects zero-norm inputs instead of
//! returning NaN.

use serde::{Deserialize, Serialize};

use crate::backbones::{BackboneBundle, IdentityEncoder, ImageEncoder};
use crate::error::{ensure_finite, LaeError, Result};
use crate::latent::{LatentCode, LatentSplit};
use crate::mapper::{map_edit, MapperParams};
use crate::mpi::RenderedImage;
use crate::params::ParamSet;
use crate::pose::CameraPose;
use crate::prompt::EmbeddingVector;
use crate::tape::{Graph, Var};

/// Cosine similarity `a·b / sqrt((a·a)(b·b))`; identical inputs give exactly 1.
pub fn cosine_vars(g: &mut Graph, a: Var, b: Var, what: &str) -> Result<Var> {
    let aa = g.dot(a, a);
    let bb = g.dot(b, b);
    if g.scalar(aa) == 0.0 || g.scalar(bb) == 0.0 {
        return Err(LaeError::ZeroNorm(what.to_string()));
    }
    let ab = g.dot(a, b);
    let prod = g.mul(aa, bb);
    let denom = g.sqrt(prod);
    Ok(g.div(ab, denom))
}

pub fn normalize_vars(g: &mut Graph, a: Var, what: &str) -> Result<Var> {
    let n = g.norm(a);
    if g.scalar(n) == 0.0 {
        return Err(LaeError::ZeroNorm(what.to_string()));
    }
    Ok(g.div_scalar(a, n))
}

/// Value-level cosine with the same arithmetic as [`cosine_vars`].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(LaeError::Shape(format!("cosine of {} and {} dims", a.len(), b.len())));
    }
    let mut g = Graph::new();
    let (av, bv) = (g.constant(a.to_vec()), g.constant(b.to_vec()));
    let c = cosine_vars(&mut g, av, bv, "cosine")?;
    Ok(g.scalar(c))
}

/// One attribute's directional term `1 - cos(ΔI, ΔT)`.
pub fn directional_term_vars(g: &mut Graph, edited: Var, source: Var, target_text: Var, source_text: Var) -> Result<Var> {
    let e = normalize_vars(g, edited, "edited image embedding")?;
    let s = normalize_vars(g, source, "source image embedding")?;
    let t = normalize_vars(g, target_text, "attribute text embedding")?;
    let src = normalize_vars(g, source_text, "source text embedding")?;
    let di = g.sub(e, s);
    let dt = g.sub(t, src);
    let c = cosine_vars(g, di, dt, "directional cosine (ΔI or ΔT is zero)")?;
    Ok(g.one_minus(c))
}

/// `Σ_i 1 - cos(ΔI_i, ΔT_i)` over `(edited, source, target)` embedding triples.
pub fn directional_clip_loss_vars(g: &mut Graph, triples: &[(Var, Var, Var)], source_text: Var) -> Result<Var> {
    if triples.is_empty() {
        return Err(LaeError::InvalidArgument("directional loss needs at least one attribute".into()));
    }
    let terms = triples
        .iter()
        .map(|&(e, s, t)| directional_term_vars(g, e, s, t, source_text))
        .collect::<Result<Vec<_>>>()?;
    Ok(g.add_all(&terms))
}

fn check_dims(vs: &[&EmbeddingVector]) -> Result<()> {
    let d = vs.first().map_or(0, |v| v.dim());
    if vs.iter().any(|v| v.dim() != d) {
        return Err(LaeError::Shape("embeddings differ in dimension".into()));
    }
    Ok(())
}

/// Directional loss on precomputed embeddings.
pub fn directional_clip_from_embeddings(
    edited: &[EmbeddingVector],
    source: &[EmbeddingVector],
    targets: &[EmbeddingVector],
    source_text: &EmbeddingVector,
) -> Result<f64> {
    if edited.len() != source.len() || edited.len() != targets.len() {
        return Err(LaeError::Shape("need one (edited, source, target) triple per attribute".into()));
    }
    check_dims(&edited.iter().chain(source).chain(targets).chain(std::iter::once(source_text)).collect::<Vec<_>>())?;
    let mut g = Graph::new();
    let src = g.constant(source_text.values.clone());
    let triples: Vec<(Var, Var, Var)> = edited
        .iter()
        .zip(source)
        .zip(targets)
        .map(|((e, s), t)| (g.constant(e.values.clone()), g.constant(s.values.clone()), g.constant(t.values.clone())))
        .collect();
    let out = directional_clip_loss_vars(&mut g, &triples, src)?;
    Ok(g.scalar(out))
}

/// Directional loss on rendered images, encoding them with `encoder`.
pub fn directional_clip_loss(
    edited: &[RenderedImage],
    source: &[RenderedImage],
    targets: &[EmbeddingVector],
    source_text: &EmbeddingVector,
    encoder: &dyn ImageEncoder,
) -> Result<f64> {
    let embed = |img: &RenderedImage| -> Result<EmbeddingVector> {
        let mut g = Graph::new();
        let v = g.constant(img.pixels().to_vec());
        let e = encoder.encode(&mut g, v, img.size())?;
        EmbeddingVector::new(g.value(e).to_vec())
    };
    let e = edited.iter().map(embed).collect::<Result<Vec<_>>>()?;
    let s = source.iter().map(embed).collect::<Result<Vec<_>>>()?;
    directional_clip_from_embeddings(&e, &s, targets, source_text)
}

/// `Σ_{i<j} cos(Δv_i, Δv_j)`; zero for a single attribute.
pub fn token_contrastive_loss_vars(g: &mut Graph, embeddings: &[Var]) -> Result<Var> {
    if embeddings.is_empty() {
        return Err(LaeError::InvalidArgument("contrastive loss needs at least one embedding".into()));
    }
    let mut terms = Vec::new();
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            terms.push(cosine_vars(g, embeddings[i], embeddings[j], "prompt embedding")?);
        }
    }
    if terms.is_empty() {
        for &e in embeddings {
            let n = g.norm(e);
            if g.scalar(n) == 0.0 {
                return Err(LaeError::ZeroNorm("prompt embedding".into()));
            }
        }
        return Ok(g.scalar_constant(0.0));
    }
    Ok(g.add_all(&terms))
}

pub fn token_contrastive_loss(embeddings: &[EmbeddingVector]) -> Result<f64> {
    check_dims(&embeddings.iter().collect::<Vec<_>>())?;
    let mut g = Graph::new();
    let vars: Vec<Var> = embeddings.iter().map(|e| g.constant(e.values.clone())).collect();
    let out = token_contrastive_loss_vars(&mut g, &vars)?;
    Ok(g.scalar(out))
}

/// `1 - cos(a, b)` on identity embeddings.
pub fn identity_term_vars(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let c = cosine_vars(g, a, b, "identity embedding")?;
    Ok(g.one_minus(c))
}

fn identity_embedding(g: &mut Graph, img: &RenderedImage, encoder: &dyn IdentityEncoder) -> Result<Var> {
    let v = g.constant(img.pixels().to_vec());
    encoder.encode(g, v, img.size())
}

/// Identity loss between frontal renders of the edited and source latents.
pub fn identity_loss(edited: &RenderedImage, source: &RenderedImage, encoder: &dyn IdentityEncoder) -> Result<f64> {
    if !edited.pose().is_frontal() || !source.pose().is_frontal() {
        return Err(LaeError::InvalidArgument("identity loss compares renders at the frontal pose".into()));
    }
    let mut g = Graph::new();
    let a = identity_embedding(&mut g, edited, encoder)?;
    let b = identity_embedding(&mut g, source, encoder)?;
    let out = identity_term_vars(&mut g, a, b)?;
    Ok(g.scalar(out))
}

/// Unordered index pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn unordered_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

/// Graph-level render of a flat latent through the backbone.
pub fn render_latent_vars(g: &mut Graph, backbone: &BackboneBundle, w: Var, alpha_branch: &[Var], pose: CameraPose) -> Result<Var> {
    let mpi = backbone.generator.generate(g, w, alpha_branch)?;
    Ok(backbone.renderer.render(g, &mpi, pose))
}

/// `Σ_{i<j} 1 - cos(AF(R(G(ŵ_i), p1)), AF(R(G(ŵ_j), p2)))` with one pose
/// pair per unordered latent pair (in [`unordered_pairs`] order). Fewer than
/// two latents give zero.
pub fn view_consistency_identity_loss(
    edited: &[LatentCode],
    pose_pairs: &[(CameraPose, CameraPose)],
    backbone: &BackboneBundle,
    alpha_branch: &ParamSet,
    encoder: &dyn IdentityEncoder,
) -> Result<f64> {
    if edited.len() < 2 {
        log::warn!("view-consistency identity loss needs at least two edited latents; returning 0");
        return Ok(0.0);
    }
    let pairs = unordered_pairs(edited.len());
    if pose_pairs.len() != pairs.len() {
        return Err(LaeError::Shape(format!("{} pose pairs for {} latent pairs", pose_pairs.len(), pairs.len())));
    }
    let mut g = Graph::new();
    let alpha = alpha_branch.bind(&mut g, false);
    let size = backbone.generator.image_size();
    let mut terms = Vec::with_capacity(pairs.len());
    for (&(i, j), &(p1, p2)) in pairs.iter().zip(pose_pairs) {
        let wi = g.constant(edited[i].as_flat().to_vec());
        let wj = g.constant(edited[j].as_flat().to_vec());
        let ri = render_latent_vars(&mut g, backbone, wi, &alpha, p1)?;
        let rj = render_latent_vars(&mut g, backbone, wj, &alpha, p2)?;
        let ei = encoder.encode(&mut g, ri, size)?;
        let ej = encoder.encode(&mut g, rj, size)?;
        terms.push(identity_term_vars(&mut g, ei, ej)?);
    }
    let out = g.add_all(&terms);
    Ok(g.scalar(out))
}

/// `‖M(w, Δv)‖₂`.
pub fn latent_reg_loss(w: &LatentCode, dv: &EmbeddingVector, mapper: &MapperParams, split: &LatentSplit) -> Result<f64> {
    Ok(map_edit(w, dv, mapper, split)?.l2_norm())
}

/// `‖H(ŵ)‖₂` of the alpha-branch output.
pub fn alpha_reg_loss(branch_output: &[f64]) -> Result<f64> {
    ensure_finite(branch_output, "alpha branch output")?;
    Ok(branch_output.iter().map(|v| v * v).sum::<f64>().sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub dclip: f64,
    pub sc: f64,
    pub id: f64,
    pub idvc: f64,
    pub latent: f64,
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { dclip: 1.0, sc: 0.8, id: 0.8, idvc: 0.5, latent: 0.5, alpha: 0.5 }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 6] {
        [self.dclip, self.sc, self.id, self.idvc, self.latent, self.alpha]
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LaeError::InvalidArgument(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

pub const TERM_NAMES: [&str; 6] = ["dclip", "sc", "id", "idvc", "latent", "alpha"];

/// Unweighted loss terms of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub dclip: f64,
    pub sc: f64,
    pub id: f64,
    pub idvc: f64,
    pub latent: f64,
    pub alpha: f64,
}

impl LossTerms {
    pub fn as_array(&self) -> [f64; 6] {
        [self.dclip, self.sc, self.id, self.idvc, self.latent, self.alpha]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { dclip: a[0], sc: a[1], id: a[2], idvc: a[3], latent: a[4], alpha: a[5] }
    }
}

/// Unweighted terms plus the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub dclip: f64,
    pub sc: f64,
    pub id: f64,
    pub idvc: f64,
    pub latent: f64,
    pub alpha: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn terms(&self) -> LossTerms {
        LossTerms { dclip: self.dclip, sc: self.sc, id: self.id, idvc: self.idvc, latent: self.latent, alpha: self.alpha }
    }

    /// Name of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        TERM_NAMES
            .iter()
            .zip(self.terms().as_array())
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| *n)
            .or(if self.total.is_finite() { None } else { Some("total") })
    }
}

/// Weighted sum accumulated in term order.
pub fn total_loss(terms: LossTerms, weights: &LossWeights) -> Result<LossBreakdown> {
    weights.validate()?;
    let total = terms
        .as_array()
        .iter()
        .zip(weights.as_array())
        .map(|(t, w)| w * t)
        .reduce(|a, b| a + b)
        .expect("six terms");
    let t = terms;
    Ok(LossBreakdown { dclip: t.dclip, sc: t.sc, id: t.id, idvc: t.idvc, latent: t.latent, alpha: t.alpha, total })
}

/// Graph version of [`total_loss`]; same accumulation order.
pub fn total_loss_vars(g: &mut Graph, terms: [Var; 6], weights: &LossWeights) -> Result<Var> {
    weights.validate()?;
    let scaled: Vec<Var> = terms.iter().zip(weights.as_array()).map(|(&t, w)| g.scale(t, w)).collect();
    Ok(g.add_all(&scaled))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_terms_with_default_weights_sum_to_4_1() {
        let b = total_loss(LossTerms::from_array([1.0; 6]), &LossWeights::default()).unwrap();
        assert!((b.total - 4.1).abs() < 1e-12);
        let z = total_loss(LossTerms::default(), &LossWeights::default()).unwrap();
        assert_eq!(z.total, 0.0);
    }

    #[test]
    fn negative_weights_are_rejected() {
        let w = LossWeights { sc: -0.1, ..LossWeights::default() };
        assert!(total_loss(LossTerms::default(), &w).is_err());
    }

    #[test]
    fn pair_enumeration() {
        assert_eq!(unordered_pairs(1), vec![]);
        assert_eq!(unordered_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn identical_vectors_have_cosine_exactly_one() {
        let v = [0.1, -0.37, 2.5, 1e-3];
        assert_eq!(cosine(&v, &v).unwrap(), 1.0);
        assert!(matches!(cosine(&v, &[0.0; 4]), Err(LaeError::ZeroNorm(_))));
    }

    #[test]
    fn first_non_finite_names_the_term() {
        let b = LossBreakdown { idvc: f64::NAN, ..LossBreakdown::default() };
        assert_eq!(b.first_non_finite(), Some("idvc"));
    }
}

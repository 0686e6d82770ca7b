// SPDX-License-Identifier: MIT OR Apache-2.0

//! One optimisation step over a sampled batch.
//!
//! Reductions: the per-latent terms (`dclip`, `id`, `latent`, `alpha`) are
//! summed over attributes and `idvc` over its pairs, then every per-latent
//! term is averaged over the batch. `sc` depends only on the prompts and is
//! computed once.

use laekit_core::losses::{
    cosine_vars, directional_term_vars, identity_term_vars, render_latent_vars, token_contrastive_loss_vars,
    total_loss, total_loss_vars, unordered_pairs,
};
use laekit_core::mapper::map_edit_vars;
use laekit_core::pose::sample_pose;
use laekit_core::tape::{Graph, Var};
use laekit_core::{CameraPose, LatentCode, LossBreakdown, LossTerms};
use rand::Rng;

use crate::adam::{clip_global_norm, AdamHyper};
use crate::config::IdvcMode;
use crate::error::{Result, TrainError};
use crate::state::TrainState;

/// Everything random about one step, drawn up front so the same batch can
/// be re-evaluated (finite differences, replays).
#[derive(Clone, Debug, PartialEq)]
pub struct StepBatch {
    pub latents: Vec<LatentCode>,
    /// `[latent][attribute]`: edited-render pose and source-render pose.
    pub dclip_poses: Vec<Vec<(CameraPose, CameraPose)>>,
    /// `[latent][pair]`: one pose per side of each view-consistency pair.
    pub idvc_poses: Vec<Vec<(CameraPose, CameraPose)>>,
}

fn idvc_pair_count(state: &TrainState) -> usize {
    let n = state.n_attributes();
    match state.config.idvc_mode {
        IdvcMode::EditedPairs => unordered_pairs(n).len(),
        IdvcMode::EditedVsOriginal => n,
    }
}

impl StepBatch {
    pub fn sample<R: Rng + ?Sized>(state: &TrainState, rng: &mut R) -> Result<Self> {
        let (yaw, pitch) = (state.config.yaw_range, state.config.pitch_range);
        let n = state.n_attributes();
        let pairs = idvc_pair_count(state);
        let mut batch = Self { latents: Vec::new(), dclip_poses: Vec::new(), idvc_poses: Vec::new() };
        for _ in 0..state.config.batch_latents {
            batch.latents.push(state.sample_latent(rng)?);
            let mut pose_pair = || -> Result<(CameraPose, CameraPose)> {
                Ok((sample_pose(rng, yaw, pitch)?, sample_pose(rng, yaw, pitch)?))
            };
            batch.dclip_poses.push((0..n).map(|_| pose_pair()).collect::<Result<_>>()?);
            batch.idvc_poses.push((0..pairs).map(|_| pose_pair()).collect::<Result<_>>()?);
        }
        Ok(batch)
    }
}

/// Loss breakdown and, when requested, gradients for each trainable array.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub losses: LossBreakdown,
    pub grads: Option<Vec<Vec<f64>>>,
}

fn mean(g: &mut Graph, terms: &[Var]) -> Var {
    let s = g.add_all(terms);
    g.scale(s, 1.0 / terms.len() as f64)
}

/// Evaluate `L_total` on `batch` with trainable values `values` (ordered as
/// [`TrainState::param_arrays`]).
pub fn evaluate(state: &TrainState, batch: &StepBatch, values: &[Vec<f64>], with_grad: bool) -> Result<Evaluation> {
    let mut g = Graph::new();
    let bound = state.bind_values(&mut g, values, with_grad)?;
    let original = state.alpha_init.bind(&mut g, false);
    let backbone = &state.backbone;
    let image_enc = state.encoders.image.as_ref();
    let id_enc = state.encoders.identity.as_ref();
    let size = backbone.generator.image_size();
    let n = state.n_attributes();
    let n_layers = backbone.dims().n_layers;

    let dvs = (0..n).map(|i| state.prompt_embedding_vars(&mut g, &bound, i)).collect::<Result<Vec<_>>>()?;
    let src_text = g.constant(state.source_text.values.clone());
    let sc = token_contrastive_loss_vars(&mut g, &dvs)?;

    let (mut dclip, mut id, mut idvc, mut latent, mut alpha) = (vec![], vec![], vec![], vec![], vec![]);
    for (b, w) in batch.latents.iter().enumerate() {
        let wv = g.constant(w.as_flat().to_vec());
        let src_mpi = backbone.generator.generate(&mut g, wv, &original)?;
        let src_front = backbone.renderer.render(&mut g, &src_mpi, CameraPose::FRONTAL);
        let src_front_id = id_enc.encode(&mut g, src_front, size)?;

        let (mut d_terms, mut id_terms, mut lat_terms, mut a_terms) = (vec![], vec![], vec![], vec![]);
        let mut edited = Vec::with_capacity(n);
        for (i, &dv) in dvs.iter().enumerate() {
            let dw = map_edit_vars(&mut g, wv, n_layers, dv, &bound.mapper, &state.split)?;
            let w_hat = g.add(wv, dw);
            let mpi = backbone.generator.generate(&mut g, w_hat, &bound.alpha)?;

            let (p1, p2) = batch.dclip_poses[b][i];
            let edited_img = backbone.renderer.render(&mut g, &mpi, p1);
            let source_img = backbone.renderer.render(&mut g, &src_mpi, p2);
            let e = image_enc.encode(&mut g, edited_img, size)?;
            let s = image_enc.encode(&mut g, source_img, size)?;
            d_terms.push(directional_term_vars(&mut g, e, s, dv, src_text)?);

            let front = backbone.renderer.render(&mut g, &mpi, CameraPose::FRONTAL);
            let front_id = id_enc.encode(&mut g, front, size)?;
            id_terms.push(identity_term_vars(&mut g, front_id, src_front_id)?);

            lat_terms.push(g.norm(dw));
            a_terms.push(match mpi.alpha_logits {
                Some(h) => g.norm(h),
                None => g.scalar_constant(0.0),
            });
            edited.push(w_hat);
        }

        let mut vc_terms = Vec::new();
        match state.config.idvc_mode {
            IdvcMode::EditedPairs => {
                for (k, (i, j)) in unordered_pairs(n).into_iter().enumerate() {
                    let (p1, p2) = batch.idvc_poses[b][k];
                    let ri = render_latent_vars(&mut g, backbone, edited[i], &bound.alpha, p1)?;
                    let rj = render_latent_vars(&mut g, backbone, edited[j], &bound.alpha, p2)?;
                    let (ei, ej) = (id_enc.encode(&mut g, ri, size)?, id_enc.encode(&mut g, rj, size)?);
                    vc_terms.push(identity_term_vars(&mut g, ei, ej)?);
                }
            }
            IdvcMode::EditedVsOriginal => {
                for (i, &w_hat) in edited.iter().enumerate() {
                    let (p1, p2) = batch.idvc_poses[b][i];
                    let ri = render_latent_vars(&mut g, backbone, w_hat, &bound.alpha, p1)?;
                    let ro = backbone.renderer.render(&mut g, &src_mpi, p2);
                    let (ei, eo) = (id_enc.encode(&mut g, ri, size)?, id_enc.encode(&mut g, ro, size)?);
                    vc_terms.push(identity_term_vars(&mut g, ei, eo)?);
                }
            }
        }

        dclip.push(g.add_all(&d_terms));
        id.push(g.add_all(&id_terms));
        latent.push(g.add_all(&lat_terms));
        alpha.push(g.add_all(&a_terms));
        idvc.push(if vc_terms.is_empty() { g.scalar_constant(0.0) } else { g.add_all(&vc_terms) });
    }

    let terms_v = [mean(&mut g, &dclip), sc, mean(&mut g, &id), mean(&mut g, &idvc), mean(&mut g, &latent), mean(&mut g, &alpha)];
    let terms = LossTerms::from_array(terms_v.map(|v| g.scalar(v)));
    let mut losses = total_loss(terms, &state.config.weights)?;
    let total = total_loss_vars(&mut g, terms_v, &state.config.weights)?;
    losses.total = g.scalar(total);
    if let Some(term) = losses.first_non_finite() {
        return Err(TrainError::NonFiniteLoss { term, step: state.step + 1 });
    }
    let grads = with_grad.then(|| {
        let gr = g.backward(total);
        bound.all().iter().zip(values).map(|(&v, val)| gr.get_or_zeros(v, val.len())).collect()
    });
    Ok(Evaluation { losses, grads })
}

/// Mean pairwise cosine between the current prompt embeddings.
pub fn mean_prompt_cosine(state: &TrainState) -> Result<f64> {
    let embs = state.prompt_embeddings()?;
    let pairs = unordered_pairs(embs.len());
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = embs.iter().map(|e| g.constant(e.values.clone())).collect();
    let mut total = 0.0;
    for (i, j) in &pairs {
        let c = cosine_vars(&mut g, vars[*i], vars[*j], "prompt embedding")?;
        total += g.scalar(c);
    }
    Ok(total / pairs.len() as f64)
}

/// Sample a batch, evaluate, and apply one Adam update. Returns the losses
/// measured before the update.
pub fn train_step<R: Rng + ?Sized>(state: &mut TrainState, rng: &mut R) -> Result<LossBreakdown> {
    let batch = StepBatch::sample(state, rng)?;
    let values = state.param_values();
    let eval = evaluate(state, &batch, &values, true)?;
    let mut grads = eval.grads.expect("requested gradients");
    if let Some(c) = state.config.grad_clip {
        let norm = clip_global_norm(&mut grads, c);
        log::debug!("step {}: gradient norm {norm:.4e}", state.step + 1);
    }
    let cfg = &state.config;
    let hyper = AdamHyper { lr: cfg.lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps };
    let t = state.step + 1;
    let mut adam = std::mem::take(&mut state.adam);
    let result = adam.update(&mut state.param_arrays_mut(), &grads, t, hyper);
    state.adam = adam;
    result?;
    state.step = t;
    Ok(eval.losses)
}

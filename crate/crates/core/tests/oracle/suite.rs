// SPDX-License-Identifier: MIT OR Apache-2.0

//! Every loss term against its loop oracle on seeded random inputs.

use laekit_core::backbones::{labelled_rng, toy_backbone, ToyConfig};
use laekit_core::losses::{
    alpha_reg_loss, directional_clip_from_embeddings, directional_clip_loss, identity_loss, latent_reg_loss, total_loss,
    token_contrastive_loss, unordered_pairs, view_consistency_identity_loss,
};
use laekit_core::mapper::init_mapper;
use laekit_core::params::ParamSet;
use laekit_core::tape::Graph;
use laekit_core::{
    composite_mpi, sample_pose, AngleRange, CameraPose, EmbeddingVector, LatentCode, LatentSplit, LossTerms, LossWeights,
    RenderedImage,
};
use rand::Rng;

use super::{
    gaussian_vec, loop_contrastive, loop_cosine, loop_dclip, loop_map_edit, loop_norm, loop_render, OpenIdentityEncoder,
    OpenImageEncoder,
};

#[derive(Clone, Debug)]
pub struct OracleCheck {
    pub name: &'static str,
    pub k: usize,
    pub error: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

fn emb(v: Vec<f64>) -> EmbeddingVector {
    EmbeddingVector::new(v).unwrap()
}

fn image(v: Vec<f64>, size: usize, pose: CameraPose) -> RenderedImage {
    RenderedImage::new(size, v, pose).unwrap()
}

/// Run all loss oracles for `k` attributes under `seed`.
pub fn loss_oracle_suite(seed: u64, k: usize) -> Vec<OracleCheck> {
    let mut rng = labelled_rng(seed, &format!("oracle.k{k}"));
    let mut out = Vec::new();
    let mut push = |name, error: f64, tolerance| out.push(OracleCheck { name, k, error: error.abs(), tolerance });
    let d = 24;

    // directional term on embeddings
    let mut vecs = |n: usize| (0..n).map(|_| gaussian_vec(&mut rng, d, 1.0)).collect::<Vec<_>>();
    let (e, s, t) = (vecs(k), vecs(k), vecs(k));
    let src = vecs(1).remove(0);
    let got = directional_clip_from_embeddings(
        &e.iter().cloned().map(emb).collect::<Vec<_>>(),
        &s.iter().cloned().map(emb).collect::<Vec<_>>(),
        &t.iter().cloned().map(emb).collect::<Vec<_>>(),
        &emb(src.clone()),
    )
    .unwrap();
    push("directional (embeddings)", got - loop_dclip(&e, &s, &t, &src), 1e-6);

    // directional term through an image encoder
    let size = 8;
    let enc = OpenImageEncoder::new(&mut rng, size, d);
    let mut pixels = || (0..size * size * 3).map(|_| rng.random::<f64>()).collect::<Vec<f64>>();
    let edited: Vec<Vec<f64>> = (0..k).map(|_| pixels()).collect();
    let source: Vec<Vec<f64>> = (0..k).map(|_| pixels()).collect();
    let got = directional_clip_loss(
        &edited.iter().map(|p| image(p.clone(), size, CameraPose::FRONTAL)).collect::<Vec<_>>(),
        &source.iter().map(|p| image(p.clone(), size, CameraPose::FRONTAL)).collect::<Vec<_>>(),
        &t.iter().cloned().map(emb).collect::<Vec<_>>(),
        &emb(src.clone()),
        &enc,
    )
    .unwrap();
    let ee: Vec<_> = edited.iter().map(|p| enc.loop_embed(p)).collect();
    let se: Vec<_> = source.iter().map(|p| enc.loop_embed(p)).collect();
    push("directional (images)", got - loop_dclip(&ee, &se, &t, &src), 1e-6);

    // contrastive term
    let got = token_contrastive_loss(&e.iter().cloned().map(emb).collect::<Vec<_>>()).unwrap();
    push("contrastive", got - loop_contrastive(&e), 1e-6);

    // identity and view-consistency terms on toy renders
    let cfg = ToyConfig { seed, ..ToyConfig::default() };
    let backbone = toy_backbone(&cfg).unwrap();
    let dims = backbone.dims();
    let id_enc = OpenIdentityEncoder::new(&mut rng, dims.image_size, 32);
    let mut alpha = backbone.generator.alpha_branch_init();
    for a in &mut alpha.arrays {
        a.data = gaussian_vec(&mut rng, a.data.len(), 0.1).into_iter().map(|v| v as f32).collect();
    }
    let latents: Vec<LatentCode> = (0..k)
        .map(|_| LatentCode::from_flat(dims.n_layers, dims.latent_dim, gaussian_vec(&mut rng, dims.n_layers * dims.latent_dim, 1.0)).unwrap())
        .collect();
    let mpi = |w: &LatentCode, alpha: &ParamSet| {
        let mut g = Graph::new();
        let wv = g.constant(w.as_flat().to_vec());
        let bound = alpha.bind(&mut g, false);
        backbone.generator.generate(&mut g, wv, &bound).unwrap().to_value(&g).unwrap()
    };
    let parallax = backbone.compositor.parallax_px;
    let frontal: Vec<_> = latents.iter().map(|w| composite_mpi(&mpi(w, &alpha), CameraPose::FRONTAL, &backbone.compositor).unwrap()).collect();
    let original = composite_mpi(&mpi(&latents[0], &backbone.generator.alpha_branch_init()), CameraPose::FRONTAL, &backbone.compositor).unwrap();
    let mut worst: f64 = 0.0;
    for img in &frontal {
        let got = identity_loss(img, &original, &id_enc).unwrap();
        let want = 1.0 - loop_cosine(&id_enc.loop_embed(img.pixels()), &id_enc.loop_embed(original.pixels()));
        worst = worst.max((got - want).abs());
    }
    push("identity", worst, 1e-6);

    let (yaw, pitch) = (AngleRange::new(-30.0, 30.0).unwrap(), AngleRange::new(-20.0, 20.0).unwrap());
    let pairs = unordered_pairs(k);
    let poses: Vec<(CameraPose, CameraPose)> =
        pairs.iter().map(|_| (sample_pose(&mut rng, yaw, pitch).unwrap(), sample_pose(&mut rng, yaw, pitch).unwrap())).collect();
    let got = view_consistency_identity_loss(&latents, &poses, &backbone, &alpha, &id_enc).unwrap();
    let mut want = 0.0;
    for (&(i, j), &(p1, p2)) in pairs.iter().zip(&poses) {
        let ri = loop_render(&mpi(&latents[i], &alpha), p1, parallax);
        let rj = loop_render(&mpi(&latents[j], &alpha), p2, parallax);
        want += 1.0 - loop_cosine(&id_enc.loop_embed(&ri), &id_enc.loop_embed(&rj));
    }
    push("view consistency", got - want, 1e-5);

    // latent regulariser
    let mut mapper = init_mapper(dims.latent_dim, d, 0.1, &mut rng).unwrap();
    for a in &mut mapper.arrays_mut().arrays {
        if a.name.ends_with(".bias") {
            a.data = gaussian_vec(&mut rng, a.data.len(), 0.2).into_iter().map(|v| v as f32).collect();
        }
    }
    let split = LatentSplit::thirds(dims.n_layers).unwrap();
    let mut worst: f64 = 0.0;
    for (w, dv) in latents.iter().zip(&t) {
        let got = latent_reg_loss(w, &emb(dv.clone()), &mapper, &split).unwrap();
        worst = worst.max((got - loop_norm(&loop_map_edit(w, dv, &mapper, &split))).abs());
    }
    push("latent", worst, 1e-6);

    // alpha regulariser
    let h = gaussian_vec(&mut rng, 4 * 32 * 32 * k, 0.5);
    push("alpha", alpha_reg_loss(&h).unwrap() - loop_norm(&h), 1e-6);

    // weighted total
    let terms: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..3.0));
    let w: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..2.0));
    let weights = LossWeights { dclip: w[0], sc: w[1], id: w[2], idvc: w[3], latent: w[4], alpha: w[5] };
    let got = total_loss(LossTerms::from_array(terms), &weights).unwrap().total;
    let mut want = 0.0;
    for i in 0..6 {
        want += w[i] * terms[i];
    }
    push("total", got - want, 1e-9);
    out
}

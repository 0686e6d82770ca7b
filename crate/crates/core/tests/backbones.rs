// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::Path;

use laekit_core::backbones::{
    export_backbone, frozen_fingerprint, labelled_rng, load_backbone, toy_encoders, BackboneBundle, BackboneKind,
    BundleDims, LatentDims, LinearMapping, LinearMpiGenerator, PlaneConfig, ToyConfig,
};
use laekit_core::mpi::{plane_depths, MpiVars};
use laekit_core::params::ParamSet;
use laekit_core::tape::{Graph, Var};
use laekit_core::{CameraPose, CompositorConfig, LaeError, MultiplaneImage};
use rand::Rng;

fn toy() -> BackboneBundle {
    load_backbone(BackboneKind::Toy, None, &ToyConfig::default()).unwrap()
}

fn random(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn small_parts(seed: u64) -> (LinearMapping, LinearMpiGenerator) {
    let mut rng = labelled_rng(seed, "parts");
    let (size, dims, planes) = (8, LatentDims { dim: 4, n_layers: 3 }, 2);
    let mapping = LinearMapping::new(5, dims, random(&mut rng, 4 * 5, 0.5), random(&mut rng, 12, 0.3)).unwrap();
    let generator = LinearMpiGenerator::new(
        size,
        dims,
        PlaneConfig { train_planes: planes, infer_planes: planes, near: 0.95, far: 1.12 },
        plane_depths(planes, 0.95, 1.12),
        random(&mut rng, 3 * 64 * 4, 0.5),
        random(&mut rng, 3 * 64, 0.5),
        random(&mut rng, planes * 64 * 4, 0.5),
        4,
    )
    .unwrap();
    (mapping, generator)
}

fn exported(dir: &Path, kind: BackboneKind) -> std::path::PathBuf {
    let (mapping, generator) = small_parts(1);
    let path = dir.join(format!("{kind}.lbb"));
    export_backbone(kind, &mapping, &generator, CompositorConfig { parallax_px: 1.5 }, &path).unwrap();
    path
}

/// Generate an MPI with the given alpha-branch values on `g`.
fn generate(g: &mut Graph, b: &BackboneBundle, w: Var, alpha: &ParamSet) -> MpiVars {
    let bound = alpha.bind(g, false);
    b.generator.generate(g, w, &bound).unwrap()
}

fn frontal_render(b: &BackboneBundle, w: &[f64]) -> Vec<f64> {
    let mut g = Graph::new();
    let wv = g.constant(w.to_vec());
    let mpi = generate(&mut g, b, wv, &b.generator.alpha_branch_init());
    let img = b.renderer.render(&mut g, &mpi, CameraPose::FRONTAL);
    g.value(img).to_vec()
}

fn latent(b: &BackboneBundle, seed: u64) -> Vec<f64> {
    let d = b.dims();
    let mut rng = labelled_rng(seed, "latent");
    let z: Vec<f64> = random(&mut rng, b.mapping.z_dim(), 1.7);
    b.mapping.map(&z).unwrap().into_flat().into_iter().take(d.n_layers * d.latent_dim).collect()
}

#[test]
fn toy_bundle_reports_documented_dims() {
    assert_eq!(toy().dims(), BundleDims { latent_dim: 32, n_layers: 12, image_size: 32, planes: 4 });
    assert!(load_backbone(BackboneKind::Gmpi, None, &ToyConfig::default()).is_err());
    assert_eq!("eg3d".parse::<BackboneKind>().unwrap(), BackboneKind::Eg3d);
    assert!("stylegan".parse::<BackboneKind>().is_err());
}

#[test]
fn toy_bundle_is_deterministic_across_loads() {
    let (a, b) = (toy(), toy());
    let w = latent(&a, 3);
    assert_eq!(frontal_render(&a, &w), frontal_render(&b, &w));
    let enc = toy_encoders(&ToyConfig::default()).unwrap();
    assert_eq!(frozen_fingerprint(&a, &enc), frozen_fingerprint(&b, &enc));
    let other = load_backbone(BackboneKind::Toy, None, &ToyConfig { seed: 8, ..ToyConfig::default() }).unwrap();
    assert_ne!(frozen_fingerprint(&other, &enc), frozen_fingerprint(&a, &enc));
}

#[test]
fn exported_backbone_loads_under_its_kind_only() {
    let tmp = tempfile::tempdir().unwrap();
    let path = exported(tmp.path(), BackboneKind::Gmpi);
    let toy_cfg = ToyConfig::default();
    let a = load_backbone(BackboneKind::Gmpi, Some(&path), &toy_cfg).unwrap();
    let b = load_backbone(BackboneKind::Gmpi, Some(&path), &toy_cfg).unwrap();
    assert_eq!(a.dims(), BundleDims { latent_dim: 4, n_layers: 3, image_size: 8, planes: 2 });
    let w: Vec<f64> = (0..12).map(|i| f64::from(i) * 0.1 - 0.5).collect();
    assert_eq!(frontal_render(&a, &w), frontal_render(&b, &w));

    // the loaded generator matches the one that was exported
    let (_, generator) = small_parts(1);
    let original = BackboneBundle { generator: std::sync::Arc::new(generator), ..a.clone() };
    assert_eq!(frontal_render(&original, &w), frontal_render(&a, &w));

    match load_backbone(BackboneKind::Eg3d, Some(&path), &toy_cfg) {
        Err(LaeError::KindMismatch { requested, found }) => assert_eq!((requested.as_str(), found.as_str()), ("eg3d", "gmpi")),
        other => panic!("expected a kind mismatch, got {other:?}"),
    }
}

#[test]
fn damaged_backbone_files_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = exported(tmp.path(), BackboneKind::Stylenerf);
    let bytes = fs::read(&path).unwrap();
    let load = |p: &Path| load_backbone(BackboneKind::Stylenerf, Some(p), &ToyConfig::default());

    let truncated = tmp.path().join("truncated.lbb");
    fs::write(&truncated, &bytes[..bytes.len() - 9]).unwrap();
    assert!(matches!(load(&truncated), Err(LaeError::CorruptCheckpoint(_))));

    let flipped = tmp.path().join("flipped.lbb");
    let mut b = bytes.clone();
    let last = b.len() - 3;
    b[last] ^= 1;
    fs::write(&flipped, b).unwrap();
    assert!(matches!(load(&flipped), Err(LaeError::CorruptCheckpoint(_))));

    let garbage = tmp.path().join("garbage.lbb");
    fs::write(&garbage, b"not a backbone").unwrap();
    assert!(matches!(load(&garbage), Err(LaeError::CorruptCheckpoint(_))));

    // rewrite the header with a future version
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let mut header: serde_json::Value = serde_json::from_slice(&bytes[12..12 + hlen]).unwrap();
    header["format_version"] = 2.into();
    let json = serde_json::to_vec(&header).unwrap();
    let mut out = bytes[..8].to_vec();
    out.extend((json.len() as u32).to_le_bytes());
    out.extend(json);
    out.extend(&bytes[12 + hlen..]);
    let future = tmp.path().join("future.lbb");
    fs::write(&future, out).unwrap();
    assert!(matches!(load(&future), Err(LaeError::UnsupportedVersion { found: 2, expected: 1 })));

    assert!(load(&tmp.path().join("missing.lbb")).is_err());
}

#[test]
fn zero_latent_and_zero_branch_give_half_alphas() {
    let b = toy();
    let d = b.dims();
    let mut g = Graph::new();
    let w = g.constant(vec![0.0; d.n_layers * d.latent_dim]);
    let mpi = generate(&mut g, &b, w, &b.generator.alpha_branch_init()).to_value(&g).unwrap();
    assert!(mpi.alphas().iter().flatten().all(|&a| a == 0.5));

    let (_, generator) = small_parts(2);
    let b = BackboneBundle { generator: std::sync::Arc::new(generator.clone()), ..b };
    let mut g = Graph::new();
    let w = g.constant(vec![0.0; 12]);
    let mpi = generate(&mut g, &b, w, &b.generator.alpha_branch_init()).to_value(&g).unwrap();
    assert!(mpi.alphas().iter().flatten().all(|&a| a == 0.5));
    for (c, bias) in mpi.color().iter().zip(generator.color_bias.iter()) {
        assert!((c - 1.0 / (1.0 + (-bias).exp())).abs() < 1e-15);
    }
}

#[test]
fn identity_embeddings_are_unit_and_shift_tolerant() {
    let cfg = ToyConfig::default();
    let b = toy();
    let enc = toy_encoders(&cfg).unwrap();
    let size = cfg.image_size;
    let mut worst: f64 = 1.0;
    for seed in 0..16 {
        let img = frontal_render(&b, &latent(&b, seed));
        // one pixel to the right, repeating the left border column
        let moved: Vec<f64> = (0..img.len())
            .map(|i| {
                let (px, c) = (i / 3, i % 3);
                let (y, x) = (px / size, px % size);
                img[(y * size + x.saturating_sub(1)) * 3 + c]
            })
            .collect();
        let mut g = Graph::new();
        let x = g.constant(img);
        let shifted = g.constant(moved);
        let a = enc.identity.encode(&mut g, x, size).unwrap();
        let s = enc.identity.encode(&mut g, shifted, size).unwrap();
        let norm = g.norm(a);
        assert!((g.scalar(norm) - 1.0).abs() < 1e-6);
        let again = enc.identity.encode(&mut g, x, size).unwrap();
        assert_eq!(g.value(a), g.value(again));
        let cos = laekit_core::losses::cosine(g.value(a), g.value(s)).unwrap();
        worst = worst.min(cos);
    }
    assert!(worst > 0.9, "smallest shifted-image identity cosine {worst}");
}

#[test]
fn encoders_check_shapes_and_dims() {
    let cfg = ToyConfig::default();
    let enc = toy_encoders(&cfg).unwrap();
    let mut g = Graph::new();
    let small = g.constant(vec![0.5; 8 * 8 * 3]);
    assert!(enc.image.encode(&mut g, small, 8).is_err());
    assert!(enc.identity.encode(&mut g, small, 8).is_err());
    assert!(enc.text.encode(&mut g, &[]).is_err());
    let img = g.constant(vec![0.25; 32 * 32 * 3]);
    let e = enc.image.encode(&mut g, img, 32).unwrap();
    assert_eq!(g.value(e).len(), cfg.embed_dim);
    assert_eq!(enc.text.embed_dim(), enc.image.embed_dim());
}

/// Central differences of `f` at `coords` of `x` against `analytic`.
fn assert_fd(what: &str, x: &[f64], analytic: &[f64], coords: &[usize], f: impl Fn(&[f64]) -> f64) {
    let h = 1e-5;
    for &k in coords {
        let (mut plus, mut minus) = (x.to_vec(), x.to_vec());
        plus[k] += h;
        minus[k] -= h;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
        let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-8);
        assert!(rel <= 1e-3, "{what}[{k}]: analytic {} numeric {numeric}", analytic[k]);
    }
}

fn coords(seed: u64, n: usize) -> Vec<usize> {
    let mut rng = labelled_rng(seed, "coords");
    (0..5).map(|_| rng.random_range(0..n)).collect()
}

#[test]
fn rendered_pixel_gradient_wrt_latent_matches_finite_differences() {
    let b = toy();
    let w0 = latent(&b, 1);
    let pose = CameraPose::new(17.0, -9.0).unwrap();
    let pixel = 3 * (13 * 32 + 20) + 1;
    let run = |w: &[f64], grad: bool| -> (f64, Option<Vec<f64>>) {
        let mut g = Graph::new();
        let wv = if grad { g.param(w.to_vec()) } else { g.constant(w.to_vec()) };
        let mpi = generate(&mut g, &b, wv, &b.generator.alpha_branch_init());
        let img = b.renderer.render(&mut g, &mpi, pose);
        let p = g.slice(img, pixel, 1);
        let gr = grad.then(|| g.backward(p).get(wv).unwrap().to_vec());
        (g.scalar(p), gr)
    };
    let analytic = run(&w0, true).1.unwrap();
    assert_fd("pixel/w", &w0, &analytic, &coords(1, w0.len()), |w| run(w, false).0);
}

#[test]
fn compositor_gradients_match_finite_differences() {
    let mut rng = labelled_rng(5, "mpi");
    let (size, planes) = (8, 3);
    let color: Vec<f64> = (0..size * size * 3).map(|_| rng.random()).collect();
    let alphas: Vec<f64> = (0..planes * size * size).map(|_| rng.random()).collect();
    let depths = plane_depths(planes, 0.95, 1.12);
    let cfg = CompositorConfig { parallax_px: 3.0 };
    let pose = CameraPose::new(-24.0, 11.0).unwrap();
    let weights: Vec<f64> = (0..size * size * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let run = |color: &[f64], alphas: &[f64], grad: bool| {
        let mut g = Graph::new();
        let c = if grad { g.param(color.to_vec()) } else { g.constant(color.to_vec()) };
        let a: Vec<Var> = alphas.chunks(size * size).map(|p| if grad { g.param(p.to_vec()) } else { g.constant(p.to_vec()) }).collect();
        let mpi = MpiVars { size, color: c, alphas: a.clone(), depths: depths.clone(), alpha_logits: None };
        let img = laekit_core::mpi::composite_vars(&mut g, &mpi, pose, &cfg);
        let wv = g.constant(weights.clone());
        let loss = g.dot(img, wv);
        let grads = grad.then(|| {
            let gr = g.backward(loss);
            (gr.get(c).unwrap().to_vec(), a.iter().flat_map(|&v| gr.get(v).unwrap().to_vec()).collect::<Vec<_>>())
        });
        (g.scalar(loss), grads)
    };
    let (dc, da) = run(&color, &alphas, true).1.unwrap();
    assert_fd("composite/color", &color, &dc, &coords(2, color.len()), |c| run(c, &alphas, false).0);
    assert_fd("composite/alpha", &alphas, &da, &coords(3, alphas.len()), |a| run(&color, a, false).0);
    // the value-level renderer agrees with the graph
    let mpi = MultiplaneImage::new(size, color.clone(), alphas.chunks(size * size).map(<[f64]>::to_vec).collect(), depths.clone()).unwrap();
    let rendered = laekit_core::composite_mpi(&mpi, pose, &cfg).unwrap();
    assert!(rendered.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn end_to_end_gradients_reach_only_the_alpha_branch() {
    let cfg = ToyConfig::default();
    let b = toy();
    let enc = toy_encoders(&cfg).unwrap();
    let w0 = latent(&b, 2);
    let mut rng = labelled_rng(6, "branch");
    let init = b.generator.alpha_branch_init();
    let branch: Vec<Vec<f64>> = init.arrays.iter().map(|a| random(&mut rng, a.len(), 0.2)).collect();
    let pose = CameraPose::new(8.0, 14.0).unwrap();

    // image embedding · identity-embedding-derived scalar, through every frozen stage
    let run = |w: &[f64], branch: &[Vec<f64>], grad: bool| {
        let mut g = Graph::new();
        let wv = if grad { g.param(w.to_vec()) } else { g.constant(w.to_vec()) };
        let bv: Vec<Var> = branch.iter().map(|v| if grad { g.param(v.clone()) } else { g.constant(v.clone()) }).collect();
        let mpi = b.generator.generate(&mut g, wv, &bv).unwrap();
        let img = b.renderer.render(&mut g, &mpi, pose);
        let e = enc.image.encode(&mut g, img, 32).unwrap();
        let id = enc.identity.encode(&mut g, img, 32).unwrap();
        let (se, si) = (g.sum(e), g.sum(id));
        let loss = g.mul(se, si);
        let grads = grad.then(|| {
            let gr = g.backward(loss);
            let mut out = vec![gr.get(wv).unwrap().to_vec()];
            out.extend(bv.iter().map(|&v| gr.get(v).unwrap().to_vec()));
            out
        });
        (g.scalar(loss), grads)
    };
    let grads = run(&w0, &branch, true).1.unwrap();
    assert_fd("e2e/w", &w0, &grads[0], &coords(4, w0.len()), |w| run(w, &branch, false).0);
    for (i, name) in ["alpha weight", "alpha bias"].into_iter().enumerate() {
        let x = &branch[i];
        assert_fd(name, x, &grads[i + 1], &coords(5 + i as u64, x.len()), |v| {
            let mut bb = branch.clone();
            bb[i] = v.to_vec();
            run(&w0, &bb, false).0
        });
    }

    // with a constant latent, the branch arrays are the only leaves that get a gradient
    let mut g = Graph::new();
    let wv = g.constant(w0.clone());
    let bv: Vec<Var> = branch.iter().map(|v| g.param(v.clone())).collect();
    let mpi = b.generator.generate(&mut g, wv, &bv).unwrap();
    let img = b.renderer.render(&mut g, &mpi, pose);
    let s = g.sum(img);
    let gr = g.backward(s);
    assert!(gr.get(wv).is_none());
    assert!(bv.iter().all(|&v| gr.get(v).is_some_and(|d| d.iter().any(|x| *x != 0.0))));
}

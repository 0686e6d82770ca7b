// SPDX-License-Identifier: MIT OR Apache-2.0

//! Trainable state plus the frozen bundles it edits through.

use laekit_core::backbones::{
    frozen_fingerprint, labelled_rng, load_backbone, toy_encoders, BackboneBundle, EncoderBundle,
};
use laekit_core::latent::apply_edit;
use laekit_core::mapper::{init_mapper, map_edit_vars, MapperParams, MapperVars};
use laekit_core::mpi::{composite_mpi, MultiplaneImage};
use laekit_core::params::{ParamArray, ParamSet};
use laekit_core::prompt::{
    assemble_prompt, encode_prompt_vars, encode_text, init_style_tokens, PromptAssembly, StyleTokenTable, SystemPrompt,
};
use laekit_core::tape::{Graph, Var};
use laekit_core::{CameraPose, EditDirection, EmbeddingVector, LaeError, LatentCode, LatentSplit, RenderedImage};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::adam::AdamState;
use crate::config::TrainConfig;
use crate::error::{Result, TrainError};

/// Which alpha branch a render uses: the current trainable one or the
/// pretrained one the generator shipped with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Trained,
    Original,
}

pub struct TrainState {
    pub config: TrainConfig,
    pub backbone: BackboneBundle,
    pub encoders: EncoderBundle,
    pub split: LatentSplit,
    pub tokens: StyleTokenTable,
    pub mapper: MapperParams,
    pub alpha: ParamSet,
    /// Pretrained alpha branch, used for the unedited source renders.
    pub alpha_init: ParamSet,
    pub adam: AdamState,
    pub step: u64,
    pub(crate) assemblies: Vec<PromptAssembly>,
    pub(crate) source_text: EmbeddingVector,
}

impl std::fmt::Debug for TrainState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainState")
            .field("backbone", &self.backbone)
            .field("attributes", &self.tokens.attribute_names())
            .field("step", &self.step)
            .finish()
    }
}

/// Graph handles of every trainable array, in [`TrainState::param_arrays`] order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub tokens: Var,
    pub mapper: MapperVars,
    pub alpha: Vec<Var>,
}

impl BoundParams {
    pub fn all(&self) -> Vec<Var> {
        std::iter::once(self.tokens).chain(self.mapper.vars).chain(self.alpha.iter().copied()).collect()
    }
}

fn frozen_bundles(config: &TrainConfig) -> Result<(BackboneBundle, EncoderBundle, LatentSplit)> {
    config.validate()?;
    let backbone = load_backbone(config.backbone, config.backbone_path.as_deref(), &config.toy)?;
    let encoders = toy_encoders(&config.toy)?;
    let dims = backbone.dims();
    if dims.image_size != config.toy.image_size {
        return Err(TrainError::Config(format!(
            "backbone renders {0}x{0} images but the encoders expect {1}x{1}",
            dims.image_size, config.toy.image_size
        )));
    }
    let split = match &config.split {
        Some(s) => s.clone(),
        None => LatentSplit::thirds(dims.n_layers)?,
    };
    split.validate(dims.n_layers).map_err(|e| TrainError::Config(e.to_string()))?;
    Ok((backbone, encoders, split))
}

impl TrainState {
    /// Fresh state: Gaussian style tokens, Gaussian mapper weights with zero
    /// biases, and the generator's pretrained alpha branch.
    pub fn new(config: TrainConfig) -> Result<Self> {
        let (backbone, encoders, split) = frozen_bundles(&config)?;
        let names = config.attribute_names();
        let tokens = init_style_tokens(
            &names,
            config.tokens_per_attribute,
            encoders.text.token_dim(),
            &mut labelled_rng(config.seed, "init.style_tokens"),
        )?;
        let mapper = init_mapper(
            backbone.dims().latent_dim,
            encoders.text.embed_dim(),
            config.edit_scale,
            &mut labelled_rng(config.seed, "init.mapper"),
        )?;
        let alpha = backbone.generator.alpha_branch_init();
        Self::from_parts(config, backbone, encoders, split, tokens, mapper, alpha, None, 0)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        config: TrainConfig,
        backbone: BackboneBundle,
        encoders: EncoderBundle,
        split: LatentSplit,
        tokens: StyleTokenTable,
        mapper: MapperParams,
        alpha: ParamSet,
        adam: Option<AdamState>,
        step: u64,
    ) -> Result<Self> {
        let text = encoders.text.as_ref();
        let system = SystemPrompt::new(&config.system_prompt, text);
        let assemblies = config
            .attributes
            .iter()
            .enumerate()
            .map(|(i, a)| assemble_prompt(&tokens, i, &system, &text.embed_words(&a.prompt_text), text))
            .collect::<laekit_core::Result<Vec<_>>>()?;
        let source_text = encode_text(&config.source_text, text)?;
        let alpha_init = backbone.generator.alpha_branch_init();
        if alpha.arrays.len() != alpha_init.arrays.len()
            || alpha.arrays.iter().zip(&alpha_init.arrays).any(|(a, b)| a.name != b.name || a.shape != b.shape)
        {
            return Err(LaeError::Shape("alpha-branch arrays do not match the generator".into()).into());
        }
        if config.attributes.len() < 2 && config.idvc_mode == crate::config::IdvcMode::EditedPairs {
            log::warn!("view-consistency identity term needs two attributes; it contributes 0");
        }
        let mut state = Self {
            config,
            backbone,
            encoders,
            split,
            tokens,
            mapper,
            alpha,
            alpha_init,
            adam: AdamState::default(),
            step,
            assemblies,
            source_text,
        };
        state.adam = match adam {
            Some(a) => {
                a.check_matches(&state.param_arrays())?;
                a
            }
            None => AdamState::zeros_like(&state.param_arrays()),
        };
        Ok(state)
    }

    /// Trainable arrays in fixed order: style tokens, mapper, alpha branch.
    pub fn param_arrays(&self) -> Vec<&ParamArray> {
        std::iter::once(self.tokens.array()).chain(&self.mapper.arrays().arrays).chain(&self.alpha.arrays).collect()
    }

    pub fn param_arrays_mut(&mut self) -> Vec<&mut ParamArray> {
        let Self { tokens, mapper, alpha, .. } = self;
        std::iter::once(tokens.array_mut()).chain(mapper.arrays_mut().arrays.iter_mut()).chain(alpha.arrays.iter_mut()).collect()
    }

    /// Current trainable values promoted to `f64`, in [`Self::param_arrays`] order.
    pub fn param_values(&self) -> Vec<Vec<f64>> {
        self.param_arrays().iter().map(|a| a.to_f64()).collect()
    }

    pub fn attribute_names(&self) -> &[String] {
        self.tokens.attribute_names()
    }

    pub fn n_attributes(&self) -> usize {
        self.tokens.n_attributes()
    }

    pub fn frozen_fingerprint(&self) -> String {
        frozen_fingerprint(&self.backbone, &self.encoders)
    }

    pub fn source_text_embedding(&self) -> &EmbeddingVector {
        &self.source_text
    }

    /// Bind `values` (same order as [`Self::param_arrays`]) onto `g`.
    pub fn bind_values(&self, g: &mut Graph, values: &[Vec<f64>], trainable: bool) -> Result<BoundParams> {
        let arrays = self.param_arrays();
        if values.len() != arrays.len() || values.iter().zip(&arrays).any(|(v, a)| v.len() != a.len()) {
            return Err(LaeError::Shape("parameter values do not match the trainable arrays".into()).into());
        }
        let mut leaf = |v: &Vec<f64>| if trainable { g.param(v.clone()) } else { g.constant(v.clone()) };
        let vars: Vec<Var> = values.iter().map(&mut leaf).collect();
        Ok(BoundParams {
            tokens: vars[0],
            mapper: MapperVars {
                vars: vars[1..7].try_into().expect("six mapper arrays"),
                latent_dim: self.mapper.latent_dim(),
                embed_dim: self.mapper.embed_dim(),
                edit_scale: self.mapper.edit_scale(),
            },
            alpha: vars[7..].to_vec(),
        })
    }

    /// `Δv` for attribute `i` on a graph.
    pub fn prompt_embedding_vars(&self, g: &mut Graph, bound: &BoundParams, i: usize) -> Result<Var> {
        let seq = self.assemblies[i].to_vars(g, &self.tokens, bound.tokens);
        Ok(encode_prompt_vars(g, &seq, self.encoders.text.as_ref())?)
    }

    /// `Δv` for every attribute with the current tokens.
    pub fn prompt_embeddings(&self) -> Result<Vec<EmbeddingVector>> {
        let mut g = Graph::new();
        let bound = self.bind_values(&mut g, &self.param_values(), false)?;
        (0..self.n_attributes())
            .map(|i| {
                let v = self.prompt_embedding_vars(&mut g, &bound, i)?;
                Ok(EmbeddingVector::new(g.value(v).to_vec())?)
            })
            .collect()
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.tokens
            .index_of(name)
            .ok_or_else(|| TrainError::Config(format!("unknown attribute {name:?}; known: {:?}", self.attribute_names())))
    }

    /// `M(w, Δv_i)`.
    pub fn edit_direction(&self, w: &LatentCode, attribute: usize) -> Result<EditDirection> {
        if attribute >= self.n_attributes() {
            return Err(TrainError::Config(format!("attribute index {attribute} out of range")));
        }
        let mut g = Graph::new();
        let bound = self.bind_values(&mut g, &self.param_values(), false)?;
        let dv = self.prompt_embedding_vars(&mut g, &bound, attribute)?;
        let wv = g.constant(w.as_flat().to_vec());
        let dw = map_edit_vars(&mut g, wv, w.n_layers(), dv, &bound.mapper, &self.split)?;
        Ok(EditDirection::from_flat(w.n_layers(), w.dim(), g.value(dw).to_vec())?)
    }

    /// `ŵ = w + M(w, Δv_i)`.
    pub fn edit(&self, w: &LatentCode, attribute: usize) -> Result<LatentCode> {
        Ok(apply_edit(w, &self.edit_direction(w, attribute)?)?)
    }

    pub fn sample_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LatentCode> {
        let z: Vec<f64> = (0..self.backbone.mapping.z_dim()).map(|_| StandardNormal.sample(rng)).collect();
        Ok(self.backbone.mapping.map(&z)?)
    }

    pub fn branch(&self, branch: Branch) -> &ParamSet {
        match branch {
            Branch::Trained => &self.alpha,
            Branch::Original => &self.alpha_init,
        }
    }

    pub fn generate(&self, w: &LatentCode, branch: Branch) -> Result<MultiplaneImage> {
        let mut g = Graph::new();
        let wv = g.constant(w.as_flat().to_vec());
        let alpha = self.branch(branch).bind(&mut g, false);
        let mpi = self.backbone.generator.generate(&mut g, wv, &alpha)?;
        Ok(mpi.to_value(&g)?)
    }

    pub fn render(&self, w: &LatentCode, pose: CameraPose, branch: Branch) -> Result<RenderedImage> {
        Ok(composite_mpi(&self.generate(w, branch)?, pose, &self.backbone.compositor)?)
    }

    /// Raw alpha-branch output `H(ŵ)` of the trained branch.
    pub fn alpha_branch_output(&self, w: &LatentCode) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let wv = g.constant(w.as_flat().to_vec());
        let alpha = self.alpha.bind(&mut g, false);
        let mpi = self.backbone.generator.generate(&mut g, wv, &alpha)?;
        Ok(mpi.alpha_logits.map(|h| g.value(h).to_vec()).unwrap_or_default())
    }

    /// Identity embedding of a render.
    pub fn identity_embedding(&self, image: &RenderedImage) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let v = g.constant(image.pixels().to_vec());
        let e = self.encoders.identity.encode(&mut g, v, image.size())?;
        Ok(g.value(e).to_vec())
    }

    /// Mean `‖ŵ - w‖₂` over `n` latents drawn from a dedicated stream of `seed`,
    /// averaged over every attribute.
    pub fn mean_edit_norm(&self, n: usize, seed: u64) -> Result<f64> {
        let mut rng = labelled_rng(seed, "eval.edit_norm");
        let mut total = 0.0;
        for _ in 0..n {
            let w = self.sample_latent(&mut rng)?;
            for i in 0..self.n_attributes() {
                total += self.edit_direction(&w, i)?.l2_norm();
            }
        }
        Ok(total / (n * self.n_attributes()) as f64)
    }
}

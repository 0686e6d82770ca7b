// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use laekit_core::backbones::{BackboneKind, ToyConfig};
use laekit_core::prompt::DEFAULT_SYSTEM_PROMPT;
use laekit_core::{AngleRange, AttributeSpec, LatentSplit, LossWeights};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, TrainError};

/// Which renders the view-consistency identity term compares.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdvcMode {
    /// Two edited latents `ŵ_i`, `ŵ_j` per unordered attribute pair.
    #[default]
    EditedPairs,
    /// Each edited latent against its unedited source.
    EditedVsOriginal,
}

pub const DEFAULT_ATTRIBUTES: [&str; 3] = ["blond hair", "smile", "curly hair"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weights: LossWeights,
    pub batch_latents: usize,
    pub yaw_range: AngleRange,
    pub pitch_range: AngleRange,
    pub seed: u64,
    pub edit_scale: f64,
    pub backbone: BackboneKind,
    pub backbone_path: Option<PathBuf>,
    pub tokens_per_attribute: usize,
    pub attributes: Vec<AttributeSpec>,
    pub system_prompt: String,
    pub source_text: String,
    /// Layer groups; thirds of the layer count when absent.
    pub split: Option<LatentSplit>,
    pub idvc_mode: IdvcMode,
    /// Global gradient-norm clip; off when absent.
    pub grad_clip: Option<f64>,
    pub toy: ToyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weights: LossWeights::default(),
            batch_latents: 4,
            yaw_range: AngleRange { min: -30.0, max: 30.0 },
            pitch_range: AngleRange { min: -20.0, max: 20.0 },
            seed: 0,
            edit_scale: laekit_core::mapper::DEFAULT_EDIT_SCALE,
            backbone: BackboneKind::Toy,
            backbone_path: None,
            tokens_per_attribute: 1,
            attributes: DEFAULT_ATTRIBUTES.iter().map(|a| AttributeSpec::new(*a, *a)).collect(),
            system_prompt: DEFAULT_SYSTEM_PROMPT.to_string(),
            source_text: "face".to_string(),
            split: None,
            idvc_mode: IdvcMode::EditedPairs,
            grad_clip: None,
            toy: ToyConfig::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> TrainError {
    TrainError::Config(msg.into())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(config_err("steps must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(config_err(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(config_err(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(config_err("eps must be positive"));
        }
        if self.batch_latents < 1 {
            return Err(config_err("batch_latents must be at least 1"));
        }
        if !(self.edit_scale.is_finite() && self.edit_scale > 0.0) {
            return Err(config_err("edit_scale must be positive"));
        }
        if self.tokens_per_attribute < 1 {
            return Err(config_err("tokens_per_attribute must be at least 1"));
        }
        if self.attributes.is_empty() {
            return Err(config_err("attribute list is empty"));
        }
        let mut seen = HashSet::new();
        for a in &self.attributes {
            if a.name.trim().is_empty() || a.prompt_text.trim().is_empty() {
                return Err(config_err("attribute names and prompt texts must be non-empty"));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(config_err(format!("duplicate attribute {:?}", a.name)));
            }
        }
        if self.backbone != BackboneKind::Toy && self.backbone_path.is_none() {
            return Err(config_err(format!("backbone {} needs backbone_path", self.backbone)));
        }
        if self.source_text.trim().is_empty() {
            return Err(config_err("source_text must be non-empty"));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(config_err("grad_clip must be positive"));
            }
        }
        self.weights.validate().map_err(|e| config_err(e.to_string()))?;
        self.yaw_range.validate().map_err(|e| config_err(format!("yaw_range: {e}")))?;
        self.pitch_range.validate().map_err(|e| config_err(format!("pitch_range: {e}")))?;
        self.toy.validate().map_err(|e| config_err(format!("toy: {e}")))?;
        Ok(())
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.attributes.iter().map(|a| a.name.clone()).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Apply one `dotted.key=value` override. The key must already exist in
    /// the serialized config; the value is parsed as JSON and falls back to a
    /// plain string.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut root = serde_json::to_value(self)?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(map) => map.get_mut(part),
                Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| config_err(format!("override key {key:?} does not exist")))?;
        }
        *slot = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        let cfg: Self = serde_json::from_value(root).map_err(|e| config_err(format!("override {key}={value}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `key=value` strings in order.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        overrides.iter().try_fold(self.clone(), |cfg, o| {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| config_err(format!("override {o:?} is not key=value")))?;
            cfg.with_override(k.trim(), v.trim())
        })
    }
}

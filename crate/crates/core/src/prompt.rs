// SPDX-License-Identifier: MIT OR Apache-2.0

//! Learnable style tokens and prompt assembly.
//!
//! A prompt for attribute `i` is the token sequence
//! `[SOS, V_i1..V_im, t_1..t_L, A_i.., EOS]`: `m` learnable style tokens, the
//! frozen system prompt shared by every attribute, the frozen word embeddings
//! of the attribute text, and the encoder's start/end tokens. Only the `V`
//! slots are trainable.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backbones::TextEncoder;
use crate::error::{ensure_finite, LaeError, Result};
use crate::params::ParamArray;
use crate::tape::{Graph, Var};

/// Standard deviation of freshly initialised style tokens.
pub const TOKEN_INIT_STD: f64 = 0.02;

/// Point in the shared text/image embedding space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure_finite(&values, "embedding")?;
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// One attribute as supplied by the user: `{"name": .., "prompt_text": ..}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub prompt_text: String,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, prompt_text: impl Into<String>) -> Self {
        Self { name: name.into(), prompt_text: prompt_text.into() }
    }

    pub fn parse_list(json: &str) -> Result<Vec<AttributeSpec>> {
        let list: Vec<AttributeSpec> = serde_json::from_str(json)?;
        Ok(list)
    }
}

/// `n x m x d_l` learnable style tokens, one row per named attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleTokenTable {
    attribute_names: Vec<String>,
    m: usize,
    dim: usize,
    tokens: ParamArray,
}

pub const STYLE_TOKENS: &str = "style_tokens";

impl StyleTokenTable {
    pub fn from_array(attribute_names: Vec<String>, tokens: ParamArray) -> Result<Self> {
        let [n, m, dim] = tokens.shape[..] else {
            return Err(LaeError::Shape(format!("style tokens must be rank 3, got {:?}", tokens.shape)));
        };
        if n != attribute_names.len() || n == 0 || m == 0 || dim == 0 {
            return Err(LaeError::Shape(format!("token table {:?} for {} attributes", tokens.shape, attribute_names.len())));
        }
        if !tokens.is_finite() {
            return Err(LaeError::NonFinite("style tokens".into()));
        }
        Ok(Self { attribute_names, m, dim, tokens })
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn n_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn tokens_per_attribute(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn array(&self) -> &ParamArray {
        &self.tokens
    }

    pub fn array_mut(&mut self) -> &mut ParamArray {
        &mut self.tokens
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attribute_names.iter().position(|n| n == name)
    }

    /// Flat offset of token `j` of attribute `i`.
    pub fn offset(&self, attribute: usize, j: usize) -> usize {
        (attribute * self.m + j) * self.dim
    }

    pub fn token(&self, attribute: usize, j: usize) -> Vec<f64> {
        let o = self.offset(attribute, j);
        self.tokens.data[o..o + self.dim].iter().map(|&v| f64::from(v)).collect()
    }
}

pub fn init_style_tokens<R: Rng + ?Sized>(attribute_names: &[String], m: usize, dim: usize, rng: &mut R) -> Result<StyleTokenTable> {
    if m < 1 {
        return Err(LaeError::InvalidArgument("need at least one style token per attribute".into()));
    }
    if dim < 1 || attribute_names.is_empty() {
        return Err(LaeError::InvalidArgument("token dimension and attribute list must be non-empty".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = attribute_names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(LaeError::InvalidArgument(format!("duplicate attribute name {dup:?}")));
    }
    let normal = Normal::new(0.0, TOKEN_INIT_STD).expect("positive std");
    let n = attribute_names.len();
    let data = (0..n * m * dim).map(|_| normal.sample(rng) as f32).collect();
    let tokens = ParamArray::new(STYLE_TOKENS, vec![n, m, dim], data)?;
    StyleTokenTable::from_array(attribute_names.to_vec(), tokens)
}

/// Frozen instruction words shared by all attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemPrompt {
    pub words: Vec<String>,
    pub embedded: Vec<Vec<f64>>,
}

pub const DEFAULT_SYSTEM_PROMPT: &str = "a photo of a face with";

impl SystemPrompt {
    pub fn new(text: &str, encoder: &dyn TextEncoder) -> Self {
        let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        let embedded = encoder.embed_words(text);
        Self { words, embedded }
    }
}

/// Token slot kinds in an assembled prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Start,
    Style(usize),
    System,
    Attribute,
    End,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptAssembly {
    pub attribute_index: usize,
    pub slots: Vec<Slot>,
    pub sequence: Vec<Vec<f64>>,
}

impl PromptAssembly {
    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn trainable_mask(&self) -> Vec<bool> {
        self.slots.iter().map(|s| matches!(s, Slot::Style(_))).collect()
    }

    /// Place the sequence on a graph. Style slots become slices of
    /// `tokens`, the bound style-token table, so gradients reach them.
    pub fn to_vars(&self, g: &mut Graph, table: &StyleTokenTable, tokens: Var) -> Vec<Var> {
        self.slots
            .iter()
            .zip(&self.sequence)
            .map(|(slot, emb)| match slot {
                Slot::Style(j) => g.slice(tokens, table.offset(self.attribute_index, *j), table.dim()),
                _ => g.constant(emb.clone()),
            })
            .collect()
    }
}

pub fn assemble_prompt(
    table: &StyleTokenTable,
    attribute_index: usize,
    system: &SystemPrompt,
    attribute_text: &[Vec<f64>],
    encoder: &dyn TextEncoder,
) -> Result<PromptAssembly> {
    if attribute_index >= table.n_attributes() {
        return Err(LaeError::InvalidArgument(format!(
            "attribute index {attribute_index} out of range for {} attributes",
            table.n_attributes()
        )));
    }
    let d = table.dim();
    let (sos, eos) = encoder.special_tokens();
    if encoder.token_dim() != d
        || sos.len() != d
        || system.embedded.iter().chain(attribute_text).any(|e| e.len() != d)
    {
        return Err(LaeError::Shape(format!("prompt embeddings must all have dimension {d}")));
    }
    let mut slots = vec![Slot::Start];
    let mut sequence = vec![sos];
    for j in 0..table.tokens_per_attribute() {
        slots.push(Slot::Style(j));
        sequence.push(table.token(attribute_index, j));
    }
    for e in &system.embedded {
        slots.push(Slot::System);
        sequence.push(e.clone());
    }
    for e in attribute_text {
        slots.push(Slot::Attribute);
        sequence.push(e.clone());
    }
    slots.push(Slot::End);
    sequence.push(eos);
    Ok(PromptAssembly { attribute_index, slots, sequence })
}

fn check_sequence(encoder: &dyn TextEncoder, len: usize) -> Result<()> {
    if len == 0 {
        return Err(LaeError::InvalidArgument("empty token sequence".into()));
    }
    if len > encoder.context_len() {
        return Err(LaeError::InvalidArgument(format!(
            "sequence of {len} tokens exceeds encoder context of {}",
            encoder.context_len()
        )));
    }
    Ok(())
}

/// Graph-level prompt encoding; the result is `Δv`.
pub fn encode_prompt_vars(g: &mut Graph, sequence: &[Var], encoder: &dyn TextEncoder) -> Result<Var> {
    check_sequence(encoder, sequence.len())?;
    for &s in sequence {
        ensure_finite(g.value(s), "prompt token embedding")?;
    }
    let out = encoder.encode(g, sequence)?;
    ensure_finite(g.value(out), "prompt embedding")?;
    Ok(out)
}

pub fn encode_prompt(assembly: &PromptAssembly, encoder: &dyn TextEncoder) -> Result<EmbeddingVector> {
    let mut g = Graph::new();
    let seq: Vec<Var> = assembly.sequence.iter().map(|e| g.constant(e.clone())).collect();
    let out = encode_prompt_vars(&mut g, &seq, encoder)?;
    EmbeddingVector::new(g.value(out).to_vec())
}

/// Plain text `[SOS, words.., EOS]` placed on a graph as constants.
pub fn text_sequence_vars(g: &mut Graph, text: &str, encoder: &dyn TextEncoder) -> Vec<Var> {
    let (sos, eos) = encoder.special_tokens();
    std::iter::once(sos)
        .chain(encoder.embed_words(text))
        .chain(std::iter::once(eos))
        .map(|e| g.constant(e))
        .collect()
}

/// Encode plain text without learnable tokens (e.g. the source text "face").
pub fn encode_text(text: &str, encoder: &dyn TextEncoder) -> Result<EmbeddingVector> {
    let mut g = Graph::new();
    let seq = text_sequence_vars(&mut g, text, encoder);
    let out = encode_prompt_vars(&mut g, &seq, encoder)?;
    EmbeddingVector::new(g.value(out).to_vec())
}

//! Prompt-conditioned source extraction in the latent space.
//!
//! Prompt vectors are prepended to the feature sequence and mixed with it by
//! the cross-prompt Transformer. Each transformed prompt then modulates the
//! transformed features through FiLM, and a shared Transformer stack refines
//! the result into one feature map per prompt.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{cross_prompt_layer, extraction_layer, FeatureMap, ModelConfig, WeightStore, PROMPT_TABLE};
use crate::error::{ensure, Error, Result};
use crate::numerics::{transformer_stack, Matrix, MatrixView, TransformerLayerWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptType {
    Speech,
    Music,
    Sfx,
    Mix,
}

impl PromptType {
    pub const ALL: [PromptType; 4] = [
        PromptType::Speech,
        PromptType::Music,
        PromptType::Sfx,
        PromptType::Mix,
    ];

    /// Stream tag and prompt-table column.
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PromptType::Speech => "speech",
            PromptType::Music => "music",
            PromptType::Sfx => "sfx",
            PromptType::Mix => "mix",
        }
    }
}

impl fmt::Display for PromptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown prompt {s:?}")))
    }
}

/// Ordered, non-empty prompt list. Duplicates are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PromptType>", into = "Vec<PromptType>")]
pub struct PromptSpec(Vec<PromptType>);

impl PromptSpec {
    pub fn new(prompts: Vec<PromptType>) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::InvalidArgument("at least one prompt is required".into()));
        }
        Ok(Self(prompts))
    }

    /// Parses a comma-separated list such as `speech,speech,music`.
    pub fn parse(list: &str) -> Result<Self> {
        Self::new(
            list.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(str::parse)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn types(&self) -> &[PromptType] {
        &self.0
    }
}

impl TryFrom<Vec<PromptType>> for PromptSpec {
    type Error = Error;

    fn try_from(v: Vec<PromptType>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PromptSpec> for Vec<PromptType> {
    fn from(p: PromptSpec) -> Self {
        p.0
    }
}

impl fmt::Display for PromptSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|p| p.name()).collect();
        f.write_str(&names.join(","))
    }
}

/// One `F`-dimensional vector per prompt type, stored as the columns of an
/// `F × 4` table.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    table: Matrix,
}

impl PromptBank {
    pub fn new(table: Matrix) -> Result<Self> {
        if table.cols() != PromptType::ALL.len() || !table.is_finite() {
            return Err(Error::Config(format!(
                "prompt table must be finite F x 4, got {:?}",
                table.shape()
            )));
        }
        Ok(Self { table })
    }

    pub fn from_store(store: &WeightStore) -> Result<Self> {
        Self::new(store.matrix(PROMPT_TABLE)?.to_owned())
    }

    pub fn dim(&self) -> usize {
        self.table.rows()
    }

    pub fn vector(&self, prompt: PromptType) -> Vec<f32> {
        self.table.column(prompt.tag() as usize)
    }
}

/// The two prompt-to-feature maps of FiLM: `scale` multiplies the features,
/// `shift` is added.
#[derive(Debug, Clone, Copy)]
pub struct FilmWeights<'a> {
    pub scale: MatrixView<'a>,
    pub scale_bias: &'a [f32],
    pub shift: MatrixView<'a>,
    pub shift_bias: &'a [f32],
}

#[derive(Debug, Clone)]
pub struct ExtractorWeights<'a> {
    pub cross: Vec<TransformerLayerWeights<'a>>,
    pub film: FilmWeights<'a>,
    pub extraction: Vec<TransformerLayerWeights<'a>>,
}

impl<'a> ExtractorWeights<'a> {
    pub fn from_store(store: &'a WeightStore, config: &ModelConfig) -> Result<Self> {
        if !config.uses_extractor() {
            return Err(Error::Config(format!(
                "{} has no feature extractor",
                config.arch_family
            )));
        }
        let layers = |name: fn(usize) -> String, n: usize| {
            (0..n)
                .map(|k| store.transformer(&name(k), config.n_heads))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Self {
            cross: layers(cross_prompt_layer, config.n_cross_prompt_layers)?,
            film: FilmWeights {
                scale: store.matrix("extractor.film.scale.weight")?,
                scale_bias: store.vector("extractor.film.scale.bias")?,
                shift: store.matrix("extractor.film.shift.weight")?,
                shift_bias: store.vector("extractor.film.shift.bias")?,
            },
            extraction: layers(extraction_layer, config.n_extract_layers)?,
        })
    }

    /// FiLM maps and extraction stack used for prompt `n`. Every index
    /// receives the same objects.
    pub fn conditioning(&self, _n: usize) -> (&FilmWeights<'a>, &[TransformerLayerWeights<'a>]) {
        (&self.film, &self.extraction)
    }
}

/// Runs the cross-prompt layers over `[prompts | features]` and splits the
/// result into `(X′, P′)`.
pub fn cross_prompt(
    features: &FeatureMap,
    prompts: &PromptSpec,
    bank: &PromptBank,
    weights: &ExtractorWeights<'_>,
) -> Result<(FeatureMap, Matrix)> {
    if prompts.is_empty() {
        return Err(Error::InvalidArgument("at least one prompt is required".into()));
    }
    ensure(features.features() == bank.dim(), || {
        format!(
            "features have {} rows, prompt vectors {}",
            features.features(),
            bank.dim()
        )
    })?;
    let n = prompts.len();
    let vectors: Vec<Vec<f32>> = prompts.types().iter().map(|&p| bank.vector(p)).collect();
    let refs: Vec<&[f32]> = vectors.iter().map(Vec::as_slice).collect();
    let prompt_block = Matrix::from_columns(&refs)?;
    let sequence = Matrix::hcat(&[&prompt_block, features.values()])?;
    let mixed = transformer_stack(&sequence, &weights.cross, true).map_err(|e| restage(e, "cross-prompt"))?;
    let p_prime = mixed.columns(0, n);
    let x_prime = FeatureMap::new(mixed.columns(n, mixed.cols()))?;
    Ok((x_prime, p_prime))
}

/// `X′ + scale(p) ⊙ X′ + shift(p)`, with the prompt terms broadcast over time.
pub fn film(x_prime: &FeatureMap, prompt: &[f32], weights: &FilmWeights<'_>) -> Result<FeatureMap> {
    let f = x_prime.features();
    ensure(prompt.len() == weights.scale.cols() && prompt.len() == weights.shift.cols(), || {
        format!("prompt has {} entries, FiLM expects {}", prompt.len(), weights.scale.cols())
    })?;
    ensure(weights.scale.rows() == f && weights.shift.rows() == f, || {
        format!("FiLM produces {} features, input has {f}", weights.scale.rows())
    })?;
    let scale = weights.scale.apply(prompt, Some(weights.scale_bias))?;
    let shift = weights.shift.apply(prompt, Some(weights.shift_bias))?;
    let mut out = x_prime.values().clone();
    for r in 0..f {
        let (a, b) = (scale[r] as f64, shift[r] as f64);
        for v in out.row_mut(r) {
            let x = *v as f64;
            *v = (x + a * x + b) as f32;
        }
    }
    FeatureMap::new(out)
}

/// Conditions `X′` on one transformed prompt and refines it.
pub fn extract_one(x_prime: &FeatureMap, prompt: &[f32], film_weights: &FilmWeights<'_>, stack: &[TransformerLayerWeights<'_>]) -> Result<FeatureMap> {
    let conditioned = film(x_prime, prompt, film_weights)?;
    let refined = transformer_stack(conditioned.values(), stack, true).map_err(|e| restage(e, "extraction"))?;
    FeatureMap::new(refined)
}

/// One feature map per prompt, in prompt order.
pub fn extract(
    features: &FeatureMap,
    prompts: &PromptSpec,
    bank: &PromptBank,
    weights: &ExtractorWeights<'_>,
) -> Result<Vec<FeatureMap>> {
    let (x_prime, p_prime) = cross_prompt(features, prompts, bank, weights)?;
    (0..prompts.len())
        .map(|n| {
            let (film_weights, stack) = weights.conditioning(n);
            extract_one(&x_prime, &p_prime.column(n), film_weights, stack)
        })
        .collect()
}

fn restage(e: Error, stage: &'static str) -> Error {
    match e {
        Error::NonFinite { layer, .. } => Error::NonFinite { stage, layer },
        other => other,
    }
}

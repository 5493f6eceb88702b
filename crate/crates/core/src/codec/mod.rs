//! Convolutional encoder and decoder (with optional Transformer stacks) of
//! the DAC / DACT / SDCodec / SUNAC family.
//!
//! Encoder: `conv_in` → per stride `s`: residual units, Snake, strided conv
//! (`k = 2s`, channels doubled) → Snake → `conv_out` to the latent width →
//! optional Transformer layers. The decoder mirrors it with transposed
//! convolutions and ends in `tanh`.

mod config;
mod weights;

pub use config::{ArchFamily, ModelConfig};
pub use weights::{
    count_params, cross_prompt_layer, decoder_transformer, encoder_transformer, extraction_layer,
    init_weights, param_specs, quantizer, Init, ParamCount, ParamSpec, Tensor, WeightStore,
    PROMPT_TABLE, WEIGHT_MAGIC, WEIGHT_VERSION,
};

use crate::audio::AudioBuffer;
use crate::error::{ensure, Error, Result};
use crate::numerics::{conv1d, transformer_stack, ConvParams, Matrix};

/// Continuous `F×T` latent representation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    values: Matrix,
}

impl FeatureMap {
    pub fn new(values: Matrix) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::NonFinite {
                stage: "feature map",
                layer: 0,
            });
        }
        Ok(Self { values })
    }

    pub fn zeros(features: usize, frames: usize) -> Self {
        Self {
            values: Matrix::zeros(features, frames),
        }
    }

    pub fn features(&self) -> usize {
        self.values.rows()
    }

    pub fn frames(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_matrix(self) -> Matrix {
        self.values
    }
}

fn snake(x: &mut Matrix, alpha: &[f32]) -> Result<()> {
    ensure(alpha.len() == x.rows(), || "snake: alpha length".to_string())?;
    for (c, &a) in alpha.iter().enumerate() {
        let a = a as f64;
        let inv = 1.0 / (a + 1e-9);
        for v in x.row_mut(c) {
            let s = (a * *v as f64).sin();
            *v = (*v as f64 + inv * s * s) as f32;
        }
    }
    Ok(())
}

fn residual_unit(x: &Matrix, w: &WeightStore, prefix: &str, dilation: usize) -> Result<Matrix> {
    let mut h = x.clone();
    snake(&mut h, w.vector(&format!("{prefix}.act1.alpha"))?)?;
    let mut h = conv1d(&h, &w.conv(&format!("{prefix}.conv1"), false)?, ConvParams::same(7, dilation))?;
    snake(&mut h, w.vector(&format!("{prefix}.act2.alpha"))?)?;
    let mut h = conv1d(&h, &w.conv(&format!("{prefix}.conv2"), false)?, ConvParams::default())?;
    for (o, i) in h.data_mut().iter_mut().zip(x.data()) {
        *o += i;
    }
    Ok(h)
}

fn transformer_layers(
    x: Matrix,
    w: &WeightStore,
    config: &ModelConfig,
    names: impl Iterator<Item = String>,
) -> Result<Matrix> {
    let layers = names
        .map(|n| w.transformer(&n, config.n_heads))
        .collect::<Result<Vec<_>>>()?;
    if layers.is_empty() {
        return Ok(x);
    }
    transformer_stack(&x, &layers, true)
}

/// Waveform → `F × ceil(L / hop)` features. Input is right-padded with zeros
/// to a multiple of the hop size.
pub fn encode(audio: &AudioBuffer, config: &ModelConfig, weights: &WeightStore) -> Result<FeatureMap> {
    if audio.sample_rate() != config.sample_rate {
        return Err(Error::InvalidInput(format!(
            "audio is {} Hz, model expects {} Hz",
            audio.sample_rate(),
            config.sample_rate
        )));
    }
    let hop = config.hop();
    if audio.len() < hop {
        return Err(Error::InvalidInput(format!(
            "audio has {} samples, need at least {hop}",
            audio.len()
        )));
    }
    let padded_len = config.frames_for(audio.len()) * hop;
    let mut samples = audio.samples().to_vec();
    samples.resize(padded_len, 0.0);
    let x = Matrix::from_vec(1, padded_len, samples)?;

    let mut h = conv1d(&x, &weights.conv("encoder.conv_in", false)?, ConvParams::same(7, 1))?;
    for (i, &s) in config.strides.iter().enumerate() {
        for (j, &d) in config.residual_dilations.iter().enumerate() {
            h = residual_unit(&h, weights, &format!("encoder.block{i}.res{j}"), d)?;
        }
        snake(&mut h, weights.vector(&format!("encoder.block{i}.act.alpha"))?)?;
        h = conv1d(
            &h,
            &weights.conv(&format!("encoder.block{i}.down"), false)?,
            ConvParams::strided(s, s.div_ceil(2)),
        )?;
    }
    snake(&mut h, weights.vector("encoder.act_out.alpha")?)?;
    h = conv1d(&h, &weights.conv("encoder.conv_out", false)?, ConvParams::same(3, 1))?;
    h = transformer_layers(h, weights, config, (0..config.n_enc_transformer).map(encoder_transformer))?;
    FeatureMap::new(h)
}

/// `F×T` features → `T · hop` samples.
pub fn decode(features: &FeatureMap, config: &ModelConfig, weights: &WeightStore) -> Result<AudioBuffer> {
    ensure(features.features() == config.latent_dim, || {
        format!(
            "decoder expects {} features, got {}",
            config.latent_dim,
            features.features()
        )
    })?;
    let mut h = transformer_layers(
        features.values().clone(),
        weights,
        config,
        (0..config.n_dec_transformer).map(decoder_transformer),
    )?;
    h = conv1d(&h, &weights.conv("decoder.conv_in", false)?, ConvParams::same(7, 1))?;
    for (i, s) in config.decoder_strides().into_iter().enumerate() {
        snake(&mut h, weights.vector(&format!("decoder.block{i}.act.alpha"))?)?;
        h = conv1d(
            &h,
            &weights.conv(&format!("decoder.block{i}.up"), true)?,
            ConvParams::transposed(s, s.div_ceil(2), s % 2),
        )?;
        for (j, &d) in config.residual_dilations.iter().enumerate() {
            h = residual_unit(&h, weights, &format!("decoder.block{i}.res{j}"), d)?;
        }
    }
    snake(&mut h, weights.vector("decoder.act_out.alpha")?)?;
    h = conv1d(&h, &weights.conv("decoder.conv_out", false)?, ConvParams::same(7, 1))?;
    let samples: Vec<f32> = h.row(0).iter().map(|v| v.tanh()).collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            stage: "decoder",
            layer: 0,
        });
    }
    AudioBuffer::new(samples, config.sample_rate)
}

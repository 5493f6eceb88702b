use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchFamily {
    #[serde(rename = "DAC", alias = "dac")]
    Dac,
    #[serde(rename = "DACT", alias = "dact")]
    DacT,
    #[serde(rename = "SDCodec", alias = "sdcodec")]
    SdCodec,
    #[serde(rename = "SDCodecT", alias = "sdcodect")]
    SdCodecT,
    #[serde(rename = "SUNAC", alias = "sunac")]
    Sunac,
}

impl ArchFamily {
    pub const ALL: [ArchFamily; 5] = [
        ArchFamily::Dac,
        ArchFamily::DacT,
        ArchFamily::SdCodec,
        ArchFamily::SdCodecT,
        ArchFamily::Sunac,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ArchFamily::Dac => "DAC",
            ArchFamily::DacT => "DACT",
            ArchFamily::SdCodec => "SDCodec",
            ArchFamily::SdCodecT => "SDCodecT",
            ArchFamily::Sunac => "SUNAC",
        }
    }

    /// Number of parallel quantizers: one per domain for the SDCodec family.
    pub fn n_quantizers(&self) -> usize {
        match self {
            ArchFamily::SdCodec | ArchFamily::SdCodecT => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for ArchFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchFamily::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown architecture {s:?}")))
    }
}

/// Architecture hyperparameters. Serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub sample_rate: u32,
    pub strides: Vec<usize>,
    pub enc_base_dim: usize,
    pub dec_base_dim: usize,
    pub latent_dim: usize,
    pub n_enc_transformer: usize,
    pub n_dec_transformer: usize,
    pub transformer_hidden: usize,
    pub n_heads: usize,
    #[serde(default = "default_ffn_dim")]
    pub ffn_dim: usize,
    pub n_codebooks: usize,
    pub codebook_size: usize,
    pub code_dim: usize,
    pub arch_family: ArchFamily,
    /// Only used by SUNAC.
    #[serde(default = "default_cross_layers")]
    pub n_cross_prompt_layers: usize,
    /// Only used by SUNAC.
    #[serde(default = "default_extract_layers")]
    pub n_extract_layers: usize,
    #[serde(default = "default_dilations")]
    pub residual_dilations: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_ffn_dim() -> usize {
    1536
}
fn default_cross_layers() -> usize {
    1
}
fn default_extract_layers() -> usize {
    2
}
fn default_dilations() -> Vec<usize> {
    vec![1, 3, 9]
}

impl ModelConfig {
    pub fn dac() -> Self {
        Self {
            sample_rate: 16_000,
            strides: vec![2, 4, 5, 8],
            enc_base_dim: 64,
            dec_base_dim: 1536,
            latent_dim: 1024,
            n_enc_transformer: 0,
            n_dec_transformer: 0,
            transformer_hidden: 1024,
            n_heads: 8,
            ffn_dim: default_ffn_dim(),
            n_codebooks: 12,
            codebook_size: 1024,
            code_dim: 8,
            arch_family: ArchFamily::Dac,
            n_cross_prompt_layers: 0,
            n_extract_layers: 0,
            residual_dilations: default_dilations(),
            seed: 0,
        }
    }

    pub fn dact() -> Self {
        Self {
            enc_base_dim: 32,
            dec_base_dim: 768,
            n_enc_transformer: 3,
            n_dec_transformer: 3,
            arch_family: ArchFamily::DacT,
            ..Self::dac()
        }
    }

    pub fn sdcodec() -> Self {
        Self {
            arch_family: ArchFamily::SdCodec,
            ..Self::dac()
        }
    }

    pub fn sdcodec_t() -> Self {
        Self {
            arch_family: ArchFamily::SdCodecT,
            ..Self::dact()
        }
    }

    /// Convolutional DACT encoder, cross-prompt + FiLM + extraction stack,
    /// one shared quantizer, DACT decoder.
    pub fn sunac() -> Self {
        Self {
            n_enc_transformer: 0,
            n_cross_prompt_layers: default_cross_layers(),
            n_extract_layers: default_extract_layers(),
            arch_family: ArchFamily::Sunac,
            ..Self::dact()
        }
    }

    pub fn preset(family: ArchFamily) -> Self {
        match family {
            ArchFamily::Dac => Self::dac(),
            ArchFamily::DacT => Self::dact(),
            ArchFamily::SdCodec => Self::sdcodec(),
            ArchFamily::SdCodecT => Self::sdcodec_t(),
            ArchFamily::Sunac => Self::sunac(),
        }
    }

    /// Same graph as [`preset`](Self::preset) with narrow convolutions and
    /// Transformers; the quantizer keeps its full size (12 × 1024 × 8).
    pub fn tiny(family: ArchFamily) -> Self {
        Self {
            enc_base_dim: 2,
            dec_base_dim: 32,
            latent_dim: 16,
            transformer_hidden: 16,
            n_heads: 2,
            ffn_dim: 24,
            ..Self::preset(family)
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Samples per latent frame.
    pub fn hop(&self) -> usize {
        self.strides.iter().product()
    }

    /// Latent frames per second.
    pub fn token_rate(&self) -> u32 {
        self.sample_rate / self.hop() as u32
    }

    pub fn bits_per_code(&self) -> u32 {
        usize::BITS - (self.codebook_size - 1).leading_zeros()
    }

    pub fn bitrate_bps(&self) -> u64 {
        self.n_codebooks as u64 * self.bits_per_code() as u64 * self.token_rate() as u64
    }

    /// Frames produced for `len` input samples under right zero-padding.
    pub fn frames_for(&self, len: usize) -> usize {
        len.div_ceil(self.hop())
    }

    /// Channel count entering each encoder block.
    pub fn encoder_channels(&self) -> Vec<usize> {
        (0..self.strides.len())
            .map(|i| self.enc_base_dim << i)
            .collect()
    }

    /// `(in, out)` channels of each decoder block.
    pub fn decoder_channels(&self) -> Vec<(usize, usize)> {
        (0..self.strides.len())
            .map(|i| (self.dec_base_dim >> i, self.dec_base_dim >> (i + 1)))
            .collect()
    }

    pub fn decoder_strides(&self) -> Vec<usize> {
        self.strides.iter().rev().copied().collect()
    }

    pub fn uses_extractor(&self) -> bool {
        self.arch_family == ArchFamily::Sunac
    }

    pub fn n_quantizers(&self) -> usize {
        self.arch_family.n_quantizers()
    }

    fn uses_transformers(&self) -> bool {
        self.n_enc_transformer + self.n_dec_transformer > 0
            || (self.uses_extractor() && self.n_cross_prompt_layers + self.n_extract_layers > 0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.strides.is_empty() || self.strides.contains(&0) {
            return bad("strides must be a non-empty list of positive factors".into());
        }
        if !(self.sample_rate as usize).is_multiple_of(self.hop()) {
            return bad(format!(
                "product of strides {} does not divide sample rate {}",
                self.hop(),
                self.sample_rate
            ));
        }
        if self.codebook_size < 2 || self.codebook_size > 1 << 16 {
            return bad(format!("codebook_size {} outside 2..=65536", self.codebook_size));
        }
        if self.n_codebooks == 0 || self.n_codebooks > u16::MAX as usize {
            return bad("n_codebooks must be at least 1".into());
        }
        if self.code_dim == 0 || self.latent_dim == 0 || self.enc_base_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        let levels = self.strides.len() as u32;
        if self.dec_base_dim == 0 || !self.dec_base_dim.is_multiple_of(1 << levels) {
            return bad(format!(
                "dec_base_dim {} must be divisible by 2^{levels}",
                self.dec_base_dim
            ));
        }
        if self.residual_dilations.is_empty() || self.residual_dilations.contains(&0) {
            return bad("residual_dilations must be positive".into());
        }
        if self.uses_transformers() {
            if self.transformer_hidden != self.latent_dim {
                return bad(format!(
                    "transformer_hidden {} must equal latent_dim {}",
                    self.transformer_hidden, self.latent_dim
                ));
            }
            if self.n_heads == 0
                || !self.transformer_hidden.is_multiple_of(self.n_heads)
                || !(self.transformer_hidden / self.n_heads).is_multiple_of(2)
            {
                return bad(format!(
                    "{} heads do not split hidden size {} into even head dims",
                    self.n_heads, self.transformer_hidden
                ));
            }
            if self.ffn_dim == 0 {
                return bad("ffn_dim must be positive".into());
            }
        }
        Ok(())
    }
}

//! End-to-end signal path: waveform → per-prompt codes → waveforms.
//!
//! SUNAC encodes once, extracts one latent per prompt and quantizes each with
//! the shared quantizer. SDCodec-family models route each prompt type to its
//! own quantizer; DAC and DACT reconstruct a single signal.

use crate::assignment::SourceEstimate;
use crate::audio::AudioBuffer;
use crate::codec::{decode, encode, init_weights, ArchFamily, FeatureMap, ModelConfig, WeightStore};
use crate::error::{Error, Result};
use crate::extractor::{extract, ExtractorWeights, PromptBank, PromptSpec, PromptType};
use crate::rvq::{codebook_losses, codes_to_features, quantize, RvqWeights};
use crate::stream::CodeStream;

pub struct Pipeline {
    config: ModelConfig,
    weights: WeightStore,
    quantizers: Vec<RvqWeights>,
}

impl Pipeline {
    pub fn new(config: ModelConfig, weights: WeightStore) -> Result<Self> {
        config.validate()?;
        weights.validate_against(&config)?;
        let quantizers = (0..config.n_quantizers())
            .map(|r| RvqWeights::from_store(&weights, &config, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            weights,
            quantizers,
        })
    }

    /// Seeded random weights for `config`.
    pub fn from_seed(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let weights = init_weights(&config, seed);
        Self::new(config, weights)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &WeightStore {
        &self.weights
    }

    fn quantizer_for(&self, prompt: PromptType) -> Result<&RvqWeights> {
        let index = match self.config.arch_family {
            ArchFamily::SdCodec | ArchFamily::SdCodecT => match prompt {
                PromptType::Speech => 0,
                PromptType::Music => 1,
                PromptType::Sfx => 2,
                PromptType::Mix => {
                    return Err(Error::InvalidInput(format!(
                        "{} has no <mix> quantizer",
                        self.config.arch_family
                    )))
                }
            },
            _ => 0,
        };
        Ok(&self.quantizers[index])
    }

    /// Continuous per-prompt latents before quantization.
    pub fn source_features(&self, audio: &AudioBuffer, prompts: &PromptSpec) -> Result<Vec<FeatureMap>> {
        let features = encode(audio, &self.config, &self.weights)?;
        match self.config.arch_family {
            ArchFamily::Sunac => {
                let bank = PromptBank::from_store(&self.weights)?;
                let ew = ExtractorWeights::from_store(&self.weights, &self.config)?;
                extract(&features, prompts, &bank, &ew)
            }
            ArchFamily::SdCodec | ArchFamily::SdCodecT => {
                for &p in prompts.types() {
                    self.quantizer_for(p)?;
                }
                Ok(vec![features; prompts.len()])
            }
            ArchFamily::Dac | ArchFamily::DacT => {
                if prompts.len() != 1 {
                    return Err(Error::InvalidInput(format!(
                        "{} reconstructs a single signal, got {} prompts",
                        self.config.arch_family,
                        prompts.len()
                    )));
                }
                Ok(vec![features])
            }
        }
    }

    pub fn encode(&self, audio: &AudioBuffer, prompts: &PromptSpec) -> Result<CodeStream> {
        let latents = self.source_features(audio, prompts)?;
        let codes = latents
            .iter()
            .zip(prompts.types())
            .map(|(f, &p)| Ok(quantize(f, self.quantizer_for(p)?, self.config.n_codebooks)?.codes))
            .collect::<Result<Vec<_>>>()?;
        CodeStream::new(
            self.config.sample_rate,
            self.config.bits_per_code() as u16,
            audio.len() as u64,
            prompts.types().to_vec(),
            codes,
        )
    }

    /// Checks that a stream was produced under this configuration.
    pub fn check_stream(&self, stream: &CodeStream) -> Result<()> {
        let c = &self.config;
        if stream.sample_rate != c.sample_rate
            || stream.n_codebooks() > c.n_codebooks
            || stream.bits_per_code as u32 != c.bits_per_code()
        {
            return Err(Error::CorruptStream(format!(
                "stream ({} Hz, {} codebooks, {} bits) does not match config ({} Hz, {} codebooks, {} bits)",
                stream.sample_rate,
                stream.n_codebooks(),
                stream.bits_per_code,
                c.sample_rate,
                c.n_codebooks,
                c.bits_per_code()
            )));
        }
        let max_len = stream.n_frames() as u64 * c.hop() as u64;
        if stream.original_len > max_len {
            return Err(Error::CorruptStream(format!(
                "original length {} exceeds {} frames",
                stream.original_len,
                stream.n_frames()
            )));
        }
        Ok(())
    }

    /// One waveform per stream source, trimmed to the recorded length.
    pub fn decode(&self, stream: &CodeStream) -> Result<Vec<AudioBuffer>> {
        self.check_stream(stream)?;
        stream
            .codes
            .iter()
            .zip(&stream.prompts)
            .map(|(grid, &p)| {
                let rvq = self.quantizer_for(p).map_err(|e| Error::CorruptStream(e.to_string()))?;
                let features = codes_to_features(grid, rvq)?;
                Ok(decode(&features, &self.config, &self.weights)?.resized(stream.original_len as usize))
            })
            .collect()
    }

    /// Decoded sources together with the quantizer losses of their latents.
    pub fn reconstruct(&self, audio: &AudioBuffer, prompts: &PromptSpec) -> Result<Vec<SourceEstimate>> {
        let latents = self.source_features(audio, prompts)?;
        latents
            .iter()
            .zip(prompts.types())
            .map(|(f, &p)| {
                let rvq = self.quantizer_for(p)?;
                let q = quantize(f, rvq, self.config.n_codebooks)?;
                let quantizer = codebook_losses(f, rvq, self.config.n_codebooks)?;
                let audio_out = decode(&q.quantized, &self.config, &self.weights)?.resized(audio.len());
                Ok(SourceEstimate {
                    audio: audio_out,
                    quantizer,
                })
            })
            .collect()
    }
}

//! Deterministic synthetic sources and mixtures.
//!
//! Every generator output is brick-wall band-limited in the FFT domain and
//! normalized to an RMS of 0.1. Default bands per prompt type do not overlap,
//! and two speech sources in one mixture are split into disjoint halves of
//! the speech band.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::assignment::SourceSet;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::extractor::PromptType;

pub const TARGET_RMS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    BandLimitedNoise,
    HarmonicTone,
    ChirpBurst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub prompt: PromptType,
    pub generator: Generator,
    pub seed: u64,
    pub duration_s: f64,
    /// `[low, high]` in Hz; defaults to the prompt type's band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<[f64; 2]>,
}

impl FixtureSpec {
    pub fn new(prompt: PromptType, generator: Generator, seed: u64, duration_s: f64) -> Self {
        Self {
            prompt,
            generator,
            seed,
            duration_s,
            band: None,
        }
    }

    pub fn with_band(mut self, low: f64, high: f64) -> Self {
        self.band = Some([low, high]);
        self
    }

    pub fn resolved_band(&self) -> [f64; 2] {
        self.band.unwrap_or_else(|| default_band(self.prompt))
    }
}

pub fn default_band(prompt: PromptType) -> [f64; 2] {
    match prompt {
        PromptType::Speech => [100.0, 2000.0],
        PromptType::Music => [2400.0, 4600.0],
        PromptType::Sfx => [5000.0, 7600.0],
        PromptType::Mix => [100.0, 7600.0],
    }
}

/// Sub-bands used when a mixture holds two speech sources without explicit
/// bands.
pub const SPEECH_SUB_BANDS: [[f64; 2]; 2] = [[100.0, 900.0], [1100.0, 2000.0]];

pub fn generate(spec: &FixtureSpec, sample_rate: u32) -> Result<AudioBuffer> {
    let [low, high] = spec.resolved_band();
    let nyquist = sample_rate as f64 / 2.0;
    if !(low > 0.0 && low < high && high < nyquist) {
        return Err(Error::Config(format!(
            "band [{low}, {high}] Hz must satisfy 0 < low < high < {nyquist}"
        )));
    }
    if !(spec.duration_s > 0.0 && spec.duration_s.is_finite()) {
        return Err(Error::Config(format!("duration {} s must be positive", spec.duration_s)));
    }
    let len = (spec.duration_s * sample_rate as f64).round() as usize;
    if len == 0 {
        return Err(Error::Config("fixture is shorter than one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sr = sample_rate as f64;
    let raw = match spec.generator {
        Generator::BandLimitedNoise => (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        Generator::HarmonicTone => harmonic_tone(len, sr, low, high, &mut rng),
        Generator::ChirpBurst => chirp_burst(len, sr, low, high, &mut rng),
    };
    let mut x = band_limit(raw, sr, low, high);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v *= TARGET_RMS / rms);
    }
    AudioBuffer::new(x.into_iter().map(|v| v as f32).collect(), sample_rate)
}

fn harmonic_tone(len: usize, sr: f64, low: f64, high: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let top = (2.0 * low).min(high);
    let f0 = low + rng.random::<f64>() * (top - low) * 0.9;
    let harmonics: Vec<(f64, f64, f64)> = (1..)
        .map(|k| (k as f64 * f0, 1.0 / k as f64))
        .take_while(|&(f, _)| f < high)
        .map(|(f, a)| (f, a, rng.random::<f64>() * std::f64::consts::TAU))
        .collect();
    (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            harmonics
                .iter()
                .map(|&(f, a, phase)| a * (std::f64::consts::TAU * f * t + phase).sin())
                .sum()
        })
        .collect()
}

/// Hann-windowed linear sweeps of random length and direction.
fn chirp_burst(len: usize, sr: f64, low: f64, high: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let mut start = 0usize;
    while start < len {
        let burst = ((0.05 + 0.15 * rng.random::<f64>()) * sr) as usize;
        let gap = ((0.01 + 0.05 * rng.random::<f64>()) * sr) as usize;
        let (f_a, f_b) = if rng.random::<bool>() { (low, high) } else { (high, low) };
        let n = burst.min(len - start).max(1);
        let dur = n as f64 / sr;
        let rate = (f_b - f_a) / dur;
        for i in 0..n {
            let t = i as f64 / sr;
            let window = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos();
            let phase = std::f64::consts::TAU * (f_a * t + 0.5 * rate * t * t);
            out[start + i] = window * phase.sin();
        }
        start += n + gap;
    }
    out
}

/// Zeroes every DFT bin outside `[low, high]`.
fn band_limit(x: Vec<f64>, sr: f64, low: f64, high: f64) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.into_iter().map(|v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * sr / n as f64;
        if f < low || f > high {
            *b = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.into_iter().map(|c| c.re / n as f64).collect()
}

/// Checks the source-count limits of a mixture.
pub fn check_prompt_counts(prompts: &[PromptType], allow_four: bool) -> Result<()> {
    let count = |p: PromptType| prompts.iter().filter(|&&q| q == p).count();
    let max_n = if allow_four { 4 } else { 3 };
    let problem = if prompts.is_empty() || prompts.len() > max_n {
        Some(format!("{} sources, allowed 1..={max_n}", prompts.len()))
    } else if count(PromptType::Mix) > 0 {
        Some("a mixture cannot contain a <mix> source".into())
    } else if count(PromptType::Speech) > 2 {
        Some("at most two speech sources".into())
    } else if count(PromptType::Music) > 1 || count(PromptType::Sfx) > 1 {
        Some("music and sfx cannot be repeated".into())
    } else {
        None
    };
    match problem {
        Some(msg) => Err(Error::InvalidArgument(msg)),
        None => Ok(()),
    }
}

/// Generates every source and attaches their sum as the mixture.
pub fn make_mixture(specs: &[FixtureSpec], sample_rate: u32, allow_four: bool) -> Result<SourceSet> {
    let prompts: Vec<PromptType> = specs.iter().map(|s| s.prompt).collect();
    check_prompt_counts(&prompts, allow_four)?;
    let two_speakers = prompts.iter().filter(|&&p| p == PromptType::Speech).count() == 2;
    let mut speaker = 0;
    let mut sources = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut spec = spec.clone();
        if spec.prompt == PromptType::Speech && two_speakers {
            if spec.band.is_none() {
                spec.band = Some(SPEECH_SUB_BANDS[speaker]);
            }
            speaker += 1;
        }
        sources.push((generate(&spec, sample_rate)?, spec.prompt));
    }
    let len = sources[0].0.len();
    if sources.iter().any(|(a, _)| a.len() != len) {
        return Err(Error::InvalidArgument("fixture durations differ".into()));
    }
    let mix = AudioBuffer::sum(sources.iter().map(|(a, _)| a))?;
    SourceSet::new(sources)?.with_mixture(mix)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    #[serde(default)]
    pub allow_four_sources: bool,
    pub sources: Vec<FixtureSpec>,
}

fn default_rate() -> u32 {
    16_000
}

impl FixtureManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn build(&self) -> Result<SourceSet> {
        make_mixture(&self.sources, self.sample_rate, self.allow_four_sources)
    }
}

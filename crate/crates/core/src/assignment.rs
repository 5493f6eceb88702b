//! Scale-invariant SDR, permutation-invariant assignment restricted to
//! same-type prompts, the forward training objective, and mask-based
//! evaluation.

use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{ensure, Error, Result};
use crate::extractor::PromptType;
use crate::numerics::{istft, log_mel_spectrogram, stft, StftConfig};
use crate::rvq::QuantizerLosses;

/// SI-SDR values are clamped to `[-SI_SDR_LIMIT_DB, SI_SDR_LIMIT_DB]`.
pub const SI_SDR_LIMIT_DB: f64 = 100.0;

/// Denominator guard for magnitude masks.
pub const MASK_EPS: f64 = 1e-8;

/// Unclamped SI-SDR in dB. A perfect (rescaled) estimate gives `+inf`, an
/// estimate orthogonal to the reference gives `-inf`.
pub fn si_sdr_unclamped(reference: &[f32], estimate: &[f32]) -> Result<f64> {
    ensure(reference.len() == estimate.len(), || {
        format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )
    })?;
    let mut ref_energy = 0.0f64;
    let mut cross = 0.0f64;
    for (&s, &e) in reference.iter().zip(estimate) {
        ref_energy += s as f64 * s as f64;
        cross += s as f64 * e as f64;
    }
    if ref_energy == 0.0 {
        return Err(Error::InvalidReference("reference is identically zero".into()));
    }
    let alpha = cross / ref_energy;
    let mut signal = 0.0f64;
    let mut noise = 0.0f64;
    for (&s, &e) in reference.iter().zip(estimate) {
        let target = alpha * s as f64;
        signal += target * target;
        let d = target - e as f64;
        noise += d * d;
    }
    Ok(10.0 * (signal / noise).log10())
}

pub fn si_sdr(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<f64> {
    let raw = si_sdr_unclamped(reference.samples(), estimate.samples())?;
    Ok(if raw.is_nan() {
        -SI_SDR_LIMIT_DB
    } else {
        raw.clamp(-SI_SDR_LIMIT_DB, SI_SDR_LIMIT_DB)
    })
}

/// Reference sources with their prompt types, plus an optional mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    sources: Vec<(AudioBuffer, PromptType)>,
    mixture: Option<AudioBuffer>,
}

impl SourceSet {
    pub fn new(sources: Vec<(AudioBuffer, PromptType)>) -> Result<Self> {
        let Some((first, _)) = sources.first() else {
            return Err(Error::InvalidArgument("source set is empty".into()));
        };
        let (len, rate) = (first.len(), first.sample_rate());
        ensure(
            sources.iter().all(|(a, _)| a.len() == len && a.sample_rate() == rate),
            || "sources differ in length or sample rate".to_string(),
        )?;
        Ok(Self {
            sources,
            mixture: None,
        })
    }

    /// Attaches an explicit mixture of matching length and rate.
    pub fn with_mixture(mut self, mixture: AudioBuffer) -> Result<Self> {
        ensure(
            mixture.len() == self.len_samples() && mixture.sample_rate() == self.sample_rate(),
            || "mixture differs from sources in length or sample rate".to_string(),
        )?;
        self.mixture = Some(mixture);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn len_samples(&self) -> usize {
        self.sources[0].0.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sources[0].0.sample_rate()
    }

    pub fn source(&self, i: usize) -> &AudioBuffer {
        &self.sources[i].0
    }

    pub fn prompt(&self, i: usize) -> PromptType {
        self.sources[i].1
    }

    pub fn types(&self) -> Vec<PromptType> {
        self.sources.iter().map(|(_, p)| *p).collect()
    }

    pub fn sources(&self) -> &[(AudioBuffer, PromptType)] {
        &self.sources
    }

    pub fn mixture(&self) -> Option<&AudioBuffer> {
        self.mixture.as_ref()
    }

    /// The attached mixture, or the sample-wise sum of the sources.
    pub fn mixture_or_sum(&self) -> Result<AudioBuffer> {
        match &self.mixture {
            Some(m) => Ok(m.clone()),
            None => AudioBuffer::sum(self.sources.iter().map(|(a, _)| a)),
        }
    }
}

/// All permutations that only exchange indices of equal type, in
/// lexicographic order. `perm[i]` is the estimate assigned to reference `i`.
pub fn restricted_permutations(types: &[PromptType]) -> Vec<Vec<usize>> {
    fn fill(
        types: &[PromptType],
        i: usize,
        used: &mut [bool],
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if i == types.len() {
            out.push(current.clone());
            return;
        }
        for j in 0..types.len() {
            if !used[j] && types[j] == types[i] {
                used[j] = true;
                current.push(j);
                fill(types, i + 1, used, current, out);
                current.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    fill(types, 0, &mut vec![false; types.len()], &mut Vec::new(), &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `permutation[i]` is the estimate matched to reference `i`.
    pub permutation: Vec<usize>,
    /// Sum of per-pair SI-SDR in dB.
    pub score: f64,
    pub per_source: Vec<f64>,
}

/// Pairwise SI-SDR for every same-type (reference, estimate) pair.
fn pair_scores(references: &SourceSet, estimates: &[AudioBuffer]) -> Result<Vec<Vec<f64>>> {
    let types = references.types();
    let n = types.len();
    let mut scores = vec![vec![f64::NEG_INFINITY; n]; n];
    for i in 0..n {
        for j in 0..n {
            if types[i] == types[j] {
                scores[i][j] = si_sdr(references.source(i), &estimates[j])?;
            }
        }
    }
    Ok(scores)
}

/// Maximizes total SI-SDR over [`restricted_permutations`]; the first
/// permutation in lexicographic order wins ties.
pub fn best_assignment(references: &SourceSet, estimates: &[AudioBuffer]) -> Result<Assignment> {
    ensure(references.len() == estimates.len() && !estimates.is_empty(), || {
        format!(
            "{} references but {} estimates",
            references.len(),
            estimates.len()
        )
    })?;
    let scores = pair_scores(references, estimates)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for perm in restricted_permutations(&references.types()) {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| scores[i][j]).sum();
        if best.as_ref().is_none_or(|(_, b)| total > *b) {
            best = Some((perm, total));
        }
    }
    let (permutation, score) = best.expect("identity is always admissible");
    let per_source = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| scores[i][j])
        .collect();
    Ok(Assignment {
        permutation,
        score,
        per_source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MelScale {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
}

pub fn default_mel_scales() -> Vec<MelScale> {
    [(512, 40), (1024, 80), (2048, 160)]
        .into_iter()
        .map(|(n_fft, n_mels)| MelScale {
            n_fft,
            hop: n_fft / 4,
            n_mels,
        })
        .collect()
}

/// Sum over scales of the mean absolute log-mel difference.
pub fn mel_loss(x: &AudioBuffer, y: &AudioBuffer, scales: &[MelScale]) -> Result<f64> {
    ensure(x.len() == y.len() && x.sample_rate() == y.sample_rate(), || {
        "mel loss inputs differ in length or sample rate".to_string()
    })?;
    let mut total = 0.0;
    for s in scales {
        let a = log_mel_spectrogram(x, s.n_fft, s.hop, s.n_mels)?;
        let b = log_mel_spectrogram(y, s.n_fft, s.hop, s.n_mels)?;
        let sum: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (*p as f64 - *q as f64).abs())
            .sum();
        total += sum / a.data().len() as f64;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    #[serde(default = "default_mel_weight")]
    pub mel: f64,
    #[serde(default = "default_codebook_weight")]
    pub codebook: f64,
    #[serde(default = "default_commitment_weight")]
    pub commitment: f64,
    #[serde(default = "default_mel_scales")]
    pub mel_scales: Vec<MelScale>,
}

fn default_mel_weight() -> f64 {
    15.0
}
fn default_codebook_weight() -> f64 {
    1.0
}
fn default_commitment_weight() -> f64 {
    0.25
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mel: default_mel_weight(),
            codebook: default_codebook_weight(),
            commitment: default_commitment_weight(),
            mel_scales: default_mel_scales(),
        }
    }
}

/// A decoded signal together with the quantizer losses of its codes.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceEstimate {
    pub audio: AudioBuffer,
    pub quantizer: QuantizerLosses,
}

/// Weighted terms of one reconstruction loss. Adversarial and
/// feature-matching terms are never computed and are reported as `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermBreakdown {
    pub mel: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub adversarial: Option<f64>,
    pub feature_matching: Option<f64>,
}

impl TermBreakdown {
    pub fn total(&self) -> f64 {
        self.mel + self.codebook + self.commitment
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub assignment: Assignment,
    /// In reference order.
    pub sources: Vec<TermBreakdown>,
    pub mixture: TermBreakdown,
    pub total: f64,
}

fn reconstruction_terms(
    reference: &AudioBuffer,
    estimate: &SourceEstimate,
    weights: &LossWeights,
) -> Result<TermBreakdown> {
    Ok(TermBreakdown {
        mel: weights.mel * mel_loss(reference, &estimate.audio, &weights.mel_scales)?,
        codebook: weights.codebook * estimate.quantizer.codebook,
        commitment: weights.commitment * estimate.quantizer.commitment,
        adversarial: None,
        feature_matching: None,
    })
}

/// Assigns estimates by SI-SDR, then sums the reconstruction terms of every
/// matched pair and of the mixture.
pub fn sunac_loss(
    references: &SourceSet,
    estimates: &[SourceEstimate],
    mix_ref: &AudioBuffer,
    mix_est: &SourceEstimate,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    ensure(mix_ref.len() == mix_est.audio.len(), || {
        "mixture reference and estimate differ in length".to_string()
    })?;
    let audio: Vec<AudioBuffer> = estimates.iter().map(|e| e.audio.clone()).collect();
    let assignment = best_assignment(references, &audio)?;
    let sources = assignment
        .permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| reconstruction_terms(references.source(i), &estimates[j], weights))
        .collect::<Result<Vec<_>>>()?;
    let mixture = reconstruction_terms(mix_ref, mix_est, weights)?;
    let total = sources.iter().map(TermBreakdown::total).sum::<f64>() + mixture.total();
    Ok(LossBreakdown {
        assignment,
        sources,
        mixture,
        total,
    })
}

/// Applies the clamped ratio `|E| / (|M| + eps)` of an estimate to the
/// mixture spectrogram and resynthesizes.
pub fn magnitude_mask_reconstruct(
    mixture: &AudioBuffer,
    estimate: &AudioBuffer,
    cfg: &StftConfig,
) -> Result<AudioBuffer> {
    ensure(
        mixture.len() == estimate.len() && mixture.sample_rate() == estimate.sample_rate(),
        || "mixture and estimate differ in length or sample rate".to_string(),
    )?;
    let mut mix = stft(mixture, cfg)?;
    let est = stft(estimate, cfg)?;
    let mix_mag = mix.magnitude();
    let est_mag = est.magnitude();
    for (i, (m, e)) in mix_mag.data().iter().zip(est_mag.data()).enumerate() {
        let mask = (*e as f64 / (*m as f64 + MASK_EPS)).clamp(0.0, 1.0);
        let re = &mut mix.real.data_mut()[i];
        *re = (*re as f64 * mask) as f32;
        let im = &mut mix.imag.data_mut()[i];
        *im = (*im as f64 * mask) as f32;
    }
    AudioBuffer::new(istft(&mix, cfg, mixture.len())?, mixture.sample_rate())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    #[default]
    Direct,
    Masked,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(EvalMode::Direct),
            "masked" => Ok(EvalMode::Masked),
            _ => Err(Error::InvalidArgument(format!("unknown eval mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub reference: usize,
    pub prompt: PromptType,
    pub estimate: usize,
    pub si_sdr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub permutation: Vec<usize>,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    /// One line per source: `index prompt estimate si_sdr_db`.
    pub fn to_lines(&self) -> String {
        self.records
            .iter()
            .map(|r| {
                format!(
                    "source={} prompt={} estimate={} si_sdr_db={:.4}\n",
                    r.reference, r.prompt, r.estimate, r.si_sdr_db
                )
            })
            .collect()
    }
}

/// Per-source SI-SDR after restricted assignment. In masked mode each
/// estimate is first turned into a mask on the mixture.
pub fn evaluate(
    references: &SourceSet,
    estimates: &[AudioBuffer],
    mode: EvalMode,
    cfg: &StftConfig,
) -> Result<EvalReport> {
    if references.len() != estimates.len() {
        return Err(Error::InvalidInput(format!(
            "{} references but {} estimates",
            references.len(),
            estimates.len()
        )));
    }
    let scored = match mode {
        EvalMode::Direct => estimates.to_vec(),
        EvalMode::Masked => {
            let mix = references.mixture_or_sum()?;
            estimates
                .iter()
                .map(|e| magnitude_mask_reconstruct(&mix, e, cfg))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let a = best_assignment(references, &scored)?;
    let records = a
        .permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| EvalRecord {
            reference: i,
            prompt: references.prompt(i),
            estimate: j,
            si_sdr_db: a.per_source[i],
        })
        .collect();
    Ok(EvalReport {
        mode,
        permutation: a.permutation,
        records,
    })
}

//! HTK-scale triangular mel filterbanks and (log-)mel spectrograms.

use super::stft::{stft, StftConfig};
use super::Matrix;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Floor applied before taking `log10` of mel energies.
pub const LOG_FLOOR: f32 = 1e-5;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over `[0, sample_rate / 2]`, shape `n_mels × (n_fft/2 + 1)`.
/// Each triangle peaks at 1.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize) -> Result<Matrix> {
    let n_bins = n_fft / 2 + 1;
    if n_mels == 0 || n_mels >= n_bins {
        return Err(Error::InvalidArgument(format!(
            "n_mels {n_mels} must be in 1..{n_bins}"
        )));
    }
    let max_mel = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(max_mel * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    Ok(Matrix::from_fn(n_mels, n_bins, |m, b| {
        let f = b as f64 * bin_hz;
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let rise = (f - lo) / (center - lo);
        let fall = (hi - f) / (hi - center);
        rise.min(fall).max(0.0) as f32
    }))
}

/// Mel-filtered power spectrogram, `n_mels × n_frames`, non-negative.
pub fn mel_spectrogram(audio: &AudioBuffer, n_fft: usize, hop: usize, n_mels: usize) -> Result<Matrix> {
    let bank = mel_filterbank(audio.sample_rate(), n_fft, n_mels)?;
    let power = stft(audio, &StftConfig::new(n_fft, hop))?.power();
    Ok(apply_filterbank(&bank, &power))
}

/// `log10(max(mel, LOG_FLOOR))` of [`mel_spectrogram`].
pub fn log_mel_spectrogram(
    audio: &AudioBuffer,
    n_fft: usize,
    hop: usize,
    n_mels: usize,
) -> Result<Matrix> {
    let mut mel = mel_spectrogram(audio, n_fft, hop, n_mels)?;
    mel.data_mut()
        .iter_mut()
        .for_each(|v| *v = v.max(LOG_FLOOR).log10());
    Ok(mel)
}

/// Filterbank product that only visits each filter's non-zero support.
fn apply_filterbank(bank: &Matrix, power: &Matrix) -> Matrix {
    let n_frames = power.cols();
    let mut out = Matrix::zeros(bank.rows(), n_frames);
    for m in 0..bank.rows() {
        let weights = bank.row(m);
        let support: Vec<(usize, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(b, &w)| (b, w as f64))
            .collect();
        for t in 0..n_frames {
            let e: f64 = support.iter().map(|&(b, w)| w * power.get(b, t) as f64).sum();
            out.set(m, t, e as f32);
        }
    }
    out
}

//! Centered short-time Fourier transform and its overlap-add inverse.
//!
//! Frames are centered on `t · hop` after zero-padding `n_fft / 2` samples on
//! both sides, so a signal of length `L` yields `1 + L / hop` frames.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Periodic Hann window.
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: Window,
}

impl Default for StftConfig {
    /// Hann window with 75% overlap.
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop: 256,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        Self {
            n_fft,
            hop,
            window: Window::Hann,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_fft {} is not a power of two",
                self.n_fft
            )));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::InvalidArgument(format!(
                "hop {} must be in 1..={}",
                self.hop, self.n_fft
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }
}

/// One-sided spectrum, `n_bins × n_frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub n_bins: usize,
    pub n_frames: usize,
    pub real: Matrix,
    pub imag: Matrix,
}

impl ComplexSpectrogram {
    pub fn zeros(n_bins: usize, n_frames: usize) -> Self {
        Self {
            n_bins,
            n_frames,
            real: Matrix::zeros(n_bins, n_frames),
            imag: Matrix::zeros(n_bins, n_frames),
        }
    }

    pub fn magnitude(&self) -> Matrix {
        Matrix::from_fn(self.n_bins, self.n_frames, |b, t| {
            (self.real.get(b, t) as f64).hypot(self.imag.get(b, t) as f64) as f32
        })
    }

    pub fn power(&self) -> Matrix {
        Matrix::from_fn(self.n_bins, self.n_frames, |b, t| {
            let (re, im) = (self.real.get(b, t) as f64, self.imag.get(b, t) as f64);
            (re * re + im * im) as f32
        })
    }
}

pub fn stft(audio: &AudioBuffer, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    stft_samples(audio.samples(), cfg)
}

pub fn stft_samples(samples: &[f32], cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("stft of empty audio".into()));
    }
    let n = cfg.n_fft;
    let half = n / 2;
    let window = cfg.window.coefficients(n);
    let n_frames = cfg.n_frames(samples.len());
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut spec = ComplexSpectrogram::zeros(cfg.n_bins(), n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for t in 0..n_frames {
        let start = (t * cfg.hop) as isize - half as isize;
        for (i, slot) in buf.iter_mut().enumerate() {
            let idx = start + i as isize;
            let v = if idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize] as f64
            } else {
                0.0
            };
            *slot = Complex::new(v * window[i], 0.0);
        }
        fft.process(&mut buf);
        for b in 0..spec.n_bins {
            spec.real.set(b, t, buf[b].re as f32);
            spec.imag.set(b, t, buf[b].im as f32);
        }
    }
    Ok(spec)
}

/// Weighted overlap-add inverse; returns exactly `length` samples.
pub fn istft(spec: &ComplexSpectrogram, cfg: &StftConfig, length: usize) -> Result<Vec<f32>> {
    cfg.validate()?;
    if spec.n_bins != cfg.n_bins() {
        return Err(Error::ContractViolation(format!(
            "spectrogram has {} bins, config implies {}",
            spec.n_bins,
            cfg.n_bins()
        )));
    }
    let n = cfg.n_fft;
    let half = n / 2;
    let window = cfg.window.coefficients(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let padded_len = (spec.n_frames - 1) * cfg.hop + n;
    let mut acc = vec![0.0f64; padded_len];
    let mut norm = vec![0.0f64; padded_len];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for t in 0..spec.n_frames {
        for b in 0..spec.n_bins {
            buf[b] = Complex::new(spec.real.get(b, t) as f64, spec.imag.get(b, t) as f64);
        }
        // Hermitian mirror; DC and Nyquist imaginary parts are dropped.
        buf[0].im = 0.0;
        buf[half].im = 0.0;
        for b in 1..half {
            buf[n - b] = buf[b].conj();
        }
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..n {
            acc[start + i] += buf[i].re / n as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    Ok((0..length)
        .map(|i| {
            let j = i + half;
            if j < padded_len && norm[j] > 1e-10 {
                (acc[j] / norm[j]) as f32
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn bin_centered_sine_has_single_dominant_bin() {
        let cfg = StftConfig {
            n_fft: 512,
            hop: 128,
            window: Window::Rectangular,
        };
        let sr = 16000.0;
        let bin = 40;
        let freq = bin as f64 * sr / 512.0;
        let x: Vec<f32> = (0..8000)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr).sin() as f32)
            .collect();
        let mag = stft_samples(&x, &cfg).unwrap().magnitude();
        let t = mag.cols() / 2;
        let peak = mag.get(bin, t);
        for b in 0..mag.rows() {
            if b != bin {
                assert!(peak > 10.0 * mag.get(b, t), "bin {b}");
            }
        }
    }

    #[test]
    fn hann_main_lobe_is_three_bins() {
        let cfg = StftConfig::new(512, 128);
        let bin = 40;
        let x: Vec<f32> = (0..8000)
            .map(|i| (2.0 * std::f64::consts::PI * bin as f64 * i as f64 / 512.0).sin() as f32)
            .collect();
        let mag = stft_samples(&x, &cfg).unwrap().magnitude();
        let t = mag.cols() / 2;
        let peak = mag.get(bin, t);
        assert!((mag.get(bin - 1, t) / peak - 0.5).abs() < 1e-3);
        for b in (0..mag.rows()).filter(|b| b.abs_diff(bin) > 1) {
            assert!(peak > 1e3 * mag.get(b, t), "bin {b}");
        }
    }

    #[test]
    fn zero_audio_gives_zero_spectrum() {
        let spec = stft_samples(&[0.0; 1000], &StftConfig::new(256, 64)).unwrap();
        assert!(spec.real.data().iter().all(|&v| v == 0.0));
        assert!(spec.imag.data().iter().all(|&v| v == 0.0));
        assert_eq!(spec.n_frames, 1 + 1000 / 64);
    }

    #[test]
    fn overlap_add_round_trip() {
        let x = noise(16000, 1);
        for cfg in [StftConfig::new(1024, 256), StftConfig::new(512, 128), StftConfig { n_fft: 256, hop: 256, window: Window::Rectangular }] {
            let spec = stft_samples(&x, &cfg).unwrap();
            let y = istft(&spec, &cfg, x.len()).unwrap();
            let mse: f64 = x
                .iter()
                .zip(&y)
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                / x.len() as f64;
            assert!(mse.sqrt() < 1e-4, "{cfg:?} rms error {}", mse.sqrt());
        }
    }

    #[test]
    fn linearity() {
        let x = noise(4000, 2);
        let y = noise(4000, 3);
        let (a, b) = (0.7f32, -1.3f32);
        let z: Vec<f32> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let cfg = StftConfig::default();
        let (sx, sy, sz) = (
            stft_samples(&x, &cfg).unwrap(),
            stft_samples(&y, &cfg).unwrap(),
            stft_samples(&z, &cfg).unwrap(),
        );
        let scale = sz.magnitude().data().iter().copied().fold(0.0, f32::max) as f64;
        for (m, (mx, my)) in [(&sz.real, (&sx.real, &sy.real)), (&sz.imag, (&sx.imag, &sy.imag))] {
            for i in 0..m.data().len() {
                let lin = a as f64 * mx.data()[i] as f64 + b as f64 * my.data()[i] as f64;
                assert!((m.data()[i] as f64 - lin).abs() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn parseval_single_frame() {
        // One rectangular frame covering the whole signal: Σ|X|² = N Σ|x|².
        let n = 256;
        let x = noise(n / 2, 4);
        let cfg = StftConfig {
            n_fft: n,
            hop: n,
            window: Window::Rectangular,
        };
        let spec = stft_samples(&x, &cfg).unwrap();
        // frame 0 spans samples -128..128, i.e. all of x.
        let p = spec.power();
        let mut total = p.get(0, 0) as f64 + p.get(n / 2, 0) as f64;
        for b in 1..n / 2 {
            total += 2.0 * p.get(b, 0) as f64;
        }
        let energy: f64 = x.iter().map(|&v| (v as f64).powi(2)).sum();
        assert!((total - n as f64 * energy).abs() < 1e-4 * n as f64 * energy);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(stft_samples(&[1.0; 10], &StftConfig::new(100, 10)).is_err());
        assert!(stft_samples(&[1.0; 10], &StftConfig::new(64, 0)).is_err());
        assert!(stft_samples(&[1.0; 10], &StftConfig::new(64, 65)).is_err());
        assert!(stft_samples(&[], &StftConfig::new(64, 16)).is_err());
    }
}

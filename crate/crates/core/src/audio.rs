//! Mono waveform buffers and 16-bit PCM WAV I/O.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let energy: f64 = self.samples.iter().map(|&v| (v as f64).powi(2)).sum();
        (energy / self.samples.len() as f64).sqrt()
    }

    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Right-pads with zeros (or truncates) to exactly `len` samples.
    pub fn resized(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Sample-wise sum of equally long buffers.
    pub fn sum<'a>(buffers: impl IntoIterator<Item = &'a AudioBuffer>) -> Result<Self> {
        let mut iter = buffers.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InvalidArgument("cannot sum zero buffers".into()))?;
        let mut acc: Vec<f64> = first.samples.iter().map(|&v| v as f64).collect();
        for b in iter {
            if b.len() != first.len() || b.sample_rate != first.sample_rate {
                return Err(Error::ContractViolation(
                    "summed buffers differ in length or sample rate".into(),
                ));
            }
            for (a, &v) in acc.iter_mut().zip(&b.samples) {
                *a += v as f64;
            }
        }
        Self::new(acc.into_iter().map(|v| v as f32).collect(), first.sample_rate)
    }

    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        if spec.channels != 1
            || spec.bits_per_sample != 16
            || spec.sample_format != hound::SampleFormat::Int
        {
            return Err(Error::InvalidInput(format!(
                "{}: expected 16-bit PCM mono, found {} channel(s) at {} bits",
                path.display(),
                spec.channels,
                spec.bits_per_sample
            )));
        }
        let samples = reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(samples, spec.sample_rate)
    }

    /// Writes 16-bit PCM mono via a temporary file renamed into place.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        crate::io::write_atomic(path.as_ref(), |file| {
            let mut writer = hound::WavWriter::new(std::io::BufWriter::new(file), spec)?;
            for &s in &self.samples {
                writer.write_sample(to_pcm16(s))?;
            }
            writer.finalize()?;
            Ok(())
        })
    }
}

pub fn to_pcm16(sample: f32) -> i16 {
    (sample as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_zero_rate() {
        assert!(AudioBuffer::new(vec![0.0, f32::NAN], 16000).is_err());
        assert!(AudioBuffer::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn wav_round_trip_is_exact_for_pcm_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f32> = (-50..50).map(|i| i as f32 * 300.0 / 32768.0).collect();
        let a = AudioBuffer::new(samples, 16000).unwrap();
        a.write_wav(&path).unwrap();
        let b = AudioBuffer::read_wav(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pcm_conversion_clamps() {
        assert_eq!(to_pcm16(2.0), 32767);
        assert_eq!(to_pcm16(-2.0), -32768);
        assert_eq!(to_pcm16(0.0), 0);
    }

    #[test]
    fn sum_checks_lengths() {
        let a = AudioBuffer::new(vec![1.0; 4], 8000).unwrap();
        let b = AudioBuffer::new(vec![1.0; 5], 8000).unwrap();
        assert!(AudioBuffer::sum([&a, &b]).is_err());
        let s = AudioBuffer::sum([&a, &a]).unwrap();
        assert_eq!(s.samples(), &[2.0; 4]);
    }
}

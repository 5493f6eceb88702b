//! `SNAC` code stream container.
//!
//! Layout (little-endian): magic `SNAC`, version u16, sample_rate u32,
//! n_codebooks u16, bits_per_code u16, n_sources u16, n_frames u32,
//! original_len u64, one prompt tag byte per source, then the codes as u16
//! in (source, codebook, frame) order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::extractor::PromptType;
use crate::rvq::CodeGrid;

pub const STREAM_MAGIC: &[u8; 4] = b"SNAC";
pub const STREAM_VERSION: u16 = 1;
/// Header bytes before the prompt tags.
pub const FIXED_HEADER_LEN: usize = 28;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeStream {
    pub sample_rate: u32,
    pub bits_per_code: u16,
    pub original_len: u64,
    pub prompts: Vec<PromptType>,
    /// One grid per prompt, all with the same shape.
    pub codes: Vec<CodeGrid>,
}

impl CodeStream {
    pub fn new(
        sample_rate: u32,
        bits_per_code: u16,
        original_len: u64,
        prompts: Vec<PromptType>,
        codes: Vec<CodeGrid>,
    ) -> Result<Self> {
        let s = Self {
            sample_rate,
            bits_per_code,
            original_len,
            prompts,
            codes,
        };
        s.check().map_err(Error::InvalidArgument)?;
        Ok(s)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.prompts.is_empty() || self.prompts.len() != self.codes.len() {
            return Err(format!(
                "{} prompts for {} code grids",
                self.prompts.len(),
                self.codes.len()
            ));
        }
        if self.prompts.len() > u16::MAX as usize {
            return Err("too many sources".into());
        }
        if !(1..=16).contains(&self.bits_per_code) {
            return Err(format!("bits_per_code {} outside 1..=16", self.bits_per_code));
        }
        let (q, t) = (self.codes[0].n_codebooks(), self.codes[0].n_frames());
        if self.codes.iter().any(|g| g.n_codebooks() != q || g.n_frames() != t) {
            return Err("code grids differ in shape".into());
        }
        if q == 0 || q > u16::MAX as usize || t > u32::MAX as usize {
            return Err(format!("code grid shape {q}x{t} out of range"));
        }
        let limit = 1u32 << self.bits_per_code;
        if let Some(c) = self
            .codes
            .iter()
            .flat_map(|g| g.codes())
            .find(|&&c| c as u32 >= limit)
        {
            return Err(format!("code {c} needs more than {} bits", self.bits_per_code));
        }
        Ok(())
    }

    pub fn n_sources(&self) -> usize {
        self.prompts.len()
    }

    pub fn n_codebooks(&self) -> usize {
        self.codes[0].n_codebooks()
    }

    pub fn n_frames(&self) -> usize {
        self.codes[0].n_frames()
    }

    /// Number of code entries in the payload.
    pub fn n_entries(&self) -> usize {
        self.n_sources() * self.n_codebooks() * self.n_frames()
    }

    pub fn header_len(&self) -> usize {
        FIXED_HEADER_LEN + self.n_sources()
    }

    pub fn byte_len(&self) -> usize {
        self.header_len() + 2 * self.n_entries()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(STREAM_MAGIC);
        out.extend_from_slice(&STREAM_VERSION.to_le_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&(self.n_codebooks() as u16).to_le_bytes());
        out.extend_from_slice(&self.bits_per_code.to_le_bytes());
        out.extend_from_slice(&(self.n_sources() as u16).to_le_bytes());
        out.extend_from_slice(&(self.n_frames() as u32).to_le_bytes());
        out.extend_from_slice(&self.original_len.to_le_bytes());
        out.extend(self.prompts.iter().map(|p| p.tag()));
        for grid in &self.codes {
            for &c in grid.codes() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: &str| Error::CorruptStream(msg.to_string());
        if bytes.len() < FIXED_HEADER_LEN {
            return Err(corrupt("truncated header"));
        }
        if &bytes[..4] != STREAM_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = u16_at(4);
        if version != STREAM_VERSION {
            return Err(Error::CorruptStream(format!("unsupported version {version}")));
        }
        let sample_rate = u32_at(6);
        let n_codebooks = u16_at(10) as usize;
        let bits_per_code = u16_at(12);
        let n_sources = u16_at(14) as usize;
        let n_frames = u32_at(16) as usize;
        let original_len = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let header = FIXED_HEADER_LEN + n_sources;
        let expected = n_sources
            .checked_mul(n_codebooks)
            .and_then(|v| v.checked_mul(n_frames))
            .and_then(|v| v.checked_mul(2))
            .and_then(|v| v.checked_add(header))
            .ok_or_else(|| corrupt("header sizes overflow"))?;
        if bytes.len() != expected {
            return Err(Error::CorruptStream(format!(
                "stream has {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let prompts = bytes[FIXED_HEADER_LEN..header]
            .iter()
            .map(|&t| PromptType::from_tag(t).ok_or_else(|| Error::CorruptStream(format!("unknown prompt tag {t}"))))
            .collect::<Result<Vec<_>>>()?;
        let per_grid = n_codebooks * n_frames;
        let codes = (0..n_sources)
            .map(|s| {
                let start = header + 2 * s * per_grid;
                let values = bytes[start..start + 2 * per_grid]
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect();
                CodeGrid::new(n_codebooks, n_frames, values)
            })
            .collect::<Result<Vec<_>>>()?;
        let stream = Self {
            sample_rate,
            bits_per_code,
            original_len,
            prompts,
            codes,
        };
        stream.check().map_err(Error::CorruptStream)?;
        Ok(stream)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_bytes_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use PromptType::*;

    fn sample(n_sources: usize) -> CodeStream {
        let prompts = [Speech, Music, Sfx, Mix][..n_sources].to_vec();
        let codes = (0..n_sources)
            .map(|s| CodeGrid::new(12, 50, (0..600).map(|i| ((i * 7 + s) % 1024) as u16).collect()).unwrap())
            .collect();
        CodeStream::new(16000, 10, 16000, prompts, codes).unwrap()
    }

    #[test]
    fn size_arithmetic() {
        let s = sample(1);
        assert_eq!(s.n_entries(), 600);
        let s = sample(3);
        assert_eq!(s.n_entries(), 1800);
        assert_eq!(s.to_bytes().len(), 28 + 3 + 1800 * 2);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let bytes = sample(2).to_bytes();
        let back = CodeStream::from_bytes(&bytes).unwrap();
        assert_eq!(back, sample(2));
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_detected() {
        let bytes = sample(2).to_bytes();
        let is_corrupt = |b: &[u8]| matches!(CodeStream::from_bytes(b), Err(Error::CorruptStream(_)));
        assert!(is_corrupt(&bytes[..bytes.len() - 1]));
        assert!(is_corrupt(&bytes[..10]));
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(is_corrupt(&b));
        let mut b = bytes.clone();
        b[4] = 9;
        assert!(is_corrupt(&b));
        let mut b = bytes.clone();
        b[28] = 7;
        assert!(is_corrupt(&b));
        let mut b = bytes.clone();
        let n = b.len();
        b[n - 1] = 0xff;
        assert!(is_corrupt(&b));
    }

    #[test]
    fn rejects_wide_codes() {
        let grid = CodeGrid::new(1, 1, vec![1024]).unwrap();
        assert!(CodeStream::new(16000, 10, 320, vec![Speech], vec![grid]).is_err());
    }
}

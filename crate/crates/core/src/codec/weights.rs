//! Named parameter tensors for a [`ModelConfig`], their seeded
//! initialization, and the `SUWT` binary weight file.
//!
//! The layer graph in [`param_specs`] is the single list of tensors a config
//! owns; initialization, loading and parameter counting all walk it.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{ConvKernel, MatrixView, TransformerLayerWeights};

pub const WEIGHT_MAGIC: &[u8; 4] = b"SUWT";
pub const WEIGHT_VERSION: u16 = 1;

/// How a tensor is filled by [`init_weights`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `[-a, a]` with `a = sqrt(1 / fan_in)`.
    FanIn(usize),
    Ones,
    Zeros,
    /// Uniform entries in `[-scale, scale]` with row 0 pinned to the zero
    /// vector.
    Codebook(f32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

struct GraphBuilder {
    specs: Vec<ParamSpec>,
}

impl GraphBuilder {
    fn push(&mut self, name: String, dims: Vec<usize>, init: Init) {
        self.specs.push(ParamSpec { name, dims, init });
    }

    fn conv(&mut self, prefix: &str, c_in: usize, c_out: usize, kernel: usize) {
        let fan_in = c_in * kernel;
        self.push(format!("{prefix}.weight"), vec![c_out, c_in, kernel], Init::FanIn(fan_in));
        self.push(format!("{prefix}.bias"), vec![c_out], Init::FanIn(fan_in));
    }

    /// Transposed kernels are stored `[in, out, k]`.
    fn conv_transposed(&mut self, prefix: &str, c_in: usize, c_out: usize, kernel: usize) {
        let fan_in = c_in * kernel;
        self.push(format!("{prefix}.weight"), vec![c_in, c_out, kernel], Init::FanIn(fan_in));
        self.push(format!("{prefix}.bias"), vec![c_out], Init::FanIn(fan_in));
    }

    fn linear(&mut self, prefix: &str, d_in: usize, d_out: usize, bias: bool) {
        self.push(format!("{prefix}.weight"), vec![d_out, d_in], Init::FanIn(d_in));
        if bias {
            self.push(format!("{prefix}.bias"), vec![d_out], Init::FanIn(d_in));
        }
    }

    fn snake(&mut self, prefix: &str, channels: usize) {
        self.push(format!("{prefix}.alpha"), vec![channels], Init::Ones);
    }

    fn residual_unit(&mut self, prefix: &str, channels: usize) {
        self.snake(&format!("{prefix}.act1"), channels);
        self.conv(&format!("{prefix}.conv1"), channels, channels, 7);
        self.snake(&format!("{prefix}.act2"), channels);
        self.conv(&format!("{prefix}.conv2"), channels, channels, 1);
    }

    fn transformer(&mut self, prefix: &str, d: usize, ffn: usize) {
        self.push(format!("{prefix}.norm1.gain"), vec![d], Init::Ones);
        self.push(format!("{prefix}.norm1.bias"), vec![d], Init::Zeros);
        for p in ["query", "key", "value", "output"] {
            self.push(format!("{prefix}.attn.{p}"), vec![d, d], Init::FanIn(d));
        }
        self.push(format!("{prefix}.norm2.gain"), vec![d], Init::Ones);
        self.push(format!("{prefix}.norm2.bias"), vec![d], Init::Zeros);
        self.push(format!("{prefix}.ff.in"), vec![ffn, d], Init::FanIn(d));
        self.push(format!("{prefix}.ff.out"), vec![d, ffn], Init::FanIn(ffn));
    }
}

pub fn encoder_transformer(k: usize) -> String {
    format!("encoder.transformer{k}")
}
pub fn decoder_transformer(k: usize) -> String {
    format!("decoder.transformer{k}")
}
pub fn cross_prompt_layer(k: usize) -> String {
    format!("extractor.cross{k}")
}
pub fn extraction_layer(k: usize) -> String {
    format!("extractor.extract{k}")
}
pub fn quantizer(r: usize) -> String {
    format!("rvq{r}")
}
pub const PROMPT_TABLE: &str = "extractor.prompts";

/// Entry range of RVQ layer `layer`; deeper layers see smaller residuals.
pub fn codebook_scale(layer: usize) -> f32 {
    CODEBOOK_DECAY.powi(layer as i32)
}

const CODEBOOK_DECAY: f32 = 0.7;

/// Every tensor owned by `config`, in a fixed order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut g = GraphBuilder { specs: Vec::new() };
    let f = config.latent_dim;
    let d = config.transformer_hidden;
    let ffn = config.ffn_dim;

    g.conv("encoder.conv_in", 1, config.enc_base_dim, 7);
    let enc = config.encoder_channels();
    for (i, (&c, &s)) in enc.iter().zip(&config.strides).enumerate() {
        for j in 0..config.residual_dilations.len() {
            g.residual_unit(&format!("encoder.block{i}.res{j}"), c);
        }
        g.snake(&format!("encoder.block{i}.act"), c);
        g.conv(&format!("encoder.block{i}.down"), c, 2 * c, 2 * s);
    }
    let top = config.enc_base_dim << config.strides.len();
    g.snake("encoder.act_out", top);
    g.conv("encoder.conv_out", top, f, 3);
    for k in 0..config.n_enc_transformer {
        g.transformer(&encoder_transformer(k), d, ffn);
    }

    if config.uses_extractor() {
        g.push(PROMPT_TABLE.to_string(), vec![f, 4], Init::FanIn(1));
        for k in 0..config.n_cross_prompt_layers {
            g.transformer(&cross_prompt_layer(k), d, ffn);
        }
        g.linear("extractor.film.scale", f, f, true);
        g.linear("extractor.film.shift", f, f, true);
        for k in 0..config.n_extract_layers {
            g.transformer(&extraction_layer(k), d, ffn);
        }
    }

    for r in 0..config.n_quantizers() {
        let q = quantizer(r);
        g.linear(&format!("{q}.down"), f, config.code_dim, true);
        g.linear(&format!("{q}.up"), config.code_dim, f, true);
        for c in 0..config.n_codebooks {
            g.push(
                format!("{q}.codebook{c}"),
                vec![config.codebook_size, config.code_dim],
                Init::Codebook(codebook_scale(c)),
            );
        }
    }

    for k in 0..config.n_dec_transformer {
        g.transformer(&decoder_transformer(k), d, ffn);
    }
    g.conv("decoder.conv_in", f, config.dec_base_dim, 7);
    let mut last = config.dec_base_dim;
    for (i, ((a, b), s)) in config
        .decoder_channels()
        .into_iter()
        .zip(config.decoder_strides())
        .enumerate()
    {
        g.snake(&format!("decoder.block{i}.act"), a);
        g.conv_transposed(&format!("decoder.block{i}.up"), a, b, 2 * s);
        for j in 0..config.residual_dilations.len() {
            g.residual_unit(&format!("decoder.block{i}.res{j}"), b);
        }
        last = b;
    }
    g.snake("decoder.act_out", last);
    g.conv("decoder.conv_out", last, 1, 7);
    g.specs
}

/// Parameter counts grouped by layer (tensor name minus its last segment).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCount {
    pub per_layer: Vec<(String, usize)>,
    pub total: usize,
}

pub fn count_params(config: &ModelConfig) -> ParamCount {
    let mut per_layer: Vec<(String, usize)> = Vec::new();
    let mut total = 0;
    for spec in param_specs(config) {
        let layer = spec
            .name
            .rsplit_once('.')
            .map_or(spec.name.as_str(), |(l, _)| l)
            .to_string();
        let n = spec.numel();
        total += n;
        match per_layer.last_mut() {
            Some((name, count)) if *name == layer => *count += n,
            _ => per_layer.push((layer, n)),
        }
    }
    ParamCount { per_layer, total }
}

/// Immutable set of named tensors plus the seed they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    seed: u64,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

/// Deterministic seeded initialization of every tensor in the config graph.
pub fn init_weights(config: &ModelConfig, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = param_specs(config)
        .into_iter()
        .map(|spec| {
            let n = spec.numel();
            let data = match spec.init {
                Init::FanIn(fan_in) => {
                    let a = (1.0 / fan_in as f64).sqrt() as f32;
                    (0..n).map(|_| rng.random_range(-a..=a)).collect()
                }
                Init::Ones => vec![1.0; n],
                Init::Zeros => vec![0.0; n],
                Init::Codebook(scale) => {
                    let width = spec.dims[1];
                    let mut data: Vec<f32> = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
                    data[..width].iter_mut().for_each(|v| *v = 0.0);
                    data
                }
            };
            Tensor {
                name: spec.name,
                dims: spec.dims,
                data,
            }
        })
        .collect();
    WeightStore::from_tensors(seed, tensors)
}

impl WeightStore {
    pub fn from_tensors(seed: u64, tensors: Vec<Tensor>) -> Self {
        let index = tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.clone(), i))
            .collect();
        Self {
            seed,
            tensors,
            index,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// 64-bit FNV-1a over names, shapes and raw values.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for t in &self.tensors {
            eat(t.name.as_bytes());
            for &d in &t.dims {
                eat(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.tensors[i])
            .ok_or_else(|| Error::WeightFormat(format!("missing tensor {name}")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.tensors[i]),
            None => Err(Error::WeightFormat(format!("missing tensor {name}"))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<&[f32]> {
        let t = self.tensor(name)?;
        if t.dims.len() != 1 {
            return Err(Error::WeightFormat(format!("{name} is not a vector")));
        }
        Ok(&t.data)
    }

    pub fn matrix(&self, name: &str) -> Result<MatrixView<'_>> {
        let t = self.tensor(name)?;
        match t.dims.as_slice() {
            &[rows, cols] => MatrixView::new(rows, cols, &t.data),
            _ => Err(Error::WeightFormat(format!("{name} is not a matrix"))),
        }
    }

    /// Forward kernel `[out, in, k]` or, with `transposed`, `[in, out, k]`.
    pub fn conv(&self, prefix: &str, transposed: bool) -> Result<ConvKernel<'_>> {
        let w = self.tensor(&format!("{prefix}.weight"))?;
        let bias = self.vector(&format!("{prefix}.bias"))?;
        let &[a, b, k] = w.dims.as_slice() else {
            return Err(Error::WeightFormat(format!("{prefix}.weight is not rank 3")));
        };
        let (c_in, c_out) = if transposed { (a, b) } else { (b, a) };
        Ok(ConvKernel {
            in_channels: c_in,
            out_channels: c_out,
            kernel_size: k,
            weight: &w.data,
            bias: Some(bias),
        })
    }

    pub fn transformer(&self, prefix: &str, n_heads: usize) -> Result<TransformerLayerWeights<'_>> {
        let query = self.matrix(&format!("{prefix}.attn.query"))?;
        let w = TransformerLayerWeights {
            hidden_dim: query.rows(),
            n_heads,
            norm1_gain: self.vector(&format!("{prefix}.norm1.gain"))?,
            norm1_bias: self.vector(&format!("{prefix}.norm1.bias"))?,
            query,
            key: self.matrix(&format!("{prefix}.attn.key"))?,
            value: self.matrix(&format!("{prefix}.attn.value"))?,
            output: self.matrix(&format!("{prefix}.attn.output"))?,
            norm2_gain: self.vector(&format!("{prefix}.norm2.gain"))?,
            norm2_bias: self.vector(&format!("{prefix}.norm2.bias"))?,
            ff_in: self.matrix(&format!("{prefix}.ff.in"))?,
            ff_out: self.matrix(&format!("{prefix}.ff.out"))?,
        };
        w.validate()?;
        Ok(w)
    }

    /// Checks that every tensor of the config graph is present with its shape.
    pub fn validate_against(&self, config: &ModelConfig) -> Result<()> {
        let specs = param_specs(config);
        if let Some(extra) = self.tensors.iter().find(|t| !specs.iter().any(|s| s.name == t.name)) {
            return Err(Error::WeightFormat(format!(
                "{} is not a {} parameter",
                extra.name, config.arch_family
            )));
        }
        for spec in specs {
            let t = self.tensor(&spec.name)?;
            if t.dims != spec.dims {
                return Err(Error::WeightFormat(format!(
                    "{} has shape {:?}, config expects {:?}",
                    spec.name, t.dims, spec.dims
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + self.numel() * 4);
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != WEIGHT_MAGIC {
            return Err(Error::WeightFormat("bad magic".into()));
        }
        let version = r.u16()?;
        if version != WEIGHT_VERSION {
            return Err(Error::WeightFormat(format!("unsupported version {version}")));
        }
        let seed = r.u64()?;
        let mut tensors = Vec::new();
        while r.pos < bytes.len() {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::WeightFormat("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor { name, dims, data });
        }
        Ok(Self::from_tensors(seed, tensors))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes();
        crate::io::write_atomic(path.as_ref(), |file| {
            let mut w = std::io::BufWriter::new(file);
            w.write_all(&bytes)?;
            w.flush()?;
            Ok(())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::WeightFormat("unexpected end of file".into())),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ArchFamily;

    #[test]
    fn same_seed_same_checksum() {
        let c = ModelConfig::tiny(ArchFamily::Sunac);
        assert_eq!(init_weights(&c, 7).checksum(), init_weights(&c, 7).checksum());
        assert_eq!(init_weights(&c, 7), init_weights(&c, 7));
    }

    #[test]
    fn different_seed_differs() {
        let c = ModelConfig::tiny(ArchFamily::Sunac);
        let (a, b) = (init_weights(&c, 1), init_weights(&c, 2));
        assert!(a.tensors().iter().zip(b.tensors()).any(|(x, y)| x.data != y.data));
        assert_ne!(a.checksum(), b.checksum());
    }

    #[test]
    fn linear_closed_form_count() {
        let mut g = GraphBuilder { specs: Vec::new() };
        g.linear("l", 1024, 1024, true);
        let n: usize = g.specs.iter().map(ParamSpec::numel).sum();
        assert_eq!(n, 1_049_600);
    }

    #[test]
    fn counts_match_element_totals() {
        for f in ArchFamily::ALL {
            let c = ModelConfig::tiny(f);
            let store = init_weights(&c, 3);
            assert_eq!(count_params(&c).total, store.numel(), "{f}");
            let per_layer: usize = count_params(&c).per_layer.iter().map(|(_, n)| n).sum();
            assert_eq!(per_layer, store.numel());
            store.validate_against(&c).unwrap();
        }
    }

    #[test]
    fn codebook_row_zero_is_zero() {
        let c = ModelConfig::tiny(ArchFamily::Sunac);
        let store = init_weights(&c, 4);
        let cb = store.matrix("rvq0.codebook3").unwrap();
        assert!(cb.row(0).iter().all(|&v| v == 0.0));
        assert!(cb.row(1).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn file_round_trip() {
        let c = ModelConfig::tiny(ArchFamily::DacT);
        let store = init_weights(&c, 5);
        let bytes = store.to_bytes();
        assert_eq!(&bytes[..4], b"SUWT");
        let back = WeightStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncated_file_rejected() {
        let c = ModelConfig::tiny(ArchFamily::Dac);
        let bytes = init_weights(&c, 5).to_bytes();
        assert!(WeightStore::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(WeightStore::from_bytes(&bad).is_err());
    }

    #[test]
    fn shape_mismatch_detected() {
        let c = ModelConfig::tiny(ArchFamily::Dac);
        let mut store = init_weights(&c, 6);
        store.tensor_mut("encoder.conv_in.bias").unwrap().dims = vec![3];
        assert!(store.validate_against(&c).is_err());
    }
}

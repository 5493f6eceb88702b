//! Symbolic parameter and MAC accounting.
//!
//! An [`ArchSpec`] lists every layer with its shape, a sharing tag and the
//! hop size of its input sequence. MACs split into a part computed once per
//! input (`Const`) and a part repeated for every requested source
//! (`PerSource`), so the total for `N` sources is `const + per_source * N`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::codec::{ArchFamily, ModelConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    Const,
    PerSource,
}

/// How a layer's MACs grow with input duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
    },
    TransposedConv1d {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    },
    /// Applied to every time step.
    Linear { d_in: usize, d_out: usize, bias: bool },
    /// Multi-head self-attention without projection biases.
    Attention { d: usize, heads: usize },
    FeedForward { d: usize, ffn: usize },
    /// Two prompt-to-feature linear maps plus the broadcast modulation.
    Film { d: usize },
    /// Down projection, exhaustive nearest-entry search per layer, up
    /// projection.
    RvqScan {
        layers: usize,
        entries: usize,
        code_dim: usize,
        d: usize,
    },
    /// Extra cost of one prompt token passing through a layer that also
    /// carries the feature sequence.
    PromptToken { d: usize, ffn: usize },
    Norm { d: usize },
    Snake { channels: usize },
    PromptTable { d: usize, types: usize },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv1d { .. } => "conv1d",
            LayerKind::TransposedConv1d { .. } => "transposed_conv1d",
            LayerKind::Linear { .. } => "linear",
            LayerKind::Attention { .. } => "attention",
            LayerKind::FeedForward { .. } => "feed_forward",
            LayerKind::Film { .. } => "film",
            LayerKind::RvqScan { .. } => "rvq_scan",
            LayerKind::PromptToken { .. } => "prompt_token",
            LayerKind::Norm { .. } => "norm",
            LayerKind::Snake { .. } => "snake",
            LayerKind::PromptTable { .. } => "prompt_table",
        }
    }

    pub fn params(&self) -> u64 {
        let p = match *self {
            LayerKind::Conv1d { c_in, c_out, kernel, .. } => c_out * c_in * kernel + c_out,
            LayerKind::TransposedConv1d { c_in, c_out, kernel, .. } => c_in * c_out * kernel + c_out,
            LayerKind::Linear { d_in, d_out, bias } => d_in * d_out + if bias { d_out } else { 0 },
            LayerKind::Attention { d, .. } => 4 * d * d,
            LayerKind::FeedForward { d, ffn } => 2 * d * ffn,
            LayerKind::Film { d } => 2 * (d * d + d),
            LayerKind::RvqScan {
                layers,
                entries,
                code_dim,
                d,
            } => layers * entries * code_dim + 2 * d * code_dim + code_dim + d,
            LayerKind::PromptToken { .. } => 0,
            LayerKind::Norm { d } => 2 * d,
            LayerKind::Snake { channels } => channels,
            LayerKind::PromptTable { d, types } => d * types,
        };
        p as u64
    }

    pub fn regime(&self) -> Regime {
        match self {
            LayerKind::Attention { .. } => Regime::Quadratic,
            _ => Regime::Linear,
        }
    }

    /// MACs for an input sequence of `len` steps.
    fn macs(&self, len: u64) -> u64 {
        let u = |v: usize| v as u64;
        match *self {
            LayerKind::Conv1d {
                c_in,
                c_out,
                kernel,
                stride,
                padding,
                dilation,
            } => {
                let span = u(dilation * (kernel - 1) + 1);
                let padded = len + 2 * u(padding);
                let out = if padded < span { 0 } else { (padded - span) / u(stride) + 1 };
                u(c_out * c_in * kernel) * out
            }
            LayerKind::TransposedConv1d { c_in, c_out, kernel, .. } => u(c_in * c_out * kernel) * len,
            LayerKind::Linear { d_in, d_out, .. } => u(d_in * d_out) * len,
            LayerKind::Attention { d, .. } => 4 * len * u(d * d) + 2 * len * len * u(d),
            LayerKind::FeedForward { d, ffn } => 2 * len * u(d * ffn),
            LayerKind::Film { d } => 2 * u(d * d) + len * u(d),
            LayerKind::RvqScan {
                layers,
                entries,
                code_dim,
                d,
            } => len * (2 * u(d * code_dim) + u(layers * entries * code_dim)),
            LayerKind::PromptToken { d, ffn } => 4 * u(d * d) + 2 * u(d * ffn) + 4 * len * u(d),
            LayerKind::Norm { .. } | LayerKind::Snake { .. } | LayerKind::PromptTable { .. } => 0,
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        let positive = |vals: &[usize]| vals.iter().all(|&v| v > 0);
        let ok = match *self {
            LayerKind::Conv1d {
                c_in,
                c_out,
                kernel,
                stride,
                dilation,
                ..
            } => positive(&[c_in, c_out, kernel, stride, dilation]),
            LayerKind::TransposedConv1d {
                c_in,
                c_out,
                kernel,
                stride,
                output_padding,
                ..
            } => positive(&[c_in, c_out, kernel, stride]) && output_padding < stride,
            LayerKind::Linear { d_in, d_out, .. } => positive(&[d_in, d_out]),
            LayerKind::Attention { d, heads } => positive(&[d, heads]) && d % heads == 0,
            LayerKind::FeedForward { d, ffn } | LayerKind::PromptToken { d, ffn } => positive(&[d, ffn]),
            LayerKind::Film { d } | LayerKind::Norm { d } => d > 0,
            LayerKind::RvqScan {
                layers,
                entries,
                code_dim,
                d,
            } => positive(&[layers, code_dim, d]) && entries >= 2,
            LayerKind::Snake { channels } => channels > 0,
            LayerKind::PromptTable { d, types } => positive(&[d, types]),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid {} shape {self:?}", self.name()))
        }
    }

    /// `(in, out)` channel counts for layers that form the convolution chain.
    fn channels(&self) -> Option<(usize, usize)> {
        match *self {
            LayerKind::Conv1d { c_in, c_out, .. } | LayerKind::TransposedConv1d { c_in, c_out, .. } => {
                Some((c_in, c_out))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
    pub sharing: Sharing,
    /// Inactive layers hold parameters but are not run.
    pub active: bool,
    /// Waveform samples per step of this layer's input sequence.
    pub input_hop: usize,
    /// Chain id: convolutions with the same id must agree on channel counts
    /// with their predecessor in the chain.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: String,
    /// Samples per latent frame; inputs are padded to a multiple of it.
    pub frame_hop: usize,
    pub layers: Vec<LayerSpec>,
}

impl ArchSpec {
    pub fn params(&self) -> u64 {
        self.layers.iter().map(|l| l.kind.params()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Spec(format!("{}: {msg}", self.name)));
        if self.frame_hop == 0 {
            return err("frame_hop must be positive".into());
        }
        let mut last_out: [Option<usize>; 4] = [None; 4];
        for l in &self.layers {
            if let Err(msg) = l.kind.check() {
                return err(format!("{}: {msg}", l.name));
            }
            if l.input_hop == 0 || !self.frame_hop.is_multiple_of(l.input_hop) {
                return err(format!(
                    "{}: input hop {} does not divide frame hop {}",
                    l.name, l.input_hop, self.frame_hop
                ));
            }
            if let (Some(chain), Some((c_in, c_out))) = (l.chain, l.kind.channels()) {
                let slot = &mut last_out[chain as usize % 4];
                if let Some(prev) = *slot {
                    if prev != c_in {
                        return err(format!("{}: expects {c_in} channels, chain carries {prev}", l.name));
                    }
                }
                *slot = Some(c_out);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMacs {
    pub name: String,
    pub kind: String,
    pub sharing: Sharing,
    pub regime: Regime,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacReport {
    pub name: String,
    pub params: u64,
    pub const_macs: u64,
    pub per_source_macs: u64,
    pub layers: Vec<LayerMacs>,
}

impl MacReport {
    pub fn total(&self, n_sources: u64) -> u64 {
        self.const_macs + self.per_source_macs * n_sources
    }

    /// Layers whose cost grows faster than linearly with duration.
    pub fn quadratic_layers(&self) -> impl Iterator<Item = &LayerMacs> {
        self.layers.iter().filter(|l| l.regime == Regime::Quadratic)
    }
}

pub fn count_macs(spec: &ArchSpec, duration_s: f64, sample_rate: u32) -> Result<MacReport> {
    if !(duration_s > 0.0 && duration_s.is_finite()) || sample_rate == 0 {
        return Err(Error::InvalidArgument(format!(
            "duration {duration_s} s at {sample_rate} Hz"
        )));
    }
    spec.validate()?;
    let samples = (duration_s * sample_rate as f64).round() as u64;
    let hop = spec.frame_hop as u64;
    let padded = samples.div_ceil(hop).max(1) * hop;
    let mut report = MacReport {
        name: spec.name.clone(),
        params: spec.params(),
        const_macs: 0,
        per_source_macs: 0,
        layers: Vec::with_capacity(spec.layers.len()),
    };
    for l in &spec.layers {
        let macs = if l.active {
            l.kind.macs(padded / l.input_hop as u64)
        } else {
            0
        };
        match l.sharing {
            Sharing::Const => report.const_macs += macs,
            Sharing::PerSource => report.per_source_macs += macs,
        }
        report.layers.push(LayerMacs {
            name: l.name.clone(),
            kind: l.kind.name().to_string(),
            sharing: l.sharing,
            regime: l.kind.regime(),
            macs,
        });
    }
    Ok(report)
}

struct SpecBuilder {
    layers: Vec<LayerSpec>,
    sharing: Sharing,
    active: bool,
    hop: usize,
    chain: Option<u8>,
}

impl SpecBuilder {
    fn add(&mut self, name: String, kind: LayerKind) {
        self.layers.push(LayerSpec {
            name,
            kind,
            sharing: self.sharing,
            active: self.active,
            input_hop: self.hop,
            chain: self.chain,
        });
    }

    fn conv(&mut self, name: String, c_in: usize, c_out: usize, kernel: usize, dilation: usize) {
        let padding = dilation * (kernel - 1) / 2;
        self.add(
            name,
            LayerKind::Conv1d {
                c_in,
                c_out,
                kernel,
                stride: 1,
                padding,
                dilation,
            },
        );
    }

    fn residual_unit(&mut self, prefix: &str, channels: usize, dilation: usize) {
        self.add(format!("{prefix}.act1"), LayerKind::Snake { channels });
        self.conv(format!("{prefix}.conv1"), channels, channels, 7, dilation);
        self.add(format!("{prefix}.act2"), LayerKind::Snake { channels });
        self.conv(format!("{prefix}.conv2"), channels, channels, 1, 1);
    }

    fn transformer(&mut self, prefix: &str, config: &ModelConfig) {
        let (d, ffn) = (config.transformer_hidden, config.ffn_dim);
        self.add(format!("{prefix}.norm1"), LayerKind::Norm { d });
        self.add(
            format!("{prefix}.attn"),
            LayerKind::Attention {
                d,
                heads: config.n_heads,
            },
        );
        self.add(format!("{prefix}.norm2"), LayerKind::Norm { d });
        self.add(format!("{prefix}.ff"), LayerKind::FeedForward { d, ffn });
    }

    fn rvq(&mut self, name: String, config: &ModelConfig) {
        self.add(
            name,
            LayerKind::RvqScan {
                layers: config.n_codebooks,
                entries: config.codebook_size,
                code_dim: config.code_dim,
                d: config.latent_dim,
            },
        );
    }
}

fn encoder(b: &mut SpecBuilder, config: &ModelConfig) {
    b.hop = 1;
    b.chain = Some(0);
    b.conv("encoder.conv_in".into(), 1, config.enc_base_dim, 7, 1);
    let mut c = config.enc_base_dim;
    for (i, &s) in config.strides.iter().enumerate() {
        for (j, &d) in config.residual_dilations.iter().enumerate() {
            b.residual_unit(&format!("encoder.block{i}.res{j}"), c, d);
        }
        b.add(format!("encoder.block{i}.act"), LayerKind::Snake { channels: c });
        b.add(
            format!("encoder.block{i}.down"),
            LayerKind::Conv1d {
                c_in: c,
                c_out: 2 * c,
                kernel: 2 * s,
                stride: s,
                padding: s.div_ceil(2),
                dilation: 1,
            },
        );
        b.hop *= s;
        c *= 2;
    }
    b.add("encoder.act_out".into(), LayerKind::Snake { channels: c });
    b.conv("encoder.conv_out".into(), c, config.latent_dim, 3, 1);
    b.chain = None;
    for k in 0..config.n_enc_transformer {
        b.transformer(&format!("encoder.transformer{k}"), config);
    }
}

fn decoder(b: &mut SpecBuilder, config: &ModelConfig) {
    b.hop = config.hop();
    b.chain = None;
    for k in 0..config.n_dec_transformer {
        b.transformer(&format!("decoder.transformer{k}"), config);
    }
    b.chain = Some(1);
    let mut c = config.dec_base_dim;
    b.conv("decoder.conv_in".into(), config.latent_dim, c, 7, 1);
    for (i, &s) in config.strides.iter().rev().enumerate() {
        b.add(format!("decoder.block{i}.act"), LayerKind::Snake { channels: c });
        b.add(
            format!("decoder.block{i}.up"),
            LayerKind::TransposedConv1d {
                c_in: c,
                c_out: c / 2,
                kernel: 2 * s,
                stride: s,
                padding: s.div_ceil(2),
                output_padding: s % 2,
            },
        );
        b.hop /= s;
        c /= 2;
        for (j, &d) in config.residual_dilations.iter().enumerate() {
            b.residual_unit(&format!("decoder.block{i}.res{j}"), c, d);
        }
    }
    b.add("decoder.act_out".into(), LayerKind::Snake { channels: c });
    b.conv("decoder.conv_out".into(), c, 1, 7, 1);
    b.chain = None;
}

fn build(name: &str, config: &ModelConfig, with_decoder: bool) -> ArchSpec {
    let family = config.arch_family;
    let separated_encoder = matches!(family, ArchFamily::SdCodec | ArchFamily::SdCodecT | ArchFamily::Sunac);
    let mut b = SpecBuilder {
        layers: Vec::new(),
        sharing: if separated_encoder { Sharing::Const } else { Sharing::PerSource },
        active: true,
        hop: 1,
        chain: None,
    };
    encoder(&mut b, config);

    b.hop = config.hop();
    if config.uses_extractor() {
        b.sharing = Sharing::Const;
        let f = config.latent_dim;
        b.add("extractor.prompts".into(), LayerKind::PromptTable { d: f, types: 4 });
        for k in 0..config.n_cross_prompt_layers {
            let prefix = format!("extractor.cross{k}");
            b.sharing = Sharing::Const;
            b.transformer(&prefix, config);
            b.sharing = Sharing::PerSource;
            b.add(
                format!("{prefix}.prompt_token"),
                LayerKind::PromptToken {
                    d: config.transformer_hidden,
                    ffn: config.ffn_dim,
                },
            );
        }
        b.sharing = Sharing::PerSource;
        b.add("extractor.film".into(), LayerKind::Film { d: f });
        for k in 0..config.n_extract_layers {
            b.transformer(&format!("extractor.extract{k}"), config);
        }
    }

    b.sharing = Sharing::PerSource;
    for r in 0..config.n_quantizers() {
        // One domain quantizer runs per source; the others only hold weights.
        b.active = r == 0;
        b.rvq(format!("rvq{r}"), config);
    }
    b.active = true;

    if with_decoder {
        decoder(&mut b, config);
    }
    ArchSpec {
        name: name.to_string(),
        frame_hop: config.hop(),
        layers: b.layers,
    }
}

/// Cost spec of the graph that `config` runs.
pub fn spec_for_config(config: &ModelConfig) -> ArchSpec {
    build(config.arch_family.name(), config, true)
}

/// Name of the SUNAC variant that stops at the codes.
pub const SUNAC_ENCODER_ONLY: &str = "SUNAC-encoder-only";

/// The five codec families in table order, then the SUNAC encoder path alone.
pub fn builtin_specs() -> Vec<ArchSpec> {
    let mut specs: Vec<ArchSpec> = ArchFamily::ALL
        .iter()
        .map(|&f| spec_for_config(&ModelConfig::preset(f)))
        .collect();
    specs.push(build(SUNAC_ENCODER_ONLY, &ModelConfig::sunac(), false));
    specs
}

/// Case-insensitive lookup; `-`, `_` and spaces are ignored.
pub fn builtin_spec(name: &str) -> Result<ArchSpec> {
    let key = |s: &str| {
        s.chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase()
    };
    builtin_specs()
        .into_iter()
        .find(|s| key(&s.name) == key(name))
        .ok_or_else(|| Error::InvalidArgument(format!("unknown architecture {name:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub params: u64,
    pub const_macs: u64,
    pub per_source_macs: u64,
    pub total_macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub duration_s: f64,
    pub n_sources: u64,
    pub sample_rate: u32,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn row(&self, name: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.name.eq_ignore_ascii_case(name))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "duration {:.3} s, {} source(s), {} Hz",
            self.duration_s, self.n_sources, self.sample_rate
        );
        let _ = writeln!(
            out,
            "{:<20} {:>11} {:>10} {:>15} {:>10}",
            "model", "params (M)", "const (G)", "per source (G)", "total (G)"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<20} {:>11.2} {:>10.2} {:>15.2} {:>10.2}",
                r.name,
                r.params as f64 / 1e6,
                r.const_macs as f64 / 1e9,
                r.per_source_macs as f64 / 1e9,
                r.total_macs as f64 / 1e9
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn compare_report(duration_s: f64, n_sources: u64) -> Result<CompareReport> {
    compare_specs(&builtin_specs(), duration_s, n_sources, 16_000)
}

pub fn compare_specs(specs: &[ArchSpec], duration_s: f64, n_sources: u64, sample_rate: u32) -> Result<CompareReport> {
    if n_sources == 0 {
        return Err(Error::InvalidArgument("n_sources must be at least 1".into()));
    }
    let rows = specs
        .iter()
        .map(|s| {
            let r = count_macs(s, duration_s, sample_rate)?;
            Ok(CompareRow {
                total_macs: r.total(n_sources),
                name: r.name,
                params: r.params,
                const_macs: r.const_macs,
                per_source_macs: r.per_source_macs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareReport {
        duration_s,
        n_sources,
        sample_rate,
        rows,
    })
}

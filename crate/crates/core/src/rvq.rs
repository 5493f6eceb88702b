//! Residual vector quantization with a shared down/up projection.
//!
//! Each frame is projected from `F` to `code_dim`, then every layer picks the
//! codebook entry closest to the running residual and subtracts it. The
//! quantized frame is the up-projection of the sum of picked entries.

use crate::codec::{quantizer, FeatureMap, ModelConfig, WeightStore};
use crate::error::{ensure, Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: Matrix,
}

impl Codebook {
    /// `entries` is `n_entries × code_dim`.
    pub fn new(entries: Matrix) -> Result<Self> {
        if entries.rows() < 2 {
            return Err(Error::Config(format!(
                "codebook needs at least 2 entries, got {}",
                entries.rows()
            )));
        }
        if entries.cols() == 0 {
            return Err(Error::Config("codebook entries have zero width".into()));
        }
        if !entries.is_finite() {
            return Err(Error::Config("codebook has non-finite entries".into()));
        }
        Ok(Self { entries })
    }

    pub fn n_entries(&self) -> usize {
        self.entries.rows()
    }

    pub fn code_dim(&self) -> usize {
        self.entries.cols()
    }

    pub fn entry(&self, index: usize) -> &[f32] {
        self.entries.row(index)
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    /// Index and squared distance of the closest entry; the lowest index wins
    /// ties.
    pub fn nearest(&self, target: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.n_entries() {
            let d = squared_distance(target, self.entry(i));
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

fn squared_distance(a: &[f64], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y as f64;
            d * d
        })
        .sum()
}

/// `n_codebooks × n_frames` code indices, row-major by codebook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeGrid {
    n_codebooks: usize,
    n_frames: usize,
    codes: Vec<u16>,
}

impl CodeGrid {
    pub fn new(n_codebooks: usize, n_frames: usize, codes: Vec<u16>) -> Result<Self> {
        ensure(codes.len() == n_codebooks * n_frames, || {
            format!(
                "code grid {n_codebooks}x{n_frames} needs {} entries, got {}",
                n_codebooks * n_frames,
                codes.len()
            )
        })?;
        Ok(Self {
            n_codebooks,
            n_frames,
            codes,
        })
    }

    pub fn zeros(n_codebooks: usize, n_frames: usize) -> Self {
        Self {
            n_codebooks,
            n_frames,
            codes: vec![0; n_codebooks * n_frames],
        }
    }

    pub fn n_codebooks(&self) -> usize {
        self.n_codebooks
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn get(&self, codebook: usize, frame: usize) -> u16 {
        self.codes[codebook * self.n_frames + frame]
    }

    pub fn set(&mut self, codebook: usize, frame: usize, code: u16) {
        self.codes[codebook * self.n_frames + frame] = code;
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    pub fn column(&self, frame: usize) -> Vec<u16> {
        (0..self.n_codebooks).map(|q| self.get(q, frame)).collect()
    }

    /// Checks every index against the matching codebook size.
    pub fn validate(&self, rvq: &RvqWeights) -> Result<()> {
        if self.n_codebooks > rvq.n_codebooks() {
            return Err(Error::CorruptStream(format!(
                "{} code rows for {} codebooks",
                self.n_codebooks,
                rvq.n_codebooks()
            )));
        }
        for q in 0..self.n_codebooks {
            let size = rvq.codebooks[q].n_entries();
            for t in 0..self.n_frames {
                let c = self.get(q, t) as usize;
                if c >= size {
                    return Err(Error::CorruptStream(format!(
                        "code {c} at codebook {q}, frame {t} exceeds codebook size {size}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Codebooks plus the projections between feature and code space.
#[derive(Debug, Clone, PartialEq)]
pub struct RvqWeights {
    codebooks: Vec<Codebook>,
    down: Matrix,
    down_bias: Vec<f32>,
    up: Matrix,
    up_bias: Vec<f32>,
}

impl RvqWeights {
    /// `down` is `code_dim × F`, `up` is `F × code_dim`.
    pub fn new(
        codebooks: Vec<Codebook>,
        down: Matrix,
        down_bias: Vec<f32>,
        up: Matrix,
        up_bias: Vec<f32>,
    ) -> Result<Self> {
        if codebooks.is_empty() {
            return Err(Error::Config("quantizer has no codebooks".into()));
        }
        let code_dim = down.rows();
        let features = down.cols();
        let consistent = codebooks.iter().all(|c| c.code_dim() == code_dim)
            && down_bias.len() == code_dim
            && up.shape() == (features, code_dim)
            && up_bias.len() == features;
        if !consistent {
            return Err(Error::Config(format!(
                "quantizer projections do not agree with code_dim {code_dim} and {features} features"
            )));
        }
        Ok(Self {
            codebooks,
            down,
            down_bias,
            up,
            up_bias,
        })
    }

    /// Loads quantizer `index` (always 0 except for per-domain quantizers).
    pub fn from_store(store: &WeightStore, config: &ModelConfig, index: usize) -> Result<Self> {
        let q = quantizer(index);
        let codebooks = (0..config.n_codebooks)
            .map(|c| Codebook::new(store.matrix(&format!("{q}.codebook{c}"))?.to_owned()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            codebooks,
            store.matrix(&format!("{q}.down.weight"))?.to_owned(),
            store.vector(&format!("{q}.down.bias"))?.to_vec(),
            store.matrix(&format!("{q}.up.weight"))?.to_owned(),
            store.vector(&format!("{q}.up.bias"))?.to_vec(),
        )
    }

    pub fn n_codebooks(&self) -> usize {
        self.codebooks.len()
    }

    pub fn codebook(&self, layer: usize) -> &Codebook {
        &self.codebooks[layer]
    }

    pub fn code_dim(&self) -> usize {
        self.down.rows()
    }

    pub fn features(&self) -> usize {
        self.down.cols()
    }

    /// Down-projection of one feature column.
    pub fn project(&self, column: &[f32]) -> Result<Vec<f64>> {
        let z = self.down.view().apply(column, Some(&self.down_bias))?;
        Ok(z.into_iter().map(f64::from).collect())
    }

    /// Up-projection of a summed code vector.
    fn expand(&self, code: &[f64]) -> Result<Vec<f32>> {
        let code: Vec<f32> = code.iter().map(|&v| v as f32).collect();
        self.up.view().apply(&code, Some(&self.up_bias))
    }

    fn check_active(&self, n_active: usize) -> Result<()> {
        if n_active == 0 || n_active > self.n_codebooks() {
            return Err(Error::InvalidArgument(format!(
                "n_active {n_active} must be in 1..={}",
                self.n_codebooks()
            )));
        }
        Ok(())
    }

    fn sum_entries(&self, codes: impl Iterator<Item = (usize, usize)>) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.code_dim()];
        for (layer, index) in codes {
            for (a, &e) in acc.iter_mut().zip(self.codebooks[layer].entry(index)) {
                *a += e as f64;
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub quantized: FeatureMap,
    pub codes: CodeGrid,
    /// Frobenius norm over all frames of the projected residual after each
    /// layer.
    pub residual_norms: Vec<f64>,
}

/// Codebook and commitment terms; equal in a forward-only setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerLosses {
    pub codebook: f64,
    pub commitment: f64,
}

struct Trace {
    codes: CodeGrid,
    squared_norms: Vec<f64>,
    /// Per-layer sum of squared distances between residual and chosen entry.
    distances: Vec<f64>,
}

fn run_layers(features: &FeatureMap, rvq: &RvqWeights, n_active: usize) -> Result<Trace> {
    rvq.check_active(n_active)?;
    ensure(features.features() == rvq.features(), || {
        format!(
            "quantizer expects {} features, got {}",
            rvq.features(),
            features.features()
        )
    })?;
    let frames = features.frames();
    let mut codes = CodeGrid::zeros(n_active, frames);
    let mut squared_norms = vec![0.0; n_active];
    let mut distances = vec![0.0; n_active];
    for t in 0..frames {
        let mut residual = rvq.project(&features.values().column(t))?;
        for layer in 0..n_active {
            let codebook = &rvq.codebooks[layer];
            let (index, dist) = codebook.nearest(&residual);
            codes.set(layer, t, index as u16);
            for (r, &e) in residual.iter_mut().zip(codebook.entry(index)) {
                *r -= e as f64;
            }
            distances[layer] += dist;
            squared_norms[layer] += residual.iter().map(|r| r * r).sum::<f64>();
        }
    }
    Ok(Trace {
        codes,
        squared_norms,
        distances,
    })
}

pub fn quantize(features: &FeatureMap, rvq: &RvqWeights, n_active: usize) -> Result<Quantized> {
    let trace = run_layers(features, rvq, n_active)?;
    let quantized = codes_to_features(&trace.codes, rvq)?;
    Ok(Quantized {
        quantized,
        codes: trace.codes,
        residual_norms: trace.squared_norms.iter().map(|v| v.sqrt()).collect(),
    })
}

/// Up-projection of the summed entries named by `codes`.
pub fn codes_to_features(codes: &CodeGrid, rvq: &RvqWeights) -> Result<FeatureMap> {
    codes.validate(rvq)?;
    let mut columns = Vec::with_capacity(codes.n_frames());
    for t in 0..codes.n_frames() {
        let sum = rvq.sum_entries((0..codes.n_codebooks()).map(|q| (q, codes.get(q, t) as usize)));
        columns.push(rvq.expand(&sum)?);
    }
    let refs: Vec<&[f32]> = columns.iter().map(Vec::as_slice).collect();
    let values = if refs.is_empty() {
        Matrix::zeros(rvq.features(), 0)
    } else {
        Matrix::from_columns(&refs)?
    };
    FeatureMap::new(values)
}

/// Per-layer mean squared distance between residual and chosen entry, summed
/// over layers.
pub fn codebook_losses(features: &FeatureMap, rvq: &RvqWeights, n_active: usize) -> Result<QuantizerLosses> {
    let trace = run_layers(features, rvq, n_active)?;
    let elements = (features.frames() * rvq.code_dim()).max(1) as f64;
    let loss: f64 = trace.distances.iter().map(|d| d / elements).sum();
    Ok(QuantizerLosses {
        codebook: loss,
        commitment: loss,
    })
}

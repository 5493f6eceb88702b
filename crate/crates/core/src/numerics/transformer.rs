//! Pre-norm Transformer layers operating along the time axis of an `F×T`
//! feature matrix, with optional rotary position encoding on queries and keys.

use rand::Rng;

use super::{Matrix, MatrixView};
use crate::error::{ensure, Error, Result};

pub const ROPE_BASE: f64 = 10_000.0;
const LAYER_NORM_EPS: f64 = 1e-5;

/// Borrowed weights of one Transformer layer. Linear weights are `[out, in]`.
#[derive(Debug, Clone, Copy)]
pub struct TransformerLayerWeights<'a> {
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub norm1_gain: &'a [f32],
    pub norm1_bias: &'a [f32],
    pub query: MatrixView<'a>,
    pub key: MatrixView<'a>,
    pub value: MatrixView<'a>,
    pub output: MatrixView<'a>,
    pub norm2_gain: &'a [f32],
    pub norm2_bias: &'a [f32],
    /// `[ffn_dim, hidden_dim]`
    pub ff_in: MatrixView<'a>,
    /// `[hidden_dim, ffn_dim]`
    pub ff_out: MatrixView<'a>,
}

impl TransformerLayerWeights<'_> {
    pub fn validate(&self) -> Result<()> {
        let d = self.hidden_dim;
        ensure(self.n_heads > 0 && d.is_multiple_of(self.n_heads), || {
            format!("hidden_dim {d} not divisible by {} heads", self.n_heads)
        })?;
        ensure((d / self.n_heads).is_multiple_of(2), || {
            "head dimension must be even for rotary encoding".to_string()
        })?;
        for (name, m) in [
            ("query", self.query),
            ("key", self.key),
            ("value", self.value),
            ("output", self.output),
        ] {
            ensure(m.rows() == d && m.cols() == d, || {
                format!("{name} projection is {}x{}, expected {d}x{d}", m.rows(), m.cols())
            })?;
        }
        let ffn = self.ff_in.rows();
        ensure(self.ff_in.cols() == d, || "ff_in input width".to_string())?;
        ensure(self.ff_out.rows() == d && self.ff_out.cols() == ffn, || {
            "ff_out shape".to_string()
        })?;
        for v in [self.norm1_gain, self.norm1_bias, self.norm2_gain, self.norm2_bias] {
            ensure(v.len() == d, || "layer norm vector length".to_string())?;
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.n_heads
    }
}

/// Owned layer weights; handy for tests and standalone use.
#[derive(Debug, Clone)]
pub struct OwnedTransformerLayer {
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub norm1_gain: Vec<f32>,
    pub norm1_bias: Vec<f32>,
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
    pub output: Matrix,
    pub norm2_gain: Vec<f32>,
    pub norm2_bias: Vec<f32>,
    pub ff_in: Matrix,
    pub ff_out: Matrix,
}

impl OwnedTransformerLayer {
    /// Uniform fan-in scaled weights, unit gains, zero norm biases.
    pub fn random<R: Rng>(hidden_dim: usize, n_heads: usize, ffn_dim: usize, rng: &mut R) -> Self {
        let mut lin = |rows: usize, cols: usize| {
            let a = (1.0 / cols as f64).sqrt() as f32;
            Matrix::from_fn(rows, cols, |_, _| rng.random_range(-a..=a))
        };
        Self {
            hidden_dim,
            n_heads,
            norm1_gain: vec![1.0; hidden_dim],
            norm1_bias: vec![0.0; hidden_dim],
            query: lin(hidden_dim, hidden_dim),
            key: lin(hidden_dim, hidden_dim),
            value: lin(hidden_dim, hidden_dim),
            output: lin(hidden_dim, hidden_dim),
            norm2_gain: vec![1.0; hidden_dim],
            norm2_bias: vec![0.0; hidden_dim],
            ff_in: lin(ffn_dim, hidden_dim),
            ff_out: lin(hidden_dim, ffn_dim),
        }
    }

    pub fn weights(&self) -> TransformerLayerWeights<'_> {
        TransformerLayerWeights {
            hidden_dim: self.hidden_dim,
            n_heads: self.n_heads,
            norm1_gain: &self.norm1_gain,
            norm1_bias: &self.norm1_bias,
            query: self.query.view(),
            key: self.key.view(),
            value: self.value.view(),
            output: self.output.view(),
            norm2_gain: &self.norm2_gain,
            norm2_bias: &self.norm2_bias,
            ff_in: self.ff_in.view(),
            ff_out: self.ff_out.view(),
        }
    }
}

/// Applies one layer to an `F×T` input. Output has the input's shape.
pub fn transformer_block(
    input: &Matrix,
    weights: &TransformerLayerWeights<'_>,
    use_rope: bool,
) -> Result<Matrix> {
    forward(input, weights, use_rope, false).map(|(out, _)| out)
}

/// Like [`transformer_block`], also returning the per-head `T×T` attention
/// probabilities (row = query position).
pub fn transformer_block_traced(
    input: &Matrix,
    weights: &TransformerLayerWeights<'_>,
    use_rope: bool,
) -> Result<(Matrix, Vec<Matrix>)> {
    forward(input, weights, use_rope, true)
}

/// Applies layers in order; a non-finite activation reports its layer index.
pub fn transformer_stack(
    input: &Matrix,
    layers: &[TransformerLayerWeights<'_>],
    use_rope: bool,
) -> Result<Matrix> {
    let mut x = input.clone();
    for (i, layer) in layers.iter().enumerate() {
        x = transformer_block(&x, layer, use_rope).map_err(|e| match e {
            Error::NonFinite { stage, .. } => Error::NonFinite { stage, layer: i },
            other => other,
        })?;
    }
    Ok(x)
}

fn forward(
    input: &Matrix,
    w: &TransformerLayerWeights<'_>,
    use_rope: bool,
    trace: bool,
) -> Result<(Matrix, Vec<Matrix>)> {
    w.validate()?;
    let (features, steps) = input.shape();
    ensure(features == w.hidden_dim, || {
        format!(
            "transformer input has {features} features, layer expects {}",
            w.hidden_dim
        )
    })?;
    ensure(steps >= 1, || "transformer input has no time steps".to_string())?;

    // Work in token-major layout: T×F.
    let mut tokens = input.transpose();
    let normed = layer_norm(&tokens, w.norm1_gain, w.norm1_bias);
    let (attended, maps) = self_attention(&normed, w, use_rope, trace)?;
    add_assign(&mut tokens, &attended);

    let normed = layer_norm(&tokens, w.norm2_gain, w.norm2_bias);
    let mut hidden = normed.matmul_t(w.ff_in)?;
    hidden.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
    let ff = hidden.matmul_t(w.ff_out)?;
    add_assign(&mut tokens, &ff);

    if !tokens.is_finite() {
        return Err(Error::NonFinite {
            stage: "transformer",
            layer: 0,
        });
    }
    Ok((tokens.transpose(), maps))
}

fn self_attention(
    x: &Matrix,
    w: &TransformerLayerWeights<'_>,
    use_rope: bool,
    trace: bool,
) -> Result<(Matrix, Vec<Matrix>)> {
    let steps = x.rows();
    let head_dim = w.head_dim();
    let mut q = x.matmul_t(w.query)?;
    let mut k = x.matmul_t(w.key)?;
    let v = x.matmul_t(w.value)?;
    if use_rope {
        apply_rope(&mut q, w.n_heads);
        apply_rope(&mut k, w.n_heads);
    }

    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut context = Matrix::zeros(steps, w.hidden_dim);
    let mut maps = Vec::new();
    let mut scores = vec![0.0f64; steps];
    for h in 0..w.n_heads {
        let cols = h * head_dim..(h + 1) * head_dim;
        let mut map = trace.then(|| Matrix::zeros(steps, steps));
        for i in 0..steps {
            let qi = &q.row(i)[cols.clone()];
            for (j, s) in scores.iter_mut().enumerate() {
                *s = super::dot(qi, &k.row(j)[cols.clone()]) * scale;
            }
            softmax_in_place(&mut scores);
            let mut ctx = vec![0.0f64; head_dim];
            for (j, &p) in scores.iter().enumerate() {
                for (c, &vv) in ctx.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *c += p * vv as f64;
                }
            }
            for (dst, c) in context.row_mut(i)[cols.clone()].iter_mut().zip(&ctx) {
                *dst = *c as f32;
            }
            if let Some(m) = map.as_mut() {
                for (j, &p) in scores.iter().enumerate() {
                    m.set(i, j, p as f32);
                }
            }
        }
        if let Some(m) = map {
            maps.push(m);
        }
    }
    Ok((context.matmul_t(w.output)?, maps))
}

fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

/// Rotates consecutive pairs within each head by `pos · base^(-2i/head_dim)`.
/// Rows of `x` are positions.
pub fn apply_rope(x: &mut Matrix, n_heads: usize) {
    let (steps, dim) = x.shape();
    let head_dim = dim / n_heads;
    let half = head_dim / 2;
    let inv_freq: Vec<f64> = (0..half)
        .map(|i| ROPE_BASE.powf(-(2.0 * i as f64) / head_dim as f64))
        .collect();
    for pos in 0..steps {
        let row = x.row_mut(pos);
        for h in 0..n_heads {
            for (i, f) in inv_freq.iter().enumerate() {
                let (sin, cos) = (pos as f64 * f).sin_cos();
                let a = h * head_dim + 2 * i;
                let (x0, x1) = (row[a] as f64, row[a + 1] as f64);
                row[a] = (x0 * cos - x1 * sin) as f32;
                row[a + 1] = (x0 * sin + x1 * cos) as f32;
            }
        }
    }
}

/// Row-wise layer normalization of a token-major matrix.
pub fn layer_norm(x: &Matrix, gain: &[f32], bias: &[f32]) -> Matrix {
    let (rows, cols) = x.shape();
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / cols as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / cols as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for ((dst, &v), (&g, &b)) in out.row_mut(r).iter_mut().zip(row).zip(gain.iter().zip(bias)) {
            *dst = ((v as f64 - mean) * inv * g as f64 + b as f64) as f32;
        }
    }
    out
}

/// tanh approximation of GELU.
#[inline]
pub fn gelu(x: f32) -> f32 {
    let x = x as f64;
    let c = (2.0 / std::f64::consts::PI).sqrt();
    (0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())) as f32
}

fn add_assign(dst: &mut Matrix, src: &Matrix) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(d: usize, heads: usize, seed: u64) -> OwnedTransformerLayer {
        OwnedTransformerLayer::random(d, heads, 2 * d, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn random_input(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_token_preserves_shape() {
        let l = layer(8, 2, 1);
        let x = random_input(8, 1, 2);
        let (y, maps) = transformer_block_traced(&x, &l.weights(), true).unwrap();
        assert_eq!(y.shape(), (8, 1));
        assert!(y.is_finite());
        for m in maps {
            assert_eq!(m.get(0, 0), 1.0);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let l = layer(8, 2, 3);
        let x = random_input(8, 4, 4);
        let (_, maps) = transformer_block_traced(&x, &l.weights(), true).unwrap();
        assert_eq!(maps.len(), 2);
        for m in &maps {
            for r in 0..4 {
                let s: f64 = m.row(r).iter().map(|&v| v as f64).sum();
                assert!((s - 1.0).abs() < 1e-6, "row sum {s}");
            }
        }
    }

    #[test]
    fn rope_separates_identical_tokens() {
        // Tokens 0 and 1 are identical; token 2 differs so relative offsets matter.
        let l = layer(8, 2, 5);
        let base = random_input(8, 1, 6);
        let other = random_input(8, 1, 7);
        let x = Matrix::hcat(&[&base, &base, &other]).unwrap();
        let with = transformer_block(&x, &l.weights(), true).unwrap();
        let diff = (0..8)
            .map(|r| (with.get(r, 0) - with.get(r, 1)).abs())
            .fold(0.0, f32::max);
        assert!(diff > 1e-6, "rope outputs identical: {diff}");

        let without = transformer_block(&x, &l.weights(), false).unwrap();
        for r in 0..8 {
            assert_eq!(without.get(r, 0), without.get(r, 1));
        }
    }

    #[test]
    fn deterministic() {
        let l = layer(16, 4, 8);
        let x = random_input(16, 9, 9);
        let a = transformer_block(&x, &l.weights(), true).unwrap();
        let b = transformer_block(&x, &l.weights(), true).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn rope_preserves_norms_and_position_zero() {
        let mut x = random_input(3, 8, 10);
        let before = x.clone();
        apply_rope(&mut x, 2);
        assert_eq!(x.row(0), before.row(0));
        for r in 0..3 {
            let n0: f64 = before.row(r).iter().map(|&v| (v as f64).powi(2)).sum();
            let n1: f64 = x.row(r).iter().map(|&v| (v as f64).powi(2)).sum();
            assert!((n0 - n1).abs() < 1e-5);
        }
    }

    #[test]
    fn non_finite_reports_layer_index() {
        let good = layer(8, 2, 11);
        let mut bad = layer(8, 2, 12);
        bad.ff_out.data_mut()[0] = f32::INFINITY;
        let x = random_input(8, 3, 13);
        let err = transformer_stack(&x, &[good.weights(), bad.weights()], true).unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 1, .. }), "{err:?}");
    }

    #[test]
    fn wrong_feature_count_rejected() {
        let l = layer(8, 2, 14);
        let x = random_input(6, 3, 15);
        assert!(matches!(
            transformer_block(&x, &l.weights(), true),
            Err(Error::ContractViolation(_))
        ));
    }
}

//! 1-D convolution over channel-major `[channels, length]` matrices.
//!
//! Weight layout follows the usual convention:
//!
//! * forward:    `[out_channels, in_channels, kernel]`
//! * transposed: `[in_channels, out_channels, kernel]`

use super::Matrix;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    /// Extra samples appended to a transposed convolution's output.
    pub output_padding: usize,
    pub transposed: bool,
}

impl Default for ConvParams {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            dilation: 1,
            output_padding: 0,
            transposed: false,
        }
    }
}

impl ConvParams {
    pub fn same(kernel: usize, dilation: usize) -> Self {
        Self {
            padding: (kernel - 1) * dilation / 2,
            dilation,
            ..Self::default()
        }
    }

    pub fn strided(stride: usize, padding: usize) -> Self {
        Self {
            stride,
            padding,
            ..Self::default()
        }
    }

    pub fn transposed(stride: usize, padding: usize, output_padding: usize) -> Self {
        Self {
            stride,
            padding,
            output_padding,
            transposed: true,
            ..Self::default()
        }
    }
}

/// Borrowed kernel for one convolution layer.
#[derive(Debug, Clone, Copy)]
pub struct ConvKernel<'a> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub weight: &'a [f32],
    pub bias: Option<&'a [f32]>,
}

impl<'a> ConvKernel<'a> {
    #[inline]
    fn tap(&self, params: &ConvParams, co: usize, ci: usize, k: usize) -> f32 {
        let idx = if params.transposed {
            (ci * self.out_channels + co) * self.kernel_size + k
        } else {
            (co * self.in_channels + ci) * self.kernel_size + k
        };
        self.weight[idx]
    }
}

pub fn conv_output_len(len: usize, kernel_size: usize, params: &ConvParams) -> Result<usize> {
    if params.stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if params.dilation == 0 || kernel_size == 0 {
        return Err(Error::InvalidArgument(
            "kernel size and dilation must be at least 1".into(),
        ));
    }
    let span = params.dilation * (kernel_size - 1) + 1;
    if params.transposed {
        let full = (len.max(1) - 1) * params.stride + span + params.output_padding;
        if len == 0 || full < 2 * params.padding {
            return Err(Error::ContractViolation(format!(
                "transposed conv of length {len} collapses under padding {}",
                params.padding
            )));
        }
        Ok(full - 2 * params.padding)
    } else {
        let padded = len + 2 * params.padding;
        if padded < span {
            return Err(Error::ContractViolation(format!(
                "input length {len} shorter than kernel span {span}"
            )));
        }
        Ok((padded - span) / params.stride + 1)
    }
}

/// Applies a (possibly transposed) 1-D convolution to a `[C_in, L]` input.
pub fn conv1d(input: &Matrix, kernel: &ConvKernel<'_>, params: ConvParams) -> Result<Matrix> {
    let (c_in, len) = input.shape();
    ensure(c_in == kernel.in_channels, || {
        format!(
            "conv1d: input has {c_in} channels, kernel expects {}",
            kernel.in_channels
        )
    })?;
    ensure(
        kernel.weight.len() == kernel.in_channels * kernel.out_channels * kernel.kernel_size,
        || "conv1d: weight length does not match kernel shape".to_string(),
    )?;
    if let Some(b) = kernel.bias {
        ensure(b.len() == kernel.out_channels, || {
            "conv1d: bias length does not match output channels".to_string()
        })?;
    }
    let out_len = conv_output_len(len, kernel.kernel_size, &params)?;
    let mut out = Matrix::zeros(kernel.out_channels, out_len);
    let mut acc = vec![0.0f64; out_len];
    for co in 0..kernel.out_channels {
        let b = kernel.bias.map_or(0.0, |b| b[co] as f64);
        acc.iter_mut().for_each(|a| *a = b);
        for ci in 0..c_in {
            let x = input.row(ci);
            for k in 0..kernel.kernel_size {
                let w = kernel.tap(&params, co, ci, k) as f64;
                if w == 0.0 {
                    continue;
                }
                if params.transposed {
                    scatter_tap(&mut acc, x, w, k * params.dilation, &params);
                } else {
                    gather_tap(&mut acc, x, w, k * params.dilation, &params);
                }
            }
        }
        for (dst, a) in out.row_mut(co).iter_mut().zip(&acc) {
            *dst = *a as f32;
        }
    }
    Ok(out)
}

/// `acc[t] += w * x[t*stride + offset - padding]` over the valid range of `t`.
#[inline]
fn gather_tap(acc: &mut [f64], x: &[f32], w: f64, offset: usize, params: &ConvParams) {
    let (s, p) = (params.stride, params.padding);
    let len = x.len();
    // first t with t*s + offset >= p
    let t_min = if offset >= p { 0 } else { (p - offset).div_ceil(s) };
    // last t with t*s + offset - p <= len - 1
    if len + p < offset + 1 {
        return;
    }
    let t_max = ((len - 1 + p - offset) / s + 1).min(acc.len());
    if t_min >= t_max {
        return;
    }
    let start = t_min * s + offset - p;
    if s == 1 {
        let n = t_max - t_min;
        for (a, &v) in acc[t_min..t_max].iter_mut().zip(&x[start..start + n]) {
            *a += w * v as f64;
        }
    } else {
        for (i, a) in acc[t_min..t_max].iter_mut().enumerate() {
            *a += w * x[start + i * s] as f64;
        }
    }
}

/// `acc[t*stride + offset - padding] += w * x[t]` for every in-range target.
#[inline]
fn scatter_tap(acc: &mut [f64], x: &[f32], w: f64, offset: usize, params: &ConvParams) {
    let (s, p) = (params.stride, params.padding);
    let out_len = acc.len();
    let t_min = if offset >= p { 0 } else { (p - offset).div_ceil(s) };
    if out_len + p < offset + 1 {
        return;
    }
    let t_max = ((out_len - 1 + p - offset) / s + 1).min(x.len());
    for t in t_min..t_max {
        acc[t * s + offset - p] += w * x[t] as f64;
    }
}

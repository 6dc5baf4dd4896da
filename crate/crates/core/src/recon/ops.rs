//! Inference kernels: dense, transposed convolution, folded batch norm and
//! pointwise activations over (H, W, C) tensors.

use crate::error::{invalid, Error, Result};
use crate::par::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub const fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major interleaved tensor: element `(y, x, ch)` lives at
/// `(y * w + x) * c + ch`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(invalid(format!(
                "tensor {shape:?} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![0.0; shape.len()] }
    }

    pub fn at(&self, y: usize, x: usize, ch: usize) -> f32 {
        self.data[(y * self.shape.w + x) * self.shape.c + ch]
    }
}

/// Transposed-convolution hyperparameters and weights.
///
/// `weights` is laid out `[in_ch][out_ch][kernel_h][kernel_w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransposedConv {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl TransposedConv {
    pub fn weight_len(&self) -> usize {
        self.in_ch * self.out_ch * self.kernel_h * self.kernel_w
    }

    #[inline]
    fn weight(&self, i: usize, o: usize, ky: usize, kx: usize) -> f32 {
        self.weights[((i * self.out_ch + o) * self.kernel_h + ky) * self.kernel_w + kx]
    }

    /// `(n - 1)·stride - 2·pad + kernel + output_pad`, or `None` if not positive.
    fn output_extent(&self, n: usize, kernel: usize) -> Option<usize> {
        let grown = (n as i64 - 1) * self.stride as i64 + kernel as i64 + self.output_pad as i64;
        let size = grown - 2 * self.pad as i64;
        (size > 0).then_some(size as usize)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.c != self.in_ch {
            return Err(Error::MalformedModel(format!(
                "transposed conv expects {} input channels, got {}",
                self.in_ch, input.c
            )));
        }
        if self.stride == 0 || self.kernel_h == 0 || self.kernel_w == 0 || self.out_ch == 0 {
            return Err(Error::MalformedModel(
                "transposed conv needs non-zero stride, kernel and channels".into(),
            ));
        }
        let h = self.output_extent(input.h, self.kernel_h);
        let w = self.output_extent(input.w, self.kernel_w);
        match (h, w) {
            (Some(h), Some(w)) => Ok(Shape::new(h, w, self.out_ch)),
            _ => Err(Error::MalformedModel(format!(
                "transposed conv output size is not positive for input {input:?}"
            ))),
        }
    }

    /// Input index along one axis feeding output `pos` through tap `k`.
    #[inline]
    fn source(&self, pos: usize, k: usize, extent: usize) -> Option<usize> {
        let t = (pos + self.pad).checked_sub(k)?;
        if t % self.stride != 0 {
            return None;
        }
        let u = t / self.stride;
        (u < extent).then_some(u)
    }
}

/// Transposed convolution, computed by gathering into each output position
/// (rows in parallel). Per output element the sum runs over kernel taps in
/// row-major order, then input channels.
pub fn transposed_conv(input: &Tensor, layer: &TransposedConv) -> Result<Tensor> {
    let in_shape = input.shape;
    let out_shape = layer.output_shape(in_shape)?;
    if layer.weights.len() != layer.weight_len() || layer.bias.len() != layer.out_ch {
        return Err(Error::MalformedModel("transposed conv blob sizes do not match".into()));
    }
    let mut out = Tensor::zeros(out_shape);
    let row_len = out_shape.w * out_shape.c;
    out.data.par_chunks_mut(row_len).enumerate().for_each(|(y, row)| {
        for x in 0..out_shape.w {
            let acc = &mut row[x * out_shape.c..(x + 1) * out_shape.c];
            acc.copy_from_slice(&layer.bias);
            for ky in 0..layer.kernel_h {
                let Some(u) = layer.source(y, ky, in_shape.h) else { continue };
                for kx in 0..layer.kernel_w {
                    let Some(v) = layer.source(x, kx, in_shape.w) else { continue };
                    let base = (u * in_shape.w + v) * in_shape.c;
                    for i in 0..layer.in_ch {
                        let a = input.data[base + i];
                        for (o, slot) in acc.iter_mut().enumerate() {
                            *slot += a * layer.weight(i, o, ky, kx);
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// `out[j] = bias[j] + Σ_i weights[j][i] · x[i]` over the flattened input.
pub fn fully_connected(input: &Tensor, outputs: usize, weights: &[f32], bias: &[f32]) -> Result<Tensor> {
    let inputs = input.data.len();
    if weights.len() != inputs * outputs || bias.len() != outputs {
        return Err(Error::MalformedModel("fully connected blob sizes do not match".into()));
    }
    let data = (0..outputs)
        .into_par_iter()
        .map(|j| {
            let row = &weights[j * inputs..(j + 1) * inputs];
            row.iter().zip(&input.data).fold(bias[j], |acc, (w, x)| acc + w * x)
        })
        .collect();
    Ok(Tensor { shape: Shape::new(1, 1, outputs), data })
}

/// Folds batch-norm statistics into a per-channel affine map:
/// `scale = gamma / sqrt(var + eps)`, `shift = beta - mean · scale`.
pub fn fold_batchnorm(
    gamma: &[f32],
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    epsilon: f32,
) -> Result<(Vec<f32>, Vec<f32>)> {
    let n = gamma.len();
    if beta.len() != n || mean.len() != n || var.len() != n {
        return Err(Error::MalformedModel("batch norm blobs differ in length".into()));
    }
    let mut scale = Vec::with_capacity(n);
    let mut shift = Vec::with_capacity(n);
    for ch in 0..n {
        let denom = var[ch] + epsilon;
        if denom.is_nan() || denom <= 0.0 {
            return Err(Error::MalformedModel(format!(
                "batch norm channel {ch}: var + epsilon = {denom} is not positive"
            )));
        }
        let s = gamma[ch] / denom.sqrt();
        scale.push(s);
        shift.push(beta[ch] - mean[ch] * s);
    }
    Ok((scale, shift))
}

pub fn scale_shift(t: &mut Tensor, scale: &[f32], shift: &[f32]) {
    let c = t.shape.c;
    debug_assert_eq!(scale.len(), c);
    t.data.par_chunks_mut(c).for_each(|px| {
        for ((v, s), b) in px.iter_mut().zip(scale).zip(shift) {
            *v = *v * s + b;
        }
    });
}

pub fn relu(t: &mut Tensor) {
    t.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

pub fn tanh(t: &mut Tensor) {
    t.data.iter_mut().for_each(|v| *v = v.tanh());
}

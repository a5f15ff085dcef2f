//! Layer primitives with their backward passes: SAME-padded strided
//! convolution, 2×2 max pooling, ReLU, bilinear upsampling and softmax
//! cross-entropy.

use super::tensor::{gemm, Mat, Scalar, Tensor};
use crate::error::{Error, Result};

/// Convolution weights laid out `k × k × c_in × c_out` (output channel fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub k: usize,
    pub s: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(k: usize, s: usize, c_in: usize, c_out: usize) -> Self {
        assert!(k >= 1 && s >= 1 && c_in >= 1 && c_out >= 1, "conv dimensions must be positive");
        Self {
            k,
            s,
            c_in,
            c_out,
            weights: vec![T::zero(); k * k * c_in * c_out],
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.k * self.k * self.c_in
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    pub fn w(&self, dy: usize, dx: usize, c: usize, o: usize) -> T {
        self.weights[((dy * self.k + dx) * self.c_in + c) * self.c_out + o]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ConvLayer<U> {
        ConvLayer {
            k: self.k,
            s: self.s,
            c_in: self.c_in,
            c_out: self.c_out,
            weights: self.weights.iter().map(|v| U::of(v.f64())).collect(),
            bias: self.bias.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    /// Padding before the first row/column; the total is `k - 1`, with the
    /// larger half at the bottom/right.
    pub fn pad_before(&self) -> usize {
        (self.k - 1) / 2
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.s), w.div_ceil(self.s))
    }
}

fn im2col<T: Scalar>(layer: &ConvLayer<T>, x: &Tensor<T>) -> Vec<T> {
    let (oh, ow) = layer.out_dims(x.h, x.w);
    let (k, s, c) = (layer.k, layer.s, x.c);
    let pad = layer.pad_before() as isize;
    let row_len = k * k * c;
    let mut col = vec![T::zero(); oh * ow * row_len];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut col[(oy * ow + ox) * row_len..][..row_len];
            for dy in 0..k {
                let iy = (s * oy + dy) as isize - pad;
                if iy < 0 || iy >= x.h as isize {
                    continue;
                }
                for dx in 0..k {
                    let ix = (s * ox + dx) as isize - pad;
                    if ix < 0 || ix >= x.w as isize {
                        continue;
                    }
                    let src = (iy as usize * x.w + ix as usize) * c;
                    row[(dy * k + dx) * c..][..c].copy_from_slice(&x.data[src..src + c]);
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(layer: &ConvLayer<T>, col: &[T], h: usize, w: usize) -> Tensor<T> {
    let (oh, ow) = layer.out_dims(h, w);
    let (k, s, c) = (layer.k, layer.s, layer.c_in);
    let pad = layer.pad_before() as isize;
    let row_len = k * k * c;
    let mut dx = Tensor::zeros(h, w, c);
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &col[(oy * ow + ox) * row_len..][..row_len];
            for ky in 0..k {
                let iy = (s * oy + ky) as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (s * ox + kx) as isize - pad;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let dst = (iy as usize * w + ix as usize) * c;
                    for (d, &g) in dx.data[dst..dst + c].iter_mut().zip(&row[(ky * k + kx) * c..][..c]) {
                        *d += g;
                    }
                }
            }
        }
    }
    dx
}

fn is_pointwise<T>(layer: &ConvLayer<T>) -> bool {
    layer.k == 1 && layer.s == 1
}

/// `y[i,j,o] = bias[o] + Σ w[δi,δj,c,o] · x_pad[s·i+δi, s·j+δj, c]`.
pub fn conv2d<T: Scalar>(layer: &ConvLayer<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.c != layer.c_in {
        return Err(Error::Shape(format!(
            "convolution expects {} input channels, got {}",
            layer.c_in, x.c
        )));
    }
    Ok(conv2d_unchecked(layer, x))
}

pub(crate) fn conv2d_unchecked<T: Scalar>(layer: &ConvLayer<T>, x: &Tensor<T>) -> Tensor<T> {
    let (oh, ow) = layer.out_dims(x.h, x.w);
    let p = oh * ow;
    let kk = layer.fan_in();
    let mut y = Tensor::zeros(oh, ow, layer.c_out);
    for px in y.data.chunks_exact_mut(layer.c_out) {
        px.copy_from_slice(&layer.bias);
    }
    let w = Mat::new(&layer.weights, kk, layer.c_out);
    if is_pointwise(layer) {
        gemm(Mat::new(&x.data, p, kk), w, T::one(), &mut y.data);
    } else {
        let col = im2col(layer, x);
        gemm(Mat::new(&col, p, kk), w, T::one(), &mut y.data);
    }
    y
}

/// Parameter gradients of one convolution, shaped like the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvGrad<T> {
    pub fn zeros_like(layer: &ConvLayer<T>) -> Self {
        Self {
            weights: vec![T::zero(); layer.weights.len()],
            bias: vec![T::zero(); layer.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &ConvGrad<T>) {
        for (a, &b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, &b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, f: T) {
        for v in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            *v = *v * f;
        }
    }
}

/// Accumulates parameter gradients into `grad` and returns the input
/// gradient when `want_input` is set.
pub fn conv2d_backward<T: Scalar>(
    layer: &ConvLayer<T>,
    x: &Tensor<T>,
    dy: &Tensor<T>,
    grad: &mut ConvGrad<T>,
    want_input: bool,
) -> Option<Tensor<T>> {
    let p = dy.h * dy.w;
    let kk = layer.fan_in();
    let c_out = layer.c_out;
    for px in dy.data.chunks_exact(c_out) {
        for (b, &g) in grad.bias.iter_mut().zip(px) {
            *b += g;
        }
    }
    let dyv = Mat::new(&dy.data, p, c_out);
    let wt = Mat::t(&layer.weights, c_out, kk);
    if is_pointwise(layer) {
        gemm(Mat::t(&x.data, kk, p), dyv, T::one(), &mut grad.weights);
        want_input.then(|| {
            let mut dx = Tensor::zeros(x.h, x.w, x.c);
            gemm(dyv, wt, T::zero(), &mut dx.data);
            dx
        })
    } else {
        let col = im2col(layer, x);
        gemm(Mat::t(&col, kk, p), dyv, T::one(), &mut grad.weights);
        want_input.then(|| {
            let mut dcol = col;
            gemm(dyv, wt, T::zero(), &mut dcol);
            col2im(layer, &dcol, x.h, x.w)
        })
    }
}

pub fn relu_in_place<T: Scalar>(x: &mut Tensor<T>) {
    for v in &mut x.data {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries where the ReLU output was not positive.
pub fn relu_backward<T: Scalar>(out: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &o) in grad.data.iter_mut().zip(&out.data) {
        if !(o > T::zero()) {
            *g = T::zero();
        }
    }
}

/// 2×2 max pooling with stride 2; returns the flat input index of each
/// maximum (first in scan order on ties). Input sides must be even.
pub fn maxpool2<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    assert!(x.h.is_multiple_of(2) && x.w.is_multiple_of(2), "max pooling needs even sides");
    let (oh, ow, c) = (x.h / 2, x.w / 2, x.c);
    let mut y = Tensor::zeros(oh, ow, c);
    let mut arg = vec![0u32; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best_i = ((2 * oy) * x.w + 2 * ox) * c + ch;
                let mut best = x.data[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ((2 * oy + dy) * x.w + 2 * ox + dx) * c + ch;
                    if x.data[i] > best {
                        best = x.data[i];
                        best_i = i;
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                y.data[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    (y, arg)
}

pub fn maxpool2_backward<T: Scalar>(dy: &Tensor<T>, argmax: &[u32], in_shape: (usize, usize, usize)) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape.0, in_shape.1, in_shape.2);
    for (&g, &i) in dy.data.iter().zip(argmax) {
        dx.data[i as usize] += g;
    }
    dx
}

/// Source taps `(i0, i1, weight of i1)` for half-pixel-centered bilinear
/// resampling of `n` cells by an integer factor, clamped at the borders.
fn bilinear_taps(n: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..n * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn upsample_bilinear<T: Scalar>(x: &Tensor<T>, factor: usize) -> Tensor<T> {
    let ty = bilinear_taps(x.h, factor);
    let tx = bilinear_taps(x.w, factor);
    let c = x.c;
    let mut y = Tensor::zeros(x.h * factor, x.w * factor, c);
    for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
        let (wy0, wy1) = (T::of(1.0 - wy), T::of(wy));
        for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
            let (wx0, wx1) = (T::of(1.0 - wx), T::of(wx));
            let out = &mut y.data[(oy * y.w + ox) * c..][..c];
            for (ch, o) in out.iter_mut().enumerate() {
                *o = wy0 * (wx0 * x.at(y0, x0, ch) + wx1 * x.at(y0, x1, ch))
                    + wy1 * (wx0 * x.at(y1, x0, ch) + wx1 * x.at(y1, x1, ch));
            }
        }
    }
    y
}

pub fn upsample_bilinear_backward<T: Scalar>(dy: &Tensor<T>, factor: usize, in_h: usize, in_w: usize) -> Tensor<T> {
    let ty = bilinear_taps(in_h, factor);
    let tx = bilinear_taps(in_w, factor);
    let c = dy.c;
    let mut dx = Tensor::zeros(in_h, in_w, c);
    for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
        let (wy0, wy1) = (T::of(1.0 - wy), T::of(wy));
        for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
            let (wx0, wx1) = (T::of(1.0 - wx), T::of(wx));
            let g = &dy.data[(oy * dy.w + ox) * c..][..c];
            for (ch, &gv) in g.iter().enumerate() {
                dx.data[(y0 * in_w + x0) * c + ch] += wy0 * wx0 * gv;
                dx.data[(y0 * in_w + x1) * c + ch] += wy0 * wx1 * gv;
                dx.data[(y1 * in_w + x0) * c + ch] += wy1 * wx0 * gv;
                dx.data[(y1 * in_w + x1) * c + ch] += wy1 * wx1 * gv;
            }
        }
    }
    dx
}

/// Mean per-pixel cross-entropy of softmax(logits) against `labels`, with
/// optional per-class weights, and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[u8],
    class_weights: Option<&[f64]>,
) -> (f64, Tensor<T>) {
    let n = logits.c;
    let pixels = logits.h * logits.w;
    assert_eq!(labels.len(), pixels, "one label per pixel");
    let inv = 1.0 / pixels as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(logits.h, logits.w, n);
    let mut probs = vec![0.0f64; n];
    for ((z, g), &y) in logits.data.chunks_exact(n).zip(grad.data.chunks_exact_mut(n)).zip(labels) {
        let max = z.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (p, v) in probs.iter_mut().zip(z) {
            *p = (v.f64() - max).exp();
            sum += *p;
        }
        let wy = class_weights.map_or(1.0, |w| w[y as usize]);
        loss += wy * (sum.ln() - (z[y as usize].f64() - max));
        for (k, (gk, p)) in g.iter_mut().zip(&probs).enumerate() {
            let target = if k == y as usize { 1.0 } else { 0.0 };
            *gk = T::of(wy * (p / sum - target) * inv);
        }
    }
    (loss * inv, grad)
}

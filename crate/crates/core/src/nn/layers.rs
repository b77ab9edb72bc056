//! Layers with hand-written backward passes.
//!
//! Layers only hold shapes and parameter ranges; weights live in the flat
//! parameter buffer passed to every call. Backward passes accumulate into a
//! gradient buffer of the same layout.

use std::ops::Range;

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use super::params::{Init, ParamGroup, ParamLayout};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Dense 2-D convolution with square kernel, zero padding and bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    weight: Range<usize>,
    bias: Range<usize>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        layout: &mut ParamLayout,
        name: &str,
        group: ParamGroup,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = layout.alloc(
            format!("{name}.weight"),
            group,
            out_channels * fan_in,
            Init::He { fan_in },
        );
        let bias = layout.alloc(format!("{name}.bias"), group, out_channels, Init::Zero);
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight,
            bias,
        }
    }

    /// 1×1 projection.
    pub fn pointwise(layout: &mut ParamLayout, name: &str, group: ParamGroup, cin: usize, cout: usize) -> Self {
        Self::new(layout, name, group, cin, cout, 1, 1, 0)
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    pub fn weight_range(&self) -> Range<usize> {
        self.weight.clone()
    }

    pub fn bias_range(&self) -> Range<usize> {
        self.bias.clone()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    /// Output columns `lo..hi` whose tap `kx` lands inside a row of width `w`.
    fn valid_columns(&self, kx: usize, w: usize, ow: usize) -> (usize, usize) {
        let lo = self.padding.saturating_sub(kx).div_ceil(self.stride);
        let hi = (w + self.padding).saturating_sub(kx).div_ceil(self.stride).min(ow);
        (lo.min(hi), hi)
    }

    /// Unfold `x` into `[cin·k·k × oh·ow]`.
    fn im2col<T: Scalar>(&self, x: &Tensor<T>) -> Vec<T> {
        let (c, h, w) = x.shape();
        let (oh, ow) = self.output_size(h, w);
        let k = self.kernel;
        let n = oh * ow;
        let mut cols = vec![T::zero(); c * k * k * n];
        for ch in 0..c {
            let src = x.plane(ch);
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ch * k + ky) * k + kx) * n..][..n];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                        let drow = &mut row[oy * ow..(oy + 1) * ow];
                        let (lo, hi) = self.valid_columns(kx, w, ow);
                        let start = lo * self.stride + kx - self.padding;
                        for (d, &v) in drow[lo..hi].iter_mut().zip(srow[start..].iter().step_by(self.stride)) {
                            *d = v;
                        }
                    }
                }
            }
        }
        cols
    }

    /// Fold column gradients back onto the input grid.
    fn col2im<T: Scalar>(&self, cols: &[T], c: usize, h: usize, w: usize) -> Tensor<T> {
        let (oh, ow) = self.output_size(h, w);
        let k = self.kernel;
        let n = oh * ow;
        let mut dx = Tensor::zeros(c, h, w);
        for ch in 0..c {
            let dst = dx.plane_mut(ch);
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ch * k + ky) * k + kx) * n..][..n];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                        let (lo, hi) = self.valid_columns(kx, w, ow);
                        let start = lo * self.stride + kx - self.padding;
                        for (d, &v) in drow[start..].iter_mut().step_by(self.stride).zip(&row[oy * ow + lo..oy * ow + hi]) {
                            *d += v;
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Tensor<T> {
        debug_assert_eq!(x.channels(), self.in_channels);
        let (oh, ow) = self.output_size(x.height(), x.width());
        let n = oh * ow;
        let bias = &params[self.bias.clone()];
        let mut out = Vec::with_capacity(self.out_channels * n);
        for &b in bias {
            out.extend(std::iter::repeat_n(b, n));
        }
        let kk = self.in_channels * self.kernel * self.kernel;
        let w = &params[self.weight.clone()];
        if self.is_pointwise() {
            gemm_nn(self.out_channels, n, kk, w, x.as_slice(), &mut out);
        } else {
            let cols = self.im2col(x);
            gemm_nn(self.out_channels, n, kk, w, &cols, &mut out);
        }
        Tensor::from_vec(self.out_channels, oh, ow, out).expect("conv output shape")
    }

    /// Accumulate weight/bias gradients; return the input gradient when asked.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grads: &mut [T],
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let n = dy.plane_len();
        let kk = self.in_channels * self.kernel * self.kernel;
        for (o, gb) in grads[self.bias.clone()].iter_mut().enumerate() {
            *gb += dy.plane(o).iter().copied().sum::<T>();
        }
        let owned;
        let cols: &[T] = if self.is_pointwise() {
            x.as_slice()
        } else {
            owned = self.im2col(x);
            &owned
        };
        gemm_nt(self.out_channels, kk, n, dy.as_slice(), cols, &mut grads[self.weight.clone()]);
        if !need_dx {
            return None;
        }
        let w = &params[self.weight.clone()];
        let mut dcols = vec![T::zero(); kk * n];
        gemm_tn(kk, n, self.out_channels, w, dy.as_slice(), &mut dcols);
        if self.is_pointwise() {
            Some(Tensor::from_vec(self.in_channels, x.height(), x.width(), dcols).expect("pointwise dx"))
        } else {
            Some(self.col2im(&dcols, x.channels(), x.height(), x.width()))
        }
    }
}

/// 3×3 depthwise convolution, stride 1, zero padding 1.
#[derive(Debug, Clone)]
pub struct DepthwiseConv3 {
    pub channels: usize,
    weight: Range<usize>,
    bias: Range<usize>,
}

impl DepthwiseConv3 {
    pub fn new(layout: &mut ParamLayout, name: &str, group: ParamGroup, channels: usize) -> Self {
        let weight = layout.alloc(format!("{name}.weight"), group, channels * 9, Init::He { fan_in: 9 });
        let bias = layout.alloc(format!("{name}.bias"), group, channels, Init::Zero);
        DepthwiseConv3 {
            channels,
            weight,
            bias,
        }
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Tensor<T> {
        let (c, h, w) = x.shape();
        let wt = &params[self.weight.clone()];
        let bias = &params[self.bias.clone()];
        let mut out = Tensor::zeros(c, h, w);
        for ch in 0..c {
            let k = &wt[ch * 9..ch * 9 + 9];
            let src = x.plane(ch);
            let dst = out.plane_mut(ch);
            dst.iter_mut().for_each(|v| *v = bias[ch]);
            for ky in 0..3 {
                for kx in 0..3 {
                    let kv = k[ky * 3 + kx];
                    // output (y, x) reads input (y + ky − 1, x + kx − 1)
                    let y0 = 1usize.saturating_sub(ky);
                    let y1 = (h + 1).saturating_sub(ky).min(h);
                    let x0 = 1usize.saturating_sub(kx);
                    let x1 = (w + 1).saturating_sub(kx).min(w);
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let drow = &mut dst[y * w + x0..y * w + x1];
                        let srow = &src[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                        for (d, &v) in drow.iter_mut().zip(srow) {
                            *d += kv * v;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn backward<T: Scalar>(&self, params: &[T], x: &Tensor<T>, dy: &Tensor<T>, grads: &mut [T]) -> Tensor<T> {
        let (c, h, w) = x.shape();
        let wt = &params[self.weight.clone()];
        let mut dx = Tensor::zeros(c, h, w);
        let wr = self.weight.clone();
        let br = self.bias.clone();
        for ch in 0..c {
            let g = dy.plane(ch);
            grads[br.start + ch] += g.iter().copied().sum::<T>();
            let src = x.plane(ch);
            let dst = dx.plane_mut(ch);
            for ky in 0..3 {
                for kx in 0..3 {
                    let kv = wt[ch * 9 + ky * 3 + kx];
                    let y0 = 1usize.saturating_sub(ky);
                    let y1 = (h + 1).saturating_sub(ky).min(h);
                    let x0 = 1usize.saturating_sub(kx);
                    let x1 = (w + 1).saturating_sub(kx).min(w);
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let grow = &g[y * w + x0..y * w + x1];
                        let shifted = iy * w + x0 + kx - 1..iy * w + x1 + kx - 1;
                        for (&gv, &v) in grow.iter().zip(&src[shifted.clone()]) {
                            acc += gv * v;
                        }
                        for (d, &gv) in dst[shifted].iter_mut().zip(grow) {
                            *d += kv * gv;
                        }
                    }
                    grads[wr.start + ch * 9 + ky * 3 + kx] += acc;
                }
            }
        }
        dx
    }
}

/// Fully connected layer, `y = W x + b` with `W` stored `[out × in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    weight: Range<usize>,
    bias: Range<usize>,
}

impl Linear {
    pub fn new(layout: &mut ParamLayout, name: &str, group: ParamGroup, inputs: usize, outputs: usize) -> Self {
        let weight = layout.alloc(
            format!("{name}.weight"),
            group,
            inputs * outputs,
            Init::He { fan_in: inputs },
        );
        let bias = layout.alloc(format!("{name}.bias"), group, outputs, Init::Zero);
        Linear {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    pub fn bias_range(&self) -> Range<usize> {
        self.bias.clone()
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &[T]) -> Vec<T> {
        let mut out = params[self.bias.clone()].to_vec();
        gemm_nn(self.outputs, 1, self.inputs, &params[self.weight.clone()], x, &mut out);
        out
    }

    pub fn backward<T: Scalar>(&self, params: &[T], x: &[T], dy: &[T], grads: &mut [T]) -> Vec<T> {
        for (g, &d) in grads[self.bias.clone()].iter_mut().zip(dy) {
            *g += d;
        }
        gemm_nn(self.outputs, self.inputs, 1, dy, x, &mut grads[self.weight.clone()]);
        let mut dx = vec![T::zero(); self.inputs];
        gemm_tn(self.inputs, 1, self.outputs, &params[self.weight.clone()], dy, &mut dx);
        dx
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut Tensor<T>) {
    for v in x.as_mut_slice() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zero `grad` where the ReLU output was not positive.
pub fn relu_backward_inplace<T: Scalar>(output: &[T], grad: &mut [T]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// 2×2 average pooling, stride 2 (input sides must be even).
pub fn avg_pool2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let q = T::lit(0.25);
    Tensor::from_fn(c, oh, ow, |ch, y, xx| {
        q * (x.get(ch, 2 * y, 2 * xx)
            + x.get(ch, 2 * y, 2 * xx + 1)
            + x.get(ch, 2 * y + 1, 2 * xx)
            + x.get(ch, 2 * y + 1, 2 * xx + 1))
    })
}

pub fn avg_pool2_backward<T: Scalar>(dy: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let q = T::lit(0.25);
    Tensor::from_fn(dy.channels(), h, w, |c, y, x| q * dy.get(c, y / 2, x / 2))
}

/// Per-channel spatial mean.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Vec<T> {
    let n = T::from_usize_lossy(x.plane_len());
    (0..x.channels())
        .map(|c| x.plane(c).iter().copied().sum::<T>() / n)
        .collect()
}

pub fn global_avg_pool_backward<T: Scalar>(dy: &[T], c: usize, h: usize, w: usize) -> Tensor<T> {
    let n = T::from_usize_lossy(h * w);
    Tensor::from_fn(c, h, w, |ch, _, _| dy[ch] / n)
}

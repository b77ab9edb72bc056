//! Spatial attention on the deepest tap, with optional multi-scale
//! aggregation through size-align blocks.

use crate::error::{Error, Result};
use crate::nn::layers::{avg_pool2, avg_pool2_backward, relu_backward_inplace, relu_inplace, Conv2d};
use crate::nn::params::{ParamGroup, ParamLayout};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Features after attention, at the deepest tap's resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature<T> {
    pub attended: Tensor<T>,
}

fn check_mask<T: Scalar>(parts: &[&Tensor<T>], mask: &Tensor<T>) -> Result<()> {
    if mask.channels() != 1 {
        return Err(Error::Shape(format!("attention mask has {} channels", mask.channels())));
    }
    for p in parts {
        if (p.height(), p.width()) != (mask.height(), mask.width()) {
            return Err(Error::Shape(format!(
                "feature {}x{} vs mask {}x{}",
                p.height(),
                p.width(),
                mask.height(),
                mask.width()
            )));
        }
    }
    Ok(())
}

/// Concatenate `parts` along channels and scale every channel by `mask`.
pub fn apply_attention<T: Scalar>(parts: &[&Tensor<T>], mask: &Tensor<T>) -> Result<FusedFeature<T>> {
    check_mask(parts, mask)?;
    let mut attended = Tensor::concat_channels(parts)?;
    let m = mask.as_slice();
    for c in 0..attended.channels() {
        for (v, &w) in attended.plane_mut(c).iter_mut().zip(m) {
            *v *= w;
        }
    }
    Ok(FusedFeature { attended })
}

/// `concat(sem_feat, noise_feat) ⊙ mask`.
pub fn attention_fuse<T: Scalar>(sem_feat: &Tensor<T>, noise_feat: &Tensor<T>, mask: &Tensor<T>) -> Result<FusedFeature<T>> {
    apply_attention(&[sem_feat, noise_feat], mask)
}

/// Gradients of [`apply_attention`] w.r.t. the concatenated input and the mask.
pub(crate) fn attention_backward<T: Scalar>(pre: &Tensor<T>, mask: &Tensor<T>, d_att: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let m = mask.as_slice();
    let mut d_pre = d_att.clone();
    let mut d_mask = Tensor::zeros(1, mask.height(), mask.width());
    for c in 0..d_pre.channels() {
        let x = pre.plane(c);
        let dm = d_mask.plane_mut(0);
        for (((g, &w), &xv), dmv) in d_pre.plane_mut(c).iter_mut().zip(m).zip(x).zip(dm.iter_mut()) {
            *dmv += *g * xv;
            *g *= w;
        }
    }
    (d_pre, d_mask)
}

/// `conv3×3 → ReLU → 2×2 average pool`; the conv is stride 2 when the block
/// must shrink by 4 and stride 1 when by 2.
#[derive(Debug, Clone)]
pub struct SizeAlignBlock {
    conv: Conv2d,
}

#[derive(Debug, Clone)]
pub struct SabTrace<T> {
    hidden: Tensor<T>,
    pub output: Tensor<T>,
}

impl SizeAlignBlock {
    pub fn new(layout: &mut ParamLayout, name: &str, group: ParamGroup, channels: usize, factor: usize) -> Result<Self> {
        let stride = match factor {
            4 => 2,
            2 => 1,
            f => return Err(Error::Config(format!("size-align factor {f} unsupported"))),
        };
        Ok(SizeAlignBlock {
            conv: Conv2d::new(layout, name, group, channels, channels, 3, stride, 1),
        })
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> SabTrace<T> {
        let mut hidden = self.conv.forward(params, x);
        relu_inplace(&mut hidden);
        let output = avg_pool2(&hidden);
        SabTrace { hidden, output }
    }

    pub fn backward<T: Scalar>(&self, params: &[T], x: &Tensor<T>, trace: &SabTrace<T>, dy: &Tensor<T>, grads: &mut [T]) -> Tensor<T> {
        let mut dh = avg_pool2_backward(dy, trace.hidden.height(), trace.hidden.width());
        relu_backward_inplace(trace.hidden.as_slice(), dh.as_mut_slice());
        self.conv.backward(params, x, &dh, grads, true).expect("dx requested")
    }
}

/// Size-align blocks for taps 1 and 2 of both streams.
#[derive(Debug, Clone)]
pub struct Aggregator {
    semantic: [SizeAlignBlock; 2],
    noise: [SizeAlignBlock; 2],
}

#[derive(Debug, Clone)]
pub struct AggregatorTrace<T> {
    pub semantic: [SabTrace<T>; 2],
    pub noise: [SabTrace<T>; 2],
}

impl Aggregator {
    pub fn new(layout: &mut ParamLayout, channels: usize) -> Result<Self> {
        let mut make = |stream: &str, group| -> Result<[SizeAlignBlock; 2]> {
            Ok([
                SizeAlignBlock::new(layout, &format!("align.{stream}.1"), group, channels, 4)?,
                SizeAlignBlock::new(layout, &format!("align.{stream}.2"), group, channels, 2)?,
            ])
        };
        let semantic = make("semantic", ParamGroup::SemanticAlign)?;
        let noise = make("noise", ParamGroup::NoiseAlign)?;
        Ok(Aggregator { semantic, noise })
    }

    /// `[SAB₁(f₁ˢ) ⊕ SAB₂(f₂ˢ) ⊕ f₃ˢ ⊕ SAB₁(f₁ⁿ) ⊕ SAB₂(f₂ⁿ) ⊕ f₃ⁿ] ⊙ mask`.
    pub fn forward<T: Scalar>(
        &self,
        params: &[T],
        semantic: [&Tensor<T>; 3],
        noise: [&Tensor<T>; 3],
        mask: &Tensor<T>,
    ) -> Result<(FusedFeature<T>, AggregatorTrace<T>)> {
        let s = [
            self.semantic[0].forward(params, semantic[0]),
            self.semantic[1].forward(params, semantic[1]),
        ];
        let n = [
            self.noise[0].forward(params, noise[0]),
            self.noise[1].forward(params, noise[1]),
        ];
        let parts = [&s[0].output, &s[1].output, semantic[2], &n[0].output, &n[1].output, noise[2]];
        let fused = apply_attention(&parts, mask)?;
        Ok((fused, AggregatorTrace { semantic: s, noise: n }))
    }

    /// Map gradients of the six concatenated parts back to tap features.
    /// Returns `(d semantic f₁, f₂), (d noise f₁, f₂)`.
    pub(crate) fn backward<T: Scalar>(
        &self,
        params: &[T],
        semantic: [&Tensor<T>; 2],
        noise: [&Tensor<T>; 2],
        trace: &AggregatorTrace<T>,
        d_parts: &[Tensor<T>],
        grads: &mut [T],
    ) -> ([Tensor<T>; 2], [Tensor<T>; 2]) {
        let ds = [
            self.semantic[0].backward(params, semantic[0], &trace.semantic[0], &d_parts[0], grads),
            self.semantic[1].backward(params, semantic[1], &trace.semantic[1], &d_parts[1], grads),
        ];
        let dn = [
            self.noise[0].backward(params, noise[0], &trace.noise[0], &d_parts[3], grads),
            self.noise[1].backward(params, noise[1], &trace.noise[1], &d_parts[4], grads),
        ];
        (ds, dn)
    }
}

/// Convenience wrapper matching the aggregation contract.
pub fn aggregate_features<T: Scalar>(
    aggregator: &Aggregator,
    params: &[T],
    semantic: [&Tensor<T>; 3],
    noise: [&Tensor<T>; 3],
    mask3: &Tensor<T>,
) -> Result<FusedFeature<T>> {
    aggregator.forward(params, semantic, noise, mask3).map(|(f, _)| f)
}

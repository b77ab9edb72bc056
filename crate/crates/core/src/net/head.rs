//! Per-tap prediction heads built from depthwise-separable blocks.

use crate::nn::layers::{relu_backward_inplace, relu_inplace, sigmoid, Conv2d, DepthwiseConv3};
use crate::nn::params::{ParamGroup, ParamLayout};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// One sigmoid channel.
    Semantic,
    /// Three linear channels.
    Noise,
}

/// Feature and map produced by one head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput<T> {
    pub feature: Tensor<T>,
    pub map: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct HeadTrace<T> {
    a: Tensor<T>,
    b: Tensor<T>,
    c: Tensor<T>,
    pub output: HeadOutput<T>,
}

/// `dw3 → pw → ReLU → dw3 → pw → ReLU` gives the feature; a 1×1 projection
/// gives the map.
#[derive(Debug, Clone)]
pub struct Head {
    kind: HeadKind,
    dw1: DepthwiseConv3,
    pw1: Conv2d,
    dw2: DepthwiseConv3,
    pw2: Conv2d,
    proj: Conv2d,
}

impl Head {
    pub fn new(layout: &mut ParamLayout, name: &str, kind: HeadKind, in_channels: usize, feature_channels: usize) -> Self {
        let group = match kind {
            HeadKind::Semantic => ParamGroup::SemanticHead,
            HeadKind::Noise => ParamGroup::NoiseHead,
        };
        let out = match kind {
            HeadKind::Semantic => 1,
            HeadKind::Noise => 3,
        };
        Head {
            kind,
            dw1: DepthwiseConv3::new(layout, &format!("{name}.dw1"), group, in_channels),
            pw1: Conv2d::pointwise(layout, &format!("{name}.pw1"), group, in_channels, feature_channels),
            dw2: DepthwiseConv3::new(layout, &format!("{name}.dw2"), group, feature_channels),
            pw2: Conv2d::pointwise(layout, &format!("{name}.pw2"), group, feature_channels, feature_channels),
            proj: Conv2d::pointwise(layout, &format!("{name}.proj"), group, feature_channels, out),
        }
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> HeadTrace<T> {
        let a = self.dw1.forward(params, x);
        let mut b = self.pw1.forward(params, &a);
        relu_inplace(&mut b);
        let c = self.dw2.forward(params, &b);
        let mut feature = self.pw2.forward(params, &c);
        relu_inplace(&mut feature);
        let mut map = self.proj.forward(params, &feature);
        if self.kind == HeadKind::Semantic {
            map.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        HeadTrace {
            a,
            b,
            c,
            output: HeadOutput { feature, map },
        }
    }

    /// `d_map` is the gradient w.r.t. the emitted map (post-sigmoid for
    /// semantic heads). Returns the gradient w.r.t. the head input.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        x: &Tensor<T>,
        trace: &HeadTrace<T>,
        d_feature: Option<&Tensor<T>>,
        d_map: &Tensor<T>,
        grads: &mut [T],
    ) -> Tensor<T> {
        let out = &trace.output;
        let d_pre = match self.kind {
            HeadKind::Semantic => {
                let mut d = d_map.clone();
                for (g, &p) in d.as_mut_slice().iter_mut().zip(out.map.as_slice()) {
                    *g *= p * (T::one() - p);
                }
                d
            }
            HeadKind::Noise => d_map.clone(),
        };
        let mut d_feat = self
            .proj
            .backward(params, &out.feature, &d_pre, grads, true)
            .expect("dx requested");
        if let Some(df) = d_feature {
            d_feat.add_assign(df);
        }
        relu_backward_inplace(out.feature.as_slice(), d_feat.as_mut_slice());
        let d_c = self.pw2.backward(params, &trace.c, &d_feat, grads, true).expect("dx requested");
        let mut d_b = self.dw2.backward(params, &trace.b, &d_c, grads);
        relu_backward_inplace(trace.b.as_slice(), d_b.as_mut_slice());
        let d_a = self.pw1.backward(params, &trace.a, &d_b, grads, true).expect("dx requested");
        self.dw1.backward(params, x, &d_a, grads)
    }
}

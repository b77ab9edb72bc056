//! Feature extractors exposing three taps at increasing strides.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{relu_backward_inplace, relu_inplace, Conv2d};
use crate::nn::params::{ParamGroup, ParamLayout};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Borrowed view of the three feature taps.
#[derive(Debug, Clone, Copy)]
pub struct BackboneTaps<'a, T> {
    pub f1: &'a Tensor<T>,
    pub f2: &'a Tensor<T>,
    pub f3: &'a Tensor<T>,
}

/// Every intermediate activation of one forward pass.
#[derive(Debug, Clone)]
pub struct BackboneTrace<T> {
    pub input: Tensor<T>,
    pub activations: Vec<Tensor<T>>,
    /// Indices into `activations` that serve as f₁, f₂, f₃.
    pub tap_index: [usize; 3],
}

impl<T> BackboneTrace<T> {
    pub fn taps(&self) -> BackboneTaps<'_, T> {
        BackboneTaps {
            f1: &self.activations[self.tap_index[0]],
            f2: &self.activations[self.tap_index[1]],
            f3: &self.activations[self.tap_index[2]],
        }
    }
}

/// Adapter contract for anything that can supply (f₁, f₂, f₃).
pub trait Backbone: Send + Sync {
    fn tap_channels(&self) -> [usize; 3];

    /// Spatial strides of the taps relative to the input.
    fn tap_strides(&self) -> [usize; 3];

    fn forward<T: Scalar>(&self, params: &[T], input: &Tensor<T>) -> BackboneTrace<T>;

    /// Accumulate parameter gradients given gradients at the three taps.
    fn backward<T: Scalar>(&self, params: &[T], trace: &BackboneTrace<T>, d_taps: [Tensor<T>; 3], grads: &mut [T]);
}

/// Named widths for [`ConvBackbone`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    /// Stem 16, taps 32/64/128.
    Reference,
    /// Stem 4, taps 4/6/8; for gradient checks.
    Tiny,
}

impl BackboneKind {
    pub fn widths(self) -> (usize, [usize; 3]) {
        match self {
            BackboneKind::Reference => (16, [32, 64, 128]),
            BackboneKind::Tiny => (4, [4, 6, 8]),
        }
    }
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(BackboneKind::Reference),
            "tiny" => Ok(BackboneKind::Tiny),
            other => Err(Error::Config(format!("unknown backbone '{other}'"))),
        }
    }
}

impl std::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackboneKind::Reference => "reference",
            BackboneKind::Tiny => "tiny",
        })
    }
}

/// Plain conv/ReLU stack: a stride-2 stem, then three stages of
/// (stride-2 conv, stride-1 conv). Taps sit at the end of each stage, at
/// strides 4, 8 and 16.
#[derive(Debug, Clone)]
pub struct ConvBackbone {
    layers: Vec<Conv2d>,
    channels: [usize; 3],
}

impl ConvBackbone {
    pub fn new(layout: &mut ParamLayout, in_channels: usize, kind: BackboneKind) -> Self {
        let (stem, channels) = kind.widths();
        let g = ParamGroup::Backbone;
        let mut layers = vec![Conv2d::new(layout, "backbone.stem", g, in_channels, stem, 3, 2, 1)];
        let mut cin = stem;
        for (s, &c) in channels.iter().enumerate() {
            layers.push(Conv2d::new(layout, &format!("backbone.stage{}.down", s + 1), g, cin, c, 3, 2, 1));
            layers.push(Conv2d::new(layout, &format!("backbone.stage{}.conv", s + 1), g, c, c, 3, 1, 1));
            cin = c;
        }
        ConvBackbone { layers, channels }
    }
}

const TAPS: [usize; 3] = [2, 4, 6];

impl Backbone for ConvBackbone {
    fn tap_channels(&self) -> [usize; 3] {
        self.channels
    }

    fn tap_strides(&self) -> [usize; 3] {
        [4, 8, 16]
    }

    fn forward<T: Scalar>(&self, params: &[T], input: &Tensor<T>) -> BackboneTrace<T> {
        let mut activations: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = if i == 0 { input } else { &activations[i - 1] };
            let mut y = layer.forward(params, x);
            relu_inplace(&mut y);
            activations.push(y);
        }
        BackboneTrace {
            input: input.clone(),
            activations,
            tap_index: TAPS,
        }
    }

    fn backward<T: Scalar>(&self, params: &[T], trace: &BackboneTrace<T>, d_taps: [Tensor<T>; 3], grads: &mut [T]) {
        let mut d_taps = d_taps.map(Some);
        let mut carry: Option<Tensor<T>> = None;
        for i in (0..self.layers.len()).rev() {
            let tap_grad = TAPS.iter().position(|&t| t == i).and_then(|j| d_taps[j].take());
            let mut g = match (carry.take(), tap_grad) {
                (Some(mut c), Some(t)) => {
                    c.add_assign(&t);
                    c
                }
                (Some(c), None) => c,
                (None, Some(t)) => t,
                (None, None) => continue,
            };
            relu_backward_inplace(trace.activations[i].as_slice(), g.as_mut_slice());
            let x = if i == 0 { &trace.input } else { &trace.activations[i - 1] };
            carry = self.layers[i].backward(params, x, &g, grads, i > 0);
        }
    }
}

//! The two-stream multi-scale model.
//!
//! A backbone supplies three taps. Each tap feeds a semantic head (feature
//! plus sigmoid map) and a noise head (feature plus 3-channel noise map).
//! The deepest semantic map gates the concatenated deepest features (or,
//! with aggregation on, size-aligned features from all taps) before a small
//! classifier.

pub mod backbone;
pub mod checkpoint;
pub mod classifier;
pub mod fusion;
pub mod head;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use backbone::{Backbone, BackboneKind, BackboneTaps, BackboneTrace, ConvBackbone};
pub use classifier::{Classifier, ClassifierTrace};
pub use fusion::{aggregate_features, apply_attention, attention_fuse, Aggregator, FusedFeature, SizeAlignBlock};
pub use head::{Head, HeadKind, HeadOutput, HeadTrace};

use crate::error::{Error, Result};
use crate::image_io;
use crate::maps::{NoiseMapSet, SegMapSet};
use crate::nn::params::ParamLayout;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use fusion::{attention_backward, AggregatorTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// 2 (real/fake) or 5 (real plus four manipulation methods).
    pub num_classes: usize,
    /// Feature width C of every head.
    pub head_channels: usize,
    /// Size-align and concatenate all three taps before attention.
    pub aggregation: bool,
    pub backbone: BackboneKind,
    /// Side length images are resized to before entering the model.
    pub input_size: usize,
    pub classifier_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_classes: 2,
            head_channels: 64,
            aggregation: false,
            backbone: BackboneKind::Reference,
            input_size: 64,
            classifier_hidden: 128,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by gradient checks.
    pub fn tiny(input_size: usize) -> Self {
        ModelConfig {
            num_classes: 2,
            head_channels: 3,
            aggregation: false,
            backbone: BackboneKind::Tiny,
            input_size,
            classifier_hidden: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes != 2 && self.num_classes != 5 {
            return Err(Error::Config(format!("num_classes must be 2 or 5, got {}", self.num_classes)));
        }
        if self.head_channels == 0 || self.classifier_hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.input_size == 0 || self.input_size % 16 != 0 {
            return Err(Error::Config(format!(
                "input_size {} must be a positive multiple of 16",
                self.input_size
            )));
        }
        Ok(())
    }
}

/// Map an 8-bit-range image to `[-1, 1]`.
pub fn normalize_input<T: Scalar>(image: &Tensor<T>) -> Tensor<T> {
    let s = T::lit(127.5);
    image.map(|v| v / s - T::one())
}

/// Probability that a sample is manipulated: `P(fake)` for two classes,
/// `1 − P(real)` for five.
pub fn fake_score<T: Scalar>(probs: &[T]) -> T {
    if probs.len() == 2 {
        probs[1]
    } else {
        T::one() - probs[0]
    }
}

/// Everything needed to run the backward pass.
#[derive(Debug, Clone)]
pub struct ModelTrace<T> {
    pub backbone: BackboneTrace<T>,
    pub semantic: [HeadTrace<T>; 3],
    pub noise: [HeadTrace<T>; 3],
    aggregator: Option<AggregatorTrace<T>>,
    pre_attention: Tensor<T>,
    mask: Tensor<T>,
    mask_overridden: bool,
    pub fused: FusedFeature<T>,
    pub classifier: ClassifierTrace<T>,
}

impl<T: Scalar> ModelTrace<T> {
    pub fn seg_maps(&self) -> SegMapSet<T> {
        SegMapSet {
            maps: [0, 1, 2].map(|j| self.semantic[j].output.map.clone()),
        }
    }

    pub fn noise_maps(&self) -> NoiseMapSet<T> {
        NoiseMapSet {
            maps: [0, 1, 2].map(|j| self.noise[j].output.map.clone()),
        }
    }

    pub fn logits(&self) -> &[T] {
        &self.classifier.logits
    }

    pub fn probs(&self) -> &[T] {
        &self.classifier.probs
    }

    pub fn fake_score(&self) -> T {
        fake_score(&self.classifier.probs)
    }

    pub fn output(&self) -> ModelOutput<T> {
        ModelOutput {
            seg: self.seg_maps(),
            noise: self.noise_maps(),
            logits: self.classifier.logits.clone(),
            probs: self.classifier.probs.clone(),
        }
    }

    /// Write taps and predicted maps as raw float arrays named `{stem}_*.f32`.
    pub fn export_debug(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let taps = self.backbone.taps();
        for (name, t) in [("f1", taps.f1), ("f2", taps.f2), ("f3", taps.f3)] {
            image_io::write_raw(&dir.join(format!("{stem}_{name}.f32")), t, None)?;
        }
        for j in 0..3 {
            image_io::write_raw(&dir.join(format!("{stem}_seg{}.f32", j + 1)), &self.semantic[j].output.map, None)?;
            image_io::write_raw(&dir.join(format!("{stem}_noise{}.f32", j + 1)), &self.noise[j].output.map, None)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput<T> {
    pub seg: SegMapSet<T>,
    pub noise: NoiseMapSet<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

/// Loss gradients w.r.t. every model output. Semantic-map gradients are
/// taken w.r.t. the sigmoid probabilities.
#[derive(Debug, Clone)]
pub struct OutputGrads<T> {
    pub d_seg: [Tensor<T>; 3],
    pub d_noise: [Tensor<T>; 3],
    pub d_logits: Vec<T>,
}

impl<T: Scalar> OutputGrads<T> {
    pub fn zeros_like(trace: &ModelTrace<T>) -> Self {
        let z = |t: &Tensor<T>| Tensor::zeros(t.channels(), t.height(), t.width());
        OutputGrads {
            d_seg: [0, 1, 2].map(|j| z(&trace.semantic[j].output.map)),
            d_noise: [0, 1, 2].map(|j| z(&trace.noise[j].output.map)),
            d_logits: vec![T::zero(); trace.classifier.logits.len()],
        }
    }
}

/// Architecture without weights. Parameters live in a flat buffer laid out
/// by [`Network::layout`].
#[derive(Debug, Clone)]
pub struct Network<B = ConvBackbone> {
    config: ModelConfig,
    layout: ParamLayout,
    backbone: B,
    semantic: [Head; 3],
    noise: [Head; 3],
    aggregator: Option<Aggregator>,
    classifier: Classifier,
}

impl Network<ConvBackbone> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut layout = ParamLayout::new();
        let backbone = ConvBackbone::new(&mut layout, 3, config.backbone);
        Network::with_backbone(config, layout, backbone)
    }
}

impl<B: Backbone> Network<B> {
    /// Build heads and classifier on top of an already allocated backbone.
    pub fn with_backbone(config: ModelConfig, mut layout: ParamLayout, backbone: B) -> Result<Self> {
        config.validate()?;
        let strides = backbone.tap_strides();
        if !(strides[0] < strides[1] && strides[1] < strides[2]) {
            return Err(Error::Config(format!("tap strides {strides:?} must increase")));
        }
        if config.aggregation && (strides[2] != 4 * strides[0] || strides[2] != 2 * strides[1]) {
            return Err(Error::Config(format!(
                "aggregation needs tap strides in ratio 1:2:4, got {strides:?}"
            )));
        }
        let c = config.head_channels;
        let tc = backbone.tap_channels();
        let semantic = [0, 1, 2].map(|j| Head::new(&mut layout, &format!("semantic{}", j + 1), HeadKind::Semantic, tc[j], c));
        let noise = [0, 1, 2].map(|j| Head::new(&mut layout, &format!("noise{}", j + 1), HeadKind::Noise, tc[j], c));
        let aggregator = if config.aggregation {
            Some(Aggregator::new(&mut layout, c)?)
        } else {
            None
        };
        let fused_channels = if config.aggregation { 6 * c } else { 2 * c };
        let classifier = Classifier::new(&mut layout, fused_channels, config.classifier_hidden, config.num_classes);
        Ok(Network {
            config,
            layout,
            backbone,
            semantic,
            noise,
            aggregator,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.len()
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn aggregator(&self) -> Option<&Aggregator> {
        self.aggregator.as_ref()
    }

    pub fn init_params<T: Scalar>(&self, seed: u64) -> Vec<T> {
        self.layout.initialize(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Prediction-map sizes for an `h × w` input.
    pub fn map_sizes(&self, h: usize, w: usize) -> [(usize, usize); 3] {
        self.backbone.tap_strides().map(|s| (h.div_ceil(s), w.div_ceil(s)))
    }

    /// Channels of the attended feature.
    pub fn fused_channels(&self) -> usize {
        if self.aggregator.is_some() {
            6 * self.config.head_channels
        } else {
            2 * self.config.head_channels
        }
    }

    /// Full forward pass on a normalized 3-channel input. `mask_override`
    /// replaces the deepest semantic map inside the attention only.
    pub fn forward<T: Scalar>(&self, params: &[T], input: &Tensor<T>, mask_override: Option<&Tensor<T>>) -> Result<ModelTrace<T>> {
        if params.len() != self.layout.len() {
            return Err(Error::Shape(format!(
                "{} parameters for a layout of {}",
                params.len(),
                self.layout.len()
            )));
        }
        let (c, h, w) = input.shape();
        let s3 = self.backbone.tap_strides()[2];
        if c != 3 {
            return Err(Error::Shape(format!("model input has {c} channels, expected 3")));
        }
        if h == 0 || w == 0 || h % s3 != 0 || w % s3 != 0 {
            return Err(Error::InvalidInput(format!("input {h}x{w} is not divisible by stride {s3}")));
        }
        let bb = self.backbone.forward(params, input);
        let taps = bb.taps();
        let tap = [taps.f1, taps.f2, taps.f3];
        let semantic = [0, 1, 2].map(|j| self.semantic[j].forward(params, tap[j]));
        let noise = [0, 1, 2].map(|j| self.noise[j].forward(params, tap[j]));

        let (mask, mask_overridden) = match mask_override {
            Some(m) => (m.clone(), true),
            None => (semantic[2].output.map.clone(), false),
        };
        let sem_feat = [0, 1, 2].map(|j| &semantic[j].output.feature);
        let noise_feat = [0, 1, 2].map(|j| &noise[j].output.feature);
        let (fused, agg_trace, pre_attention) = match &self.aggregator {
            Some(agg) => {
                let (fused, tr) = agg.forward(params, sem_feat, noise_feat, &mask)?;
                let pre = Tensor::concat_channels(&[
                    &tr.semantic[0].output,
                    &tr.semantic[1].output,
                    sem_feat[2],
                    &tr.noise[0].output,
                    &tr.noise[1].output,
                    noise_feat[2],
                ])?;
                (fused, Some(tr), pre)
            }
            None => {
                let fused = attention_fuse(sem_feat[2], noise_feat[2], &mask)?;
                let pre = Tensor::concat_channels(&[sem_feat[2], noise_feat[2]])?;
                (fused, None, pre)
            }
        };
        let classifier = self.classifier.forward(params, &fused.attended);
        Ok(ModelTrace {
            backbone: bb,
            semantic,
            noise,
            aggregator: agg_trace,
            pre_attention,
            mask,
            mask_overridden,
            fused,
            classifier,
        })
    }

    /// Accumulate parameter gradients into `param_grads`.
    pub fn backward<T: Scalar>(&self, params: &[T], trace: &ModelTrace<T>, grads: &OutputGrads<T>, param_grads: &mut [T]) -> Result<()> {
        if param_grads.len() != self.layout.len() {
            return Err(Error::Shape("gradient buffer does not match layout".into()));
        }
        let d_att = self
            .classifier
            .backward(params, &trace.fused.attended, &trace.classifier, &grads.d_logits, param_grads);
        let (d_pre, d_mask) = attention_backward(&trace.pre_attention, &trace.mask, &d_att);
        let c = self.config.head_channels;

        let mut d_sem: [Option<Tensor<T>>; 3] = [None, None, None];
        let mut d_noise: [Option<Tensor<T>>; 3] = [None, None, None];
        match (&self.aggregator, &trace.aggregator) {
            (Some(agg), Some(tr)) => {
                let parts = d_pre.split_channels(&[c; 6])?;
                let sf = [&trace.semantic[0].output.feature, &trace.semantic[1].output.feature];
                let nf = [&trace.noise[0].output.feature, &trace.noise[1].output.feature];
                let (ds, dn) = agg.backward(params, sf, nf, tr, &parts, param_grads);
                let [ds0, ds1] = ds;
                let [dn0, dn1] = dn;
                d_sem = [Some(ds0), Some(ds1), Some(parts[2].clone())];
                d_noise = [Some(dn0), Some(dn1), Some(parts[5].clone())];
            }
            (None, None) => {
                let mut parts = d_pre.split_channels(&[c, c])?.into_iter();
                d_sem[2] = parts.next();
                d_noise[2] = parts.next();
            }
            _ => return Err(Error::Shape("trace does not match network aggregation mode".into())),
        }

        let taps = trace.backbone.taps();
        let tap = [taps.f1, taps.f2, taps.f3];
        let mut d_taps: Vec<Tensor<T>> = Vec::with_capacity(3);
        for j in 0..3 {
            let mut d_map = grads.d_seg[j].clone();
            if j == 2 && !trace.mask_overridden {
                d_map.add_assign(&d_mask);
            }
            let mut dt = self.semantic[j].backward(params, tap[j], &trace.semantic[j], d_sem[j].as_ref(), &d_map, param_grads);
            let dn = self.noise[j].backward(params, tap[j], &trace.noise[j], d_noise[j].as_ref(), &grads.d_noise[j], param_grads);
            dt.add_assign(&dn);
            d_taps.push(dt);
        }
        let d_taps: [Tensor<T>; 3] = d_taps.try_into().expect("three taps");
        self.backbone.backward(params, &trace.backbone, d_taps, param_grads);
        Ok(())
    }
}

/// A network together with its weights.
#[derive(Debug, Clone)]
pub struct Model<T, B = ConvBackbone> {
    pub network: Network<B>,
    pub params: Vec<T>,
}

impl<T: Scalar> Model<T, ConvBackbone> {
    /// Freshly initialized reference model.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let network = Network::new(config)?;
        let params = network.init_params(seed);
        Ok(Model { network, params })
    }
}

impl<T: Scalar, B: Backbone> Model<T, B> {
    pub fn config(&self) -> &ModelConfig {
        self.network.config()
    }

    /// Forward pass on a normalized input.
    pub fn forward(&self, input: &Tensor<T>) -> Result<ModelOutput<T>> {
        Ok(self.network.forward(&self.params, input, None)?.output())
    }

    pub fn trace(&self, input: &Tensor<T>, mask_override: Option<&Tensor<T>>) -> Result<ModelTrace<T>> {
        self.network.forward(&self.params, input, mask_override)
    }
}

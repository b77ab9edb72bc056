//! Sample decoding and target preparation.

use std::path::PathBuf;

use rayon::prelude::*;

use super::manifest::{Label, ManifestRecord, Split};
use super::objective::SampleTargets;
use crate::error::{Error, Result};
use crate::image_io;
use crate::maps::{NoiseMapSet, SegMapSet};
use crate::maskgen::{align_mask, pair_to_mask, BinaryMask, ThresholdConfig};
use crate::net::{normalize_input, Backbone, Network};
use crate::residual::NoiseFilter;
use crate::resize;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A decoded sample with supervision at the model's prediction scales.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub image_path: PathBuf,
    pub label: Label,
    pub split: Split,
    /// Height and width of the source image.
    pub source_size: (usize, usize),
    /// Normalized model input at the configured input size.
    pub input: Tensor<T>,
    pub targets: SampleTargets<T>,
    /// Ground-truth mask at the source image resolution, when known.
    pub gt_mask: Option<BinaryMask<T>>,
}

#[derive(Debug, Clone)]
pub struct DataOptions {
    pub input_size: usize,
    pub map_sizes: [(usize, usize); 3],
    pub num_classes: usize,
    /// Fixed filter σ; `None` picks it from each record's quality.
    pub sigma: Option<f64>,
    pub noise_filter: NoiseFilter,
    pub threshold: ThresholdConfig,
    /// Fail on fakes without a mask or pair instead of leaving the mask unknown.
    pub require_masks: bool,
}

impl DataOptions {
    pub fn for_network<B: Backbone>(network: &Network<B>, sigma: Option<f64>, noise_filter: NoiseFilter) -> Self {
        let cfg = network.config();
        DataOptions {
            input_size: cfg.input_size,
            map_sizes: network.map_sizes(cfg.input_size, cfg.input_size),
            num_classes: cfg.num_classes,
            sigma,
            noise_filter,
            threshold: ThresholdConfig::default(),
            require_masks: true,
        }
    }
}

fn ground_truth_mask<T: Scalar>(rec: &ManifestRecord, image: &Tensor<T>, opts: &DataOptions) -> Result<Option<BinaryMask<T>>> {
    let (h, w) = (image.height(), image.width());
    if !rec.label.is_fake() {
        return Ok(Some(BinaryMask::zeros(h, w)));
    }
    let mask = if let Some(path) = &rec.mask_path {
        let m = BinaryMask::from_intensity(&image_io::load_gray::<T>(path)?)?;
        if (m.height(), m.width()) != (h, w) {
            return Err(Error::Shape(format!(
                "{}: mask {}x{} vs image {h}x{w}",
                path.display(),
                m.height(),
                m.width()
            )));
        }
        Some(m)
    } else if let Some(path) = &rec.pair_path {
        let real = image_io::load_rgb::<T>(path)?;
        Some(pair_to_mask(&real, image, &opts.threshold)?)
    } else {
        None
    };
    if mask.is_none() && opts.require_masks {
        return Err(Error::InvalidInput(format!(
            "{}: fake sample has neither mask_path nor pair_path",
            rec.image_path.display()
        )));
    }
    Ok(mask)
}

pub fn load_sample<T: Scalar>(rec: &ManifestRecord, opts: &DataOptions) -> Result<Sample<T>> {
    let image = image_io::load_rgb::<T>(&rec.image_path)?;
    let gt_mask = ground_truth_mask(rec, &image, opts)?;
    let source_size = (image.height(), image.width());
    let s = opts.input_size;
    let resized = if (image.height(), image.width()) == (s, s) {
        image
    } else {
        resize::resize(&image, s, s)
    };
    let sigma = T::lit(opts.sigma.unwrap_or_else(|| rec.quality.sigma()));
    let residual = opts.noise_filter.apply(&resized, sigma)?.residual;
    let scaled = residual.map(|v| v / T::lit(255.0));
    let noise = NoiseMapSet {
        maps: opts.map_sizes.map(|(h, w)| resize::area(&scaled, h, w)),
    };
    let masks = SegMapSet {
        maps: match &gt_mask {
            Some(m) => {
                let mut out = Vec::with_capacity(3);
                for (h, w) in opts.map_sizes {
                    out.push(align_mask(m, h, w)?.into_tensor());
                }
                out.try_into().expect("three scales")
            }
            None => opts.map_sizes.map(|(h, w)| Tensor::zeros(1, h, w)),
        },
    };
    Ok(Sample {
        image_path: rec.image_path.clone(),
        label: rec.label,
        split: rec.split,
        source_size,
        input: normalize_input(&resized),
        targets: SampleTargets {
            class: rec.label.class_index(opts.num_classes),
            masks,
            noise,
        },
        gt_mask,
    })
}

/// Decode records in parallel; the output order matches `records`.
pub fn load_samples<T: Scalar>(records: &[ManifestRecord], opts: &DataOptions) -> Result<Vec<Sample<T>>> {
    records.par_iter().map(|r| load_sample(r, opts)).collect()
}

//! Inference over a sample set and the resulting metric report.

use rayon::prelude::*;

use super::data::Sample;
use crate::error::Result;
use crate::locfuse::{binarize, fuse_maps, FusionWeights};
use crate::maps::SegMapSet;
use crate::metrics::{detection_metrics, localization_metrics, per_class_recall, EvalReport, ScoredSample};
use crate::net::{Backbone, Model};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SamplePrediction<T> {
    pub score: T,
    pub probs: Vec<T>,
    pub seg: SegMapSet<T>,
    /// Fused localization map at the source image resolution.
    pub fused: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub report: EvalReport,
    pub predictions: Vec<SamplePrediction<T>>,
}

pub fn predict<T: Scalar, B: Backbone>(
    model: &Model<T, B>,
    samples: &[Sample<T>],
    weights: &FusionWeights,
) -> Result<Vec<SamplePrediction<T>>> {
    samples
        .par_iter()
        .map(|s| {
            let tr = model.network.forward(&model.params, &s.input, None)?;
            let seg = tr.seg_maps();
            let fused = fuse_maps(&seg, s.source_size.0, s.source_size.1, weights)?;
            Ok(SamplePrediction {
                score: tr.fake_score(),
                probs: tr.probs().to_vec(),
                seg,
                fused,
            })
        })
        .collect()
}

/// Detection metrics over all samples; localization metrics averaged over
/// fake samples with known masks, binarized at `threshold`.
pub fn evaluate<T: Scalar, B: Backbone>(
    model: &Model<T, B>,
    samples: &[Sample<T>],
    weights: &FusionWeights,
    threshold: f64,
    name: &str,
) -> Result<Evaluation<T>> {
    let predictions = predict(model, samples, weights)?;
    let scored: Vec<ScoredSample<T>> = samples
        .iter()
        .zip(&predictions)
        .map(|(s, p)| ScoredSample {
            score: p.score,
            label: u8::from(s.label.is_fake()),
        })
        .collect();
    let detection = detection_metrics(&scored)?;

    let mut pairs = Vec::new();
    for (s, p) in samples.iter().zip(&predictions) {
        if let (true, Some(gt)) = (s.label.is_fake(), &s.gt_mask) {
            pairs.push((binarize(&p.fused, T::lit(threshold))?, gt.clone()));
        }
    }
    let localization = if pairs.is_empty() {
        None
    } else {
        Some(localization_metrics(&pairs)?)
    };

    let num_classes = model.config().num_classes;
    let class_recall = if num_classes > 2 {
        let pred: Vec<usize> = predictions
            .iter()
            .map(|p| {
                p.probs
                    .iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
                    .0
            })
            .collect();
        let gt: Vec<usize> = samples.iter().map(|s| s.targets.class).collect();
        Some(per_class_recall(&pred, &gt, num_classes)?)
    } else {
        None
    };

    Ok(Evaluation {
        report: EvalReport {
            name: name.to_string(),
            detection,
            localization,
            class_recall,
        },
        predictions,
    })
}

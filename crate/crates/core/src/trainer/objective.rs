//! Per-sample loss terms and output gradients, and their batch composition.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::losses::{self, LossBundle, Reduction};
use crate::maps::{NoiseMapSet, SegMapSet};
use crate::net::{Backbone, Network, OutputGrads};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Supervision for one sample at the model's prediction scales.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTargets<T> {
    pub class: usize,
    pub masks: SegMapSet<T>,
    pub noise: NoiseMapSet<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub reduction: Reduction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLoss<T> {
    pub l_c: T,
    pub l_n: T,
    pub l_b: T,
}

/// Loss terms of one forward pass and the gradients of
/// `scale · (L_c + λ₁ L_n + λ₂ L_b)` w.r.t. the outputs.
pub fn sample_objective<T: Scalar>(
    trace: &crate::net::ModelTrace<T>,
    targets: &SampleTargets<T>,
    weights: &LossWeights,
    scale: T,
) -> Result<(SampleLoss<T>, OutputGrads<T>)> {
    let probs = trace.probs();
    let p = *probs
        .get(targets.class)
        .ok_or_else(|| Error::InvalidInput(format!("class {} out of range", targets.class)))?;
    let eps = T::lit(losses::PROB_EPS);
    let l_c = -(p.max(eps).min(T::one() - eps)).ln();
    let seg = trace.seg_maps();
    let noise = trace.noise_maps();
    let l_b = losses::mask_loss_sample(&seg, &targets.masks)?;
    let l_n = losses::noise_loss_sample(&noise, &targets.noise, weights.reduction)?;
    let grads = OutputGrads {
        d_seg: losses::mask_loss_grad(&seg, &targets.masks, scale * T::lit(weights.lambda2))?,
        d_noise: losses::noise_loss_grad(&noise, &targets.noise, weights.reduction, scale * T::lit(weights.lambda1))?,
        d_logits: losses::categorical_logit_grad(probs, targets.class, scale),
    };
    Ok((SampleLoss { l_c, l_n, l_b }, grads))
}

/// Mean loss over `batch` and the gradient of the total w.r.t. every
/// parameter. Samples run in parallel; gradients are summed in batch order.
pub fn batch_objective<T: Scalar, B: Backbone>(
    network: &Network<B>,
    params: &[T],
    batch: &[(&Tensor<T>, &SampleTargets<T>)],
    weights: &LossWeights,
) -> Result<(LossBundle<T>, Vec<T>)> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let n = T::from_usize_lossy(batch.len());
    let scale = T::one() / n;
    let per_sample: Vec<Result<(SampleLoss<T>, Vec<T>)>> = batch
        .par_iter()
        .map(|(input, targets)| {
            let trace = network.forward(params, input, None)?;
            let (loss, out_grads) = sample_objective(&trace, targets, weights, scale)?;
            let mut g = vec![T::zero(); params.len()];
            network.backward(params, &trace, &out_grads, &mut g)?;
            Ok((loss, g))
        })
        .collect();
    let mut grads = vec![T::zero(); params.len()];
    let (mut l_c, mut l_n, mut l_b) = (T::zero(), T::zero(), T::zero());
    for r in per_sample {
        let (loss, g) = r?;
        l_c += loss.l_c;
        l_n += loss.l_n;
        l_b += loss.l_b;
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += *b;
        }
    }
    let bundle = losses::total_loss(l_c / n, l_n / n, l_b / n, T::lit(weights.lambda1), T::lit(weights.lambda2))?;
    Ok((bundle, grads))
}

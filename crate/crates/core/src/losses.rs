//! Supervision terms and their weighted total.
//!
//! * classification: mean cross-entropy of the predicted class probabilities
//! * mask: per-sample sum over the three scales of the pixel-mean BCE
//! * noise: per-sample sum over the three scales of the L1 distance
//!
//! Batch terms are means over samples. Gradient helpers return derivatives
//! of one sample's contribution, scaled by a caller-supplied factor (the
//! trainer passes `λ / N`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{check_scales, NoiseMapSet, SegMapSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probability clamp used by every cross-entropy term.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Mean over elements of each scale.
    #[default]
    Mean,
    /// Literal L1 norm (sum over elements).
    Sum,
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Reduction::Mean),
            "sum" => Ok(Reduction::Sum),
            other => Err(Error::Config(format!("unknown reduction '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBundle<T> {
    pub l_c: T,
    pub l_n: T,
    pub l_b: T,
    pub lambda1: T,
    pub lambda2: T,
    pub total: T,
}

fn clamp_prob<T: Scalar>(p: T) -> T {
    let eps = T::lit(PROB_EPS);
    p.max(eps).min(T::one() - eps)
}

/// `−[c log p + (1 − c) log(1 − p)]` with `p` clamped.
#[inline]
pub fn bce<T: Scalar>(p: T, target: T) -> T {
    let p = clamp_prob(p);
    -(target * p.ln() + (T::one() - target) * (T::one() - p).ln())
}

/// `∂ bce / ∂ p`; zero where the clamp is active.
#[inline]
pub fn bce_grad<T: Scalar>(p: T, target: T) -> T {
    let eps = T::lit(PROB_EPS);
    if p < eps || p > T::one() - eps {
        return T::zero();
    }
    (T::one() - target) / (T::one() - p) - target / p
}

/// Binary cross-entropy on per-sample fake probabilities.
pub fn classification_loss<T: Scalar>(fake_probs: &[T], labels: &[u8]) -> Result<T> {
    if fake_probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities vs {} labels",
            fake_probs.len(),
            labels.len()
        )));
    }
    if fake_probs.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let sum: T = fake_probs
        .iter()
        .zip(labels)
        .map(|(&p, &c)| bce(p, if c == 1 { T::one() } else { T::zero() }))
        .sum();
    Ok(sum / T::from_usize_lossy(labels.len()))
}

/// Mean categorical cross-entropy; the binary loss is its two-class case.
pub fn categorical_loss<T: Scalar>(probs: &[Vec<T>], labels: &[usize]) -> Result<T> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} rows vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let mut sum = T::zero();
    for (row, &y) in probs.iter().zip(labels) {
        let p = *row
            .get(y)
            .ok_or_else(|| Error::InvalidInput(format!("label {y} out of range")))?;
        sum += -clamp_prob(p).ln();
    }
    Ok(sum / T::from_usize_lossy(labels.len()))
}

/// Gradient of `scale · (−log p_y)` w.r.t. the logits that produced `probs`.
pub fn categorical_logit_grad<T: Scalar>(probs: &[T], label: usize, scale: T) -> Vec<T> {
    let eps = T::lit(PROB_EPS);
    let py = probs[label];
    if py < eps || py > T::one() - eps {
        return vec![T::zero(); probs.len()];
    }
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let onehot = if k == label { T::one() } else { T::zero() };
            scale * (p - onehot)
        })
        .collect()
}

fn plane_bce_mean<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>) -> T {
    let sum: T = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&p, &m)| bce(p, m))
        .sum();
    sum / T::from_usize_lossy(pred.len())
}

/// One sample's mask term: Σ over scales of the pixel-mean BCE.
pub fn mask_loss_sample<T: Scalar>(pred: &SegMapSet<T>, gt: &SegMapSet<T>) -> Result<T> {
    check_scales(&pred.maps, &gt.maps, "mask loss")?;
    Ok(pred
        .maps
        .iter()
        .zip(&gt.maps)
        .map(|(p, g)| plane_bce_mean(p, g))
        .sum())
}

/// Mean over the batch of [`mask_loss_sample`].
pub fn mask_loss<T: Scalar>(pred: &[SegMapSet<T>], gt: &[SegMapSet<T>]) -> Result<T> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "mask loss batch sizes {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut sum = T::zero();
    for (p, g) in pred.iter().zip(gt) {
        sum += mask_loss_sample(p, g)?;
    }
    Ok(sum / T::from_usize_lossy(pred.len()))
}

pub fn mask_loss_grad<T: Scalar>(pred: &SegMapSet<T>, gt: &SegMapSet<T>, scale: T) -> Result<[Tensor<T>; 3]> {
    check_scales(&pred.maps, &gt.maps, "mask loss")?;
    let grad = |j: usize| {
        let (p, g) = (&pred.maps[j], &gt.maps[j]);
        let s = scale / T::from_usize_lossy(p.len());
        let data = p
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .map(|(&pv, &gv)| s * bce_grad(pv, gv))
            .collect();
        Tensor::from_vec(p.channels(), p.height(), p.width(), data).expect("same shape")
    };
    Ok([grad(0), grad(1), grad(2)])
}

fn plane_l1<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>, reduction: Reduction) -> T {
    let sum: T = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&p, &g)| (p - g).abs())
        .sum();
    match reduction {
        Reduction::Mean => sum / T::from_usize_lossy(pred.len()),
        Reduction::Sum => sum,
    }
}

pub fn noise_loss_sample<T: Scalar>(pred: &NoiseMapSet<T>, gt: &NoiseMapSet<T>, reduction: Reduction) -> Result<T> {
    check_scales(&pred.maps, &gt.maps, "noise loss")?;
    Ok(pred
        .maps
        .iter()
        .zip(&gt.maps)
        .map(|(p, g)| plane_l1(p, g, reduction))
        .sum())
}

/// Mean over the batch of the per-sample, scale-summed L1 distance.
pub fn noise_loss<T: Scalar>(pred: &[NoiseMapSet<T>], gt: &[NoiseMapSet<T>], reduction: Reduction) -> Result<T> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "noise loss batch sizes {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut sum = T::zero();
    for (p, g) in pred.iter().zip(gt) {
        sum += noise_loss_sample(p, g, reduction)?;
    }
    Ok(sum / T::from_usize_lossy(pred.len()))
}

/// Subgradient (`sign(0) = 0`) of one sample's noise term.
pub fn noise_loss_grad<T: Scalar>(
    pred: &NoiseMapSet<T>,
    gt: &NoiseMapSet<T>,
    reduction: Reduction,
    scale: T,
) -> Result<[Tensor<T>; 3]> {
    check_scales(&pred.maps, &gt.maps, "noise loss")?;
    let grad = |j: usize| {
        let (p, g) = (&pred.maps[j], &gt.maps[j]);
        let s = match reduction {
            Reduction::Mean => scale / T::from_usize_lossy(p.len()),
            Reduction::Sum => scale,
        };
        let data = p
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .map(|(&pv, &gv)| {
                let d = pv - gv;
                if d > T::zero() {
                    s
                } else if d < T::zero() {
                    -s
                } else {
                    T::zero()
                }
            })
            .collect();
        Tensor::from_vec(p.channels(), p.height(), p.width(), data).expect("same shape")
    };
    Ok([grad(0), grad(1), grad(2)])
}

/// `L = L_c + λ₁ L_n + λ₂ L_b`.
pub fn total_loss<T: Scalar>(l_c: T, l_n: T, l_b: T, lambda1: T, lambda2: T) -> Result<LossBundle<T>> {
    if lambda1 < T::zero() || lambda2 < T::zero() {
        return Err(Error::Config("loss weights must be non-negative".into()));
    }
    Ok(LossBundle {
        l_c,
        l_n,
        l_b,
        lambda1,
        lambda2,
        total: l_c + lambda1 * l_n + lambda2 * l_b,
    })
}

//! Frame-level detection metrics and pixel-level localization metrics.
//!
//! Detection: accuracy, ROC AUC (Mann–Whitney, ties count one half), equal
//! error rate (linear interpolation on the ROC polyline), average precision
//! (step-wise over a stable descending ranking) and FPR/FNR at a threshold.
//!
//! Localization: IoU, pixel-wise binary classification accuracy (PBCA) and
//! inverse intersection non-containment (IINC). IINC here is the symmetric
//! non-containment mean `½[(1 − |I|/|P|) + (1 − |I|/|G|)]`; it is a
//! reimplementation chosen to be 0 on identical masks and 1 on disjoint
//! masks, not a verbatim port of any published code.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskgen::BinaryMask;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample<T> {
    /// Probability of the "fake" class.
    pub score: T,
    /// 0 = real, 1 = fake.
    pub label: u8,
}

impl<T: Scalar> ScoredSample<T> {
    pub fn new(score: T, label: u8) -> Self {
        ScoredSample { score, label }
    }
}

fn mask_bits<T: Scalar>(m: &BinaryMask<T>) -> impl Iterator<Item = bool> + '_ {
    let half = T::lit(0.5);
    m.values().as_slice().iter().map(move |&v| v >= half)
}

fn overlap_counts<T: Scalar>(pred: &BinaryMask<T>, gt: &BinaryMask<T>) -> Result<(usize, usize, usize, usize)> {
    if pred.values().shape() != gt.values().shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.values().shape(),
            gt.values().shape()
        )));
    }
    let (mut inter, mut p, mut g, mut agree) = (0, 0, 0, 0);
    for (a, b) in mask_bits(pred).zip(mask_bits(gt)) {
        inter += (a && b) as usize;
        p += a as usize;
        g += b as usize;
        agree += (a == b) as usize;
    }
    Ok((inter, p, g, agree))
}

fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    T::from_usize_lossy(num) / T::from_usize_lossy(den)
}

/// Intersection over union; two empty masks score 1.
pub fn iou<T: Scalar>(pred: &BinaryMask<T>, gt: &BinaryMask<T>) -> Result<T> {
    let (inter, p, g, _) = overlap_counts(pred, gt)?;
    let union = p + g - inter;
    Ok(if union == 0 { T::one() } else { ratio(inter, union) })
}

/// Fraction of pixels on which prediction and ground truth agree.
pub fn pbca<T: Scalar>(pred: &BinaryMask<T>, gt: &BinaryMask<T>) -> Result<T> {
    let (_, _, _, agree) = overlap_counts(pred, gt)?;
    let n = pred.values().len();
    if n == 0 {
        return Err(Error::Empty("masks have no pixels".into()));
    }
    Ok(ratio(agree, n))
}

/// Symmetric non-containment; 0 when both are empty, 1 when exactly one is.
pub fn iinc<T: Scalar>(pred: &BinaryMask<T>, gt: &BinaryMask<T>) -> Result<T> {
    let (inter, p, g, _) = overlap_counts(pred, gt)?;
    Ok(match (p, g) {
        (0, 0) => T::zero(),
        (0, _) | (_, 0) => T::one(),
        _ => {
            let half = T::lit(0.5);
            half * ((T::one() - ratio::<T>(inter, p)) + (T::one() - ratio::<T>(inter, g)))
        }
    })
}

fn class_counts<T: Scalar>(samples: &[ScoredSample<T>]) -> Result<(usize, usize)> {
    let pos = samples.iter().filter(|s| s.label == 1).count();
    let neg = samples.iter().filter(|s| s.label == 0).count();
    if pos + neg != samples.len() {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    if samples.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::InvalidInput("non-finite score".into()));
    }
    Ok((pos, neg))
}

fn require_both<T: Scalar>(samples: &[ScoredSample<T>], what: &str) -> Result<(usize, usize)> {
    let (pos, neg) = class_counts(samples)?;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!(
            "{what} needs real and fake samples ({neg} real, {pos} fake)"
        )));
    }
    Ok((pos, neg))
}

fn cmp_scores<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Area under the ROC curve as the Mann–Whitney statistic.
pub fn roc_auc<T: Scalar>(samples: &[ScoredSample<T>]) -> Result<T> {
    let (pos, neg) = require_both(samples, "ROC AUC")?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| cmp_scores(samples[a].score, samples[b].score));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && samples[order[j + 1]].score == samples[order[i]].score {
            j += 1;
        }
        // average 1-based rank of the tie block
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if samples[k].label == 1 {
                rank_sum_pos += rank;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok(T::lit((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n)))
}

/// One ROC operating point: predict fake when `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC polyline from `(0, 0)` to `(1, 1)`, one vertex per distinct score.
pub fn roc_curve<T: Scalar>(samples: &[ScoredSample<T>]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = require_both(samples, "ROC curve")?;
    let mut sorted: Vec<&ScoredSample<T>> = samples.iter().collect();
    sorted.sort_by(|a, b| cmp_scores(b.score, a.score));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        while i < sorted.len() && sorted[i].score == s {
            if sorted[i].label == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s.as_f64(),
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

/// Crossing of FPR and FNR on a ROC polyline, linearly interpolated.
pub(crate) fn eer_from_points(points: &[(f64, f64)]) -> f64 {
    for w in points.windows(2) {
        let (f0, t0) = w[0];
        let (f1, t1) = w[1];
        let d0 = (1.0 - t0) - f0;
        let d1 = (1.0 - t1) - f1;
        if d0 == 0.0 {
            return f0;
        }
        if d0 > 0.0 && d1 <= 0.0 {
            let alpha = d0 / (d0 - d1);
            return f0 + alpha * (f1 - f0);
        }
    }
    // Unreachable for a polyline ending at (1, 1); keep the last FPR.
    points.last().map(|p| p.0).unwrap_or(0.5)
}

/// Equal error rate.
pub fn eer<T: Scalar>(samples: &[ScoredSample<T>]) -> Result<T> {
    let points: Vec<(f64, f64)> = roc_curve(samples)?
        .into_iter()
        .map(|p| (p.fpr, p.tpr))
        .collect();
    Ok(T::lit(eer_from_points(&points)))
}

/// Precision/recall after each rank of the stable descending ordering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

pub fn pr_curve<T: Scalar>(samples: &[ScoredSample<T>]) -> Result<Vec<PrPoint>> {
    let (pos, _) = class_counts(samples)?;
    if pos == 0 {
        return Err(Error::SingleClass("average precision needs a positive".into()));
    }
    let mut sorted: Vec<&ScoredSample<T>> = samples.iter().collect();
    // `sort_by` is stable, so ties keep input order.
    sorted.sort_by(|a, b| cmp_scores(b.score, a.score));
    let mut tp = 0usize;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(k, s)| {
            tp += (s.label == 1) as usize;
            PrPoint {
                threshold: s.score.as_f64(),
                recall: tp as f64 / pos as f64,
                precision: tp as f64 / (k + 1) as f64,
            }
        })
        .collect())
}

/// `Σ_k (R_k − R_{k−1}) · P_k`.
pub fn average_precision<T: Scalar>(samples: &[ScoredSample<T>]) -> Result<T> {
    let curve = pr_curve(samples)?;
    let mut prev = 0.0;
    let mut ap = 0.0;
    for p in curve {
        ap += (p.recall - prev) * p.precision;
        prev = p.recall;
    }
    Ok(T::lit(ap))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionRates<T> {
    pub acc: T,
    /// `None` when no real samples are present.
    pub fpr: Option<T>,
    /// `None` when no fake samples are present.
    pub fnr: Option<T>,
}

/// Accuracy, FPR and FNR when predicting fake for `score >= threshold`.
pub fn confusion_rates<T: Scalar>(samples: &[ScoredSample<T>], threshold: T) -> Result<ConfusionRates<T>> {
    let (pos, neg) = class_counts(samples)?;
    if samples.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for s in samples {
        match (s.score >= threshold, s.label == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(ConfusionRates {
        acc: ratio(tp + tn, samples.len()),
        fpr: (neg > 0).then(|| ratio(fp, neg)),
        fnr: (pos > 0).then(|| ratio(fn_, pos)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecall {
    /// `None` for classes absent from the ground truth.
    pub per_class: Vec<Option<f64>>,
    /// Unweighted mean over the defined classes.
    pub average: Option<f64>,
}

pub fn per_class_recall(pred: &[usize], gt: &[usize], num_classes: usize) -> Result<ClassRecall> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            pred.len(),
            gt.len()
        )));
    }
    let mut correct = vec![0usize; num_classes];
    let mut total = vec![0usize; num_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        if g >= num_classes || p >= num_classes {
            return Err(Error::InvalidInput(format!("class index out of range: {p}/{g}")));
        }
        total[g] += 1;
        correct[g] += (p == g) as usize;
    }
    let per_class: Vec<Option<f64>> = correct
        .iter()
        .zip(&total)
        .map(|(&c, &t)| (t > 0).then(|| c as f64 / t as f64))
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let average = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(ClassRecall { per_class, average })
}

/// Detection block of an [`EvalReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub acc: f64,
    pub auc: f64,
    pub eer: f64,
    pub ap: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationMetrics {
    pub iou: f64,
    pub pbca: f64,
    pub iinc: f64,
    /// Number of (prediction, ground truth) mask pairs averaged.
    pub masks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default)]
    pub name: String,
    pub detection: DetectionMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization: Option<LocalizationMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_recall: Option<ClassRecall>,
}

/// All detection metrics at decision threshold 0.5.
pub fn detection_metrics<T: Scalar>(samples: &[ScoredSample<T>]) -> Result<DetectionMetrics> {
    let rates = confusion_rates(samples, T::lit(0.5))?;
    Ok(DetectionMetrics {
        acc: rates.acc.as_f64(),
        auc: roc_auc(samples)?.as_f64(),
        eer: eer(samples)?.as_f64(),
        ap: average_precision(samples)?.as_f64(),
        fpr: rates.fpr.map(|v| v.as_f64()),
        fnr: rates.fnr.map(|v| v.as_f64()),
        samples: samples.len(),
    })
}

/// Per-pair IoU, PBCA and IINC averaged over all pairs.
pub fn localization_metrics<T: Scalar>(
    pairs: &[(BinaryMask<T>, BinaryMask<T>)],
) -> Result<LocalizationMetrics> {
    if pairs.is_empty() {
        return Err(Error::Empty("no masks to evaluate".into()));
    }
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (pred, gt) in pairs {
        a += iou(pred, gt)?.as_f64();
        b += pbca(pred, gt)?.as_f64();
        c += iinc(pred, gt)?.as_f64();
    }
    let n = pairs.len() as f64;
    Ok(LocalizationMetrics {
        iou: a / n,
        pbca: b / n,
        iinc: c / n,
        masks: pairs.len(),
    })
}

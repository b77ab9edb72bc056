//! Brute-force reference implementations used by the test suites.
#![allow(dead_code)]

use std::collections::HashSet;

/// Pairwise AUC: P(score_fake > score_real) + ½ P(tie).
pub fn auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// `(fpr, tpr)` at every distinct threshold, counted from scratch, after `(0, 0)`.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Vec<(f64, f64)> {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut pts = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l == 1).count() as f64;
        let fp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l == 0).count() as f64;
        pts.push((fp / neg, tp / pos));
    }
    pts
}

/// First intersection of the ROC polyline with `tpr = 1 − fpr`.
pub fn eer(scores: &[f64], labels: &[u8]) -> f64 {
    let pts = roc_points(scores, labels);
    for w in pts.windows(2) {
        let ((f0, t0), (f1, t1)) = (w[0], w[1]);
        let denom = (t1 - t0) + (f1 - f0);
        if denom == 0.0 {
            if (1.0 - t0 - f0).abs() < 1e-15 {
                return f0;
            }
            continue;
        }
        let t = (1.0 - f0 - t0) / denom;
        if (0.0..=1.0).contains(&t) {
            return f0 + t * (f1 - f0);
        }
    }
    f64::NAN
}

/// Mean over positives of the precision at each positive's rank in the
/// stable descending order.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut tp = 0.0;
    let mut sum = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        if labels[i] == 1 {
            tp += 1.0;
            sum += tp / (k + 1) as f64;
        }
    }
    sum / pos
}

/// `(acc, fpr, fnr)` with fake predicted for `score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> (f64, Option<f64>, Option<f64>) {
    let n = scores.len() as f64;
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| (**s >= threshold) == (**l == 1))
        .count() as f64;
    let reals: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == 0).map(|(s, _)| *s).collect();
    let fakes: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == 1).map(|(s, _)| *s).collect();
    let fpr = (!reals.is_empty()).then(|| reals.iter().filter(|&&s| s >= threshold).count() as f64 / reals.len() as f64);
    let fnr = (!fakes.is_empty()).then(|| fakes.iter().filter(|&&s| s < threshold).count() as f64 / fakes.len() as f64);
    (correct / n, fpr, fnr)
}

fn on_set(mask: &[f64], w: usize) -> HashSet<(usize, usize)> {
    mask.iter()
        .enumerate()
        .filter(|(_, &v)| v >= 0.5)
        .map(|(i, _)| (i / w, i % w))
        .collect()
}

pub fn iou(pred: &[f64], gt: &[f64], w: usize) -> f64 {
    let (p, g) = (on_set(pred, w), on_set(gt, w));
    let union = p.union(&g).count();
    if union == 0 {
        1.0
    } else {
        p.intersection(&g).count() as f64 / union as f64
    }
}

pub fn pbca(pred: &[f64], gt: &[f64]) -> f64 {
    let agree = pred.iter().zip(gt).filter(|(a, b)| (**a >= 0.5) == (**b >= 0.5)).count();
    agree as f64 / pred.len() as f64
}

/// `½[(1 − |I|/|P|) + (1 − |I|/|G|)]`; 0 when both are empty, 1 when exactly one is.
pub fn iinc(pred: &[f64], gt: &[f64], w: usize) -> f64 {
    let (p, g) = (on_set(pred, w), on_set(gt, w));
    match (p.is_empty(), g.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => {
            let i = p.intersection(&g).count() as f64;
            0.5 * ((1.0 - i / p.len() as f64) + (1.0 - i / g.len() as f64))
        }
    }
}

/// `−(1/N) Σ_i [c_i log p_i + (1 − c_i) log(1 − p_i)]`.
pub fn classification_loss(probs: &[f64], labels: &[u8]) -> f64 {
    let mut sum = 0.0;
    for i in 0..probs.len() {
        let p = probs[i].clamp(1e-7, 1.0 - 1e-7);
        let c = labels[i] as f64;
        sum += -(c * p.ln() + (1.0 - c) * (1.0 - p).ln());
    }
    sum / probs.len() as f64
}

/// Maps are `[sample][scale]` row-major planes with their `(h, w)`.
pub fn mask_loss(pred: &[Vec<Vec<f64>>], gt: &[Vec<Vec<f64>>]) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.len() {
        for j in 0..pred[i].len() {
            let n = pred[i][j].len() as f64;
            let mut s = 0.0;
            for k in 0..pred[i][j].len() {
                let p = pred[i][j][k].clamp(1e-7, 1.0 - 1e-7);
                let m = gt[i][j][k];
                s += -(m * p.ln() + (1.0 - m) * (1.0 - p).ln());
            }
            total += s / n;
        }
    }
    total / pred.len() as f64
}

pub fn noise_loss(pred: &[Vec<Vec<f64>>], gt: &[Vec<Vec<f64>>], mean: bool) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.len() {
        for j in 0..pred[i].len() {
            let mut s = 0.0;
            for k in 0..pred[i][j].len() {
                s += (pred[i][j][k] - gt[i][j][k]).abs();
            }
            total += if mean { s / pred[i][j].len() as f64 } else { s };
        }
    }
    total / pred.len() as f64
}

/// `Σ_j γ_j · bilinear(M_j)` at each output pixel, sampling with half-pixel
/// centres and edge clamping.
pub fn fuse_pixel(maps: &[(Vec<f64>, usize, usize)], gammas: [f64; 3], out_h: usize, out_w: usize, y: usize, x: usize) -> f64 {
    let mut v = 0.0;
    for (j, (m, h, w)) in maps.iter().enumerate() {
        let sy = ((y as f64 + 0.5) * *h as f64 / out_h as f64 - 0.5).clamp(0.0, (*h - 1) as f64);
        let sx = ((x as f64 + 0.5) * *w as f64 / out_w as f64 - 0.5).clamp(0.0, (*w - 1) as f64);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
        let at = |yy: usize, xx: usize| m[yy * w + xx];
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
        let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
        v += gammas[j] * (top * (1.0 - fy) + bot * fy);
    }
    v.clamp(0.0, 1.0)
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

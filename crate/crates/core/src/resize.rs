//! Separable resampling: exact area averaging for shrinking, half-pixel
//! bilinear interpolation for enlarging.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Sparse per-axis interpolation weights: `out[i] = Σ w · in[j]`.
type AxisWeights = Vec<Vec<(usize, f64)>>;

fn area_weights(src: usize, dst: usize) -> AxisWeights {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let mut row = Vec::new();
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            for j in first..last {
                let overlap = (hi.min((j + 1) as f64) - lo.max(j as f64)).max(0.0);
                if overlap > 0.0 {
                    row.push((j, overlap / scale));
                }
            }
            row
        })
        .collect()
}

fn bilinear_weights(src: usize, dst: usize) -> AxisWeights {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let j0 = pos.floor() as usize;
            let j1 = (j0 + 1).min(src - 1);
            let t = pos - j0 as f64;
            if j1 == j0 || t == 0.0 {
                vec![(j0, 1.0)]
            } else {
                vec![(j0, 1.0 - t), (j1, t)]
            }
        })
        .collect()
}

fn apply<T: Scalar>(t: &Tensor<T>, wy: &AxisWeights, wx: &AxisWeights) -> Tensor<T> {
    let (c, h, w) = t.shape();
    let (oh, ow) = (wy.len(), wx.len());
    let mut tmp = vec![0.0f64; h * ow];
    let mut out = Tensor::zeros(c, oh, ow);
    for ch in 0..c {
        let src = t.plane(ch);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for (ox, taps) in wx.iter().enumerate() {
                tmp[y * ow + ox] = taps.iter().map(|&(j, wt)| wt * row[j].as_f64()).sum();
            }
        }
        let dst = out.plane_mut(ch);
        for (oy, taps) in wy.iter().enumerate() {
            for ox in 0..ow {
                let v: f64 = taps.iter().map(|&(j, wt)| wt * tmp[j * ow + ox]).sum();
                dst[oy * ow + ox] = T::lit(v);
            }
        }
    }
    out
}

fn axis_auto(src: usize, dst: usize) -> AxisWeights {
    if dst <= src {
        area_weights(src, dst)
    } else {
        bilinear_weights(src, dst)
    }
}

/// Area-average when shrinking an axis, bilinear when enlarging it.
pub fn resize<T: Scalar>(t: &Tensor<T>, height: usize, width: usize) -> Tensor<T> {
    assert!(height >= 1 && width >= 1, "target dims must be positive");
    apply(t, &axis_auto(t.height(), height), &axis_auto(t.width(), width))
}

/// Half-pixel-centred bilinear resampling (edge-clamped), used for upsampling maps.
pub fn bilinear<T: Scalar>(t: &Tensor<T>, height: usize, width: usize) -> Tensor<T> {
    assert!(height >= 1 && width >= 1, "target dims must be positive");
    apply(
        t,
        &bilinear_weights(t.height(), height),
        &bilinear_weights(t.width(), width),
    )
}

/// Exact area averaging (fractional overlaps allowed).
pub fn area<T: Scalar>(t: &Tensor<T>, height: usize, width: usize) -> Tensor<T> {
    assert!(height >= 1 && width >= 1, "target dims must be positive");
    apply(
        t,
        &area_weights(t.height(), height),
        &area_weights(t.width(), width),
    )
}

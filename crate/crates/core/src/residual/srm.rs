//! SRM high-pass residual bank (steganalysis rich-model kernels).

use super::{validate_image, NoiseMap};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The three standard 5×5-embedded SRM kernels, already divided by their
/// normalizers (2, 4 and 12).
pub fn srm_kernels() -> [[[f64; 5]; 5]; 3] {
    let first = [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, -2.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
    ];
    let second = [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 2.0, -1.0, 0.0],
        [0.0, 2.0, -4.0, 2.0, 0.0],
        [0.0, -1.0, 2.0, -1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
    ];
    let kv = [
        [-1.0, 2.0, -2.0, 2.0, -1.0],
        [2.0, -6.0, 8.0, -6.0, 2.0],
        [-2.0, 8.0, -12.0, 8.0, -2.0],
        [2.0, -6.0, 8.0, -6.0, 2.0],
        [-1.0, 2.0, -2.0, 2.0, -1.0],
    ];
    let scale = |k: [[f64; 5]; 5], d: f64| k.map(|row| row.map(|v| v / d));
    [scale(first, 2.0), scale(second, 4.0), scale(kv, 12.0)]
}

/// Mean of the three kernels; the bank is linear so averaging responses
/// equals convolving once with this kernel.
pub fn srm_mean_kernel() -> [[f64; 5]; 5] {
    let ks = srm_kernels();
    let mut out = [[0.0; 5]; 5];
    for (y, row) in out.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            *v = ks.iter().map(|k| k[y][x]).sum::<f64>() / 3.0;
        }
    }
    out
}

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Averaged SRM response per channel, edge-replicated borders, same spatial size.
pub fn srm_residual<T: Scalar>(image: &Tensor<T>) -> Result<NoiseMap<T>> {
    validate_image(image, 5)?;
    let k = srm_mean_kernel();
    let (c, h, w) = image.shape();
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let src = image.plane(ch);
        let dst = out.plane_mut(ch);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ky, row) in k.iter().enumerate() {
                    // true convolution: kernel index flipped relative to the image offset
                    let sy = clamp_index(y as isize + 2 - ky as isize, h);
                    for (kx, &kv) in row.iter().enumerate() {
                        if kv == 0.0 {
                            continue;
                        }
                        let sx = clamp_index(x as isize + 2 - kx as isize, w);
                        acc += kv * src[sy * w + sx].as_f64();
                    }
                }
                dst[y * w + x] = T::lit(acc);
            }
        }
    }
    Ok(NoiseMap {
        residual: out,
        sigma: None,
    })
}

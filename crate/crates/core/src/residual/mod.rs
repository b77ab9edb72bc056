//! Content-independent noise residuals.
//!
//! The primary extractor is a spatially adaptive Wiener filter applied in
//! the Daubechies-8 wavelet domain: every detail coefficient is attenuated
//! by `σ̂²/(σ̂² + σ²)` where `σ̂²` is a local signal-variance estimate and
//! `σ²` the assumed AWGN variance. The residual is what the filter removes.
//! An SRM high-pass bank is provided as an alternative label source.

pub mod srm;
pub mod wavelet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use wavelet::Plane;

pub use srm::srm_residual;

/// Decomposition depth of the wavelet filter.
pub const WAVELET_LEVELS: usize = 4;
/// Window sizes for the local variance estimate.
pub const VARIANCE_WINDOWS: [usize; 4] = [3, 5, 7, 9];
/// Smallest image side accepted by [`extract_residual`].
pub const MIN_WAVELET_SIDE: usize = 8;

/// Default AWGN σ for high-quality inputs.
pub const SIGMA_HQ: f64 = 5.0;
/// Default AWGN σ for low-quality (heavily compressed) inputs.
pub const SIGMA_LQ: f64 = 10.0;

/// Residual `n = F − f(F)` on the 0–255 intensity scale.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMap<T> {
    pub residual: Tensor<T>,
    /// AWGN σ used by the filter; `None` for the SRM bank.
    pub sigma: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats<T> {
    pub mean: T,
    /// Population variance over every element.
    pub variance: T,
}

/// Which filter produces the residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFilter {
    Wavelet,
    Srm,
}

impl std::str::FromStr for NoiseFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wavelet" => Ok(NoiseFilter::Wavelet),
            "srm" => Ok(NoiseFilter::Srm),
            other => Err(Error::Config(format!("unknown noise filter '{other}'"))),
        }
    }
}

impl NoiseFilter {
    pub fn apply<T: Scalar>(self, image: &Tensor<T>, sigma: T) -> Result<NoiseMap<T>> {
        match self {
            NoiseFilter::Wavelet => extract_residual(image, sigma),
            NoiseFilter::Srm => srm_residual(image),
        }
    }
}

/// Wiener attenuation of one detail coefficient.
#[inline]
pub fn shrink_coefficient<T: Scalar>(c: T, sigma_hat_sq: T, sigma_sq: T) -> T {
    let denom = sigma_hat_sq + sigma_sq;
    if denom <= T::zero() {
        return T::zero();
    }
    c * (sigma_hat_sq / denom)
}

/// `numpy`-style reflect index (edge sample not repeated), valid for any offset.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// `max(0, min_W mean_W(c²) − σ²)` for every coefficient of a subband.
pub(crate) fn local_signal_variance(band: &Plane, sigma_sq: f64) -> Vec<f64> {
    let (h, w) = (band.height, band.width);
    let r = *VARIANCE_WINDOWS.last().unwrap() / 2;
    let (ph, pw) = (h + 2 * r, w + 2 * r);
    // Integral image of the reflect-padded squared band, with a zero border row/col.
    let mut integral = vec![0.0f64; (ph + 1) * (pw + 1)];
    for y in 0..ph {
        let sy = reflect(y as isize - r as isize, h);
        let mut row_sum = 0.0;
        for x in 0..pw {
            let sx = reflect(x as isize - r as isize, w);
            let v = band.at(sy, sx);
            row_sum += v * v;
            integral[(y + 1) * (pw + 1) + x + 1] = integral[y * (pw + 1) + x + 1] + row_sum;
        }
    }
    let window_sum = |y0: usize, x0: usize, size: usize| {
        let (y1, x1) = (y0 + size, x0 + size);
        integral[y1 * (pw + 1) + x1] - integral[y0 * (pw + 1) + x1] - integral[y1 * (pw + 1) + x0]
            + integral[y0 * (pw + 1) + x0]
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut best = f64::INFINITY;
            for &size in &VARIANCE_WINDOWS {
                let half = size / 2;
                let mean = window_sum(y + r - half, x + r - half, size) / (size * size) as f64;
                best = best.min(mean - sigma_sq);
            }
            out[y * w + x] = best.max(0.0);
        }
    }
    out
}

/// Residual of one plane: inverse transform of `c − shrink(c)` in every
/// detail band with a zeroed approximation band. By linearity this equals
/// `plane − denoise(plane)` without the round-trip error of subtracting two
/// reconstructions.
fn plane_residual(plane: &Plane, sigma: f64) -> Plane {
    let sigma_sq = sigma * sigma;
    let mut dec = wavelet::decompose(plane, WAVELET_LEVELS);
    for level in &mut dec.levels {
        for band in &mut level.bands {
            let var = local_signal_variance(band, sigma_sq);
            for (c, &v) in band.data.iter_mut().zip(&var) {
                *c -= shrink_coefficient(*c, v, sigma_sq);
            }
        }
    }
    dec.approx.data.iter_mut().for_each(|v| *v = 0.0);
    wavelet::reconstruct(&dec)
}

pub(crate) fn validate_image<T: Scalar>(image: &Tensor<T>, min_side: usize) -> Result<()> {
    if image.height() < min_side || image.width() < min_side {
        return Err(Error::InvalidInput(format!(
            "image is {}x{}, need at least {min_side}x{min_side}",
            image.height(),
            image.width()
        )));
    }
    if image.channels() == 0 {
        return Err(Error::InvalidInput("image has no channels".into()));
    }
    if !image.all_finite() {
        return Err(Error::InvalidInput("image contains non-finite pixels".into()));
    }
    Ok(())
}

/// Wavelet-Wiener noise residual, each channel processed independently.
pub fn extract_residual<T: Scalar>(image: &Tensor<T>, sigma: T) -> Result<NoiseMap<T>> {
    validate_image(image, MIN_WAVELET_SIDE)?;
    let s = sigma.as_f64();
    if !(0.0..=50.0).contains(&s) {
        return Err(Error::InvalidInput(format!("sigma {s} outside [0, 50]")));
    }
    let (c, h, w) = image.shape();
    if s == 0.0 {
        return Ok(NoiseMap {
            residual: Tensor::zeros(c, h, w),
            sigma: Some(sigma),
        });
    }
    let mut residual = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let plane = Plane {
            height: h,
            width: w,
            data: image.plane(ch).iter().map(|v| v.as_f64()).collect(),
        };
        let res = plane_residual(&plane, s);
        for (dst, &v) in residual.plane_mut(ch).iter_mut().zip(&res.data) {
            *dst = T::lit(v);
        }
    }
    Ok(NoiseMap {
        residual,
        sigma: Some(sigma),
    })
}

/// Mean and population variance over all residual elements.
pub fn residual_stats<T: Scalar>(map: &NoiseMap<T>) -> Result<ResidualStats<T>> {
    let data = map.residual.as_slice();
    if data.is_empty() {
        return Err(Error::Empty("noise map has no elements".into()));
    }
    let n = data.len() as f64;
    let mean = data.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let variance = data
        .iter()
        .map(|v| {
            let d = v.as_f64() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(ResidualStats {
        mean: T::lit(mean),
        variance: T::lit(variance),
    })
}

//! Ground-truth manipulation masks from real/fake pairs and their
//! alignment to prediction resolutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resize;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Single-channel mask with values in `[0, 1]`; binary at full resolution,
/// soft after alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask<T>(Tensor<T>);

impl<T: Scalar> BinaryMask<T> {
    pub fn new(values: Tensor<T>) -> Result<Self> {
        if values.channels() != 1 {
            return Err(Error::Shape(format!(
                "mask must be single-channel, got {}",
                values.channels()
            )));
        }
        if values
            .as_slice()
            .iter()
            .any(|v| !(*v >= T::zero() && *v <= T::one()))
        {
            return Err(Error::InvalidInput("mask values outside [0, 1]".into()));
        }
        Ok(BinaryMask(values))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        BinaryMask(Tensor::zeros(1, height, width))
    }

    /// Interpret 8-bit intensities (0 / 255) as a binary mask.
    pub fn from_intensity(gray: &Tensor<T>) -> Result<Self> {
        let half = T::lit(127.5);
        Self::new(gray.map(|v| if v >= half { T::one() } else { T::zero() }))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn values(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.as_slice().iter().filter(|&&v| v >= T::lit(0.5)).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        self.0.as_slice().iter().all(|&v| v == T::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    /// On the normalized `[0, 1]` intensity scale.
    pub threshold: f64,
    pub morph_cleanup: bool,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            threshold: 0.05,
            morph_cleanup: true,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold > 0.0 && self.threshold < 1.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )))
        }
    }
}

/// Mark pixels whose largest per-channel absolute difference reaches the threshold.
pub fn pair_to_mask<T: Scalar>(
    real: &Tensor<T>,
    fake: &Tensor<T>,
    cfg: &ThresholdConfig,
) -> Result<BinaryMask<T>> {
    cfg.validate()?;
    real.check_same_shape(fake, "real/fake pair")?;
    let (c, h, w) = real.shape();
    let mut bits = vec![false; h * w];
    for (i, bit) in bits.iter_mut().enumerate() {
        let mut diff = 0.0f64;
        for ch in 0..c {
            let d = (real.plane(ch)[i].as_f64() - fake.plane(ch)[i].as_f64()).abs();
            diff = diff.max(d);
        }
        *bit = diff / 255.0 >= cfg.threshold;
    }
    if cfg.morph_cleanup {
        bits = close_then_open(&bits, h, w);
    }
    let data = bits
        .into_iter()
        .map(|b| if b { T::one() } else { T::zero() })
        .collect();
    BinaryMask::new(Tensor::from_vec(1, h, w, data)?)
}

/// 3×3 min/max filter over in-bounds neighbours.
/// 3×3 dilation or erosion; pixels outside the plane count as background.
fn morph(bits: &[bool], h: usize, w: usize, dilate: bool) -> Vec<bool> {
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = !dilate;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    let v = ny >= 0
                        && nx >= 0
                        && (ny as usize) < h
                        && (nx as usize) < w
                        && bits[ny as usize * w + nx as usize];
                    if dilate {
                        acc |= v;
                    } else {
                        acc &= v;
                    }
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Closing then opening on a canvas padded by one background pixel, so
/// closing stays extensive at the borders.
fn close_then_open(bits: &[bool], h: usize, w: usize) -> Vec<bool> {
    let (ph, pw) = (h + 2, w + 2);
    let mut canvas = vec![false; ph * pw];
    for y in 0..h {
        canvas[(y + 1) * pw + 1..(y + 1) * pw + 1 + w].copy_from_slice(&bits[y * w..(y + 1) * w]);
    }
    let closed = morph(&morph(&canvas, ph, pw, true), ph, pw, false);
    let opened = morph(&morph(&closed, ph, pw, false), ph, pw, true);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        out.extend_from_slice(&opened[(y + 1) * pw + 1..(y + 1) * pw + 1 + w]);
    }
    out
}

/// Resize a mask to a prediction resolution; the result is a soft target.
pub fn align_mask<T: Scalar>(
    mask: &BinaryMask<T>,
    target_h: usize,
    target_w: usize,
) -> Result<BinaryMask<T>> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::InvalidInput("target dims must be positive".into()));
    }
    let resized = resize::resize(mask.values(), target_h, target_w);
    // Clamp away rounding spill outside [0, 1].
    BinaryMask::new(resized.map(|v| v.max(T::zero()).min(T::one())))
}

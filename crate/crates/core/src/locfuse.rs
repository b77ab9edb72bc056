//! Multi-scale localization map fusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskgen::BinaryMask;
use crate::maps::SegMapSet;
use crate::resize;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-scale weights for shallow, middle and deep semantic maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            gamma1: 0.1,
            gamma2: 0.2,
            gamma3: 0.7,
        }
    }
}

impl FusionWeights {
    /// Rescale to unit sum. Negative or all-zero weights are rejected.
    pub fn normalized(gamma1: f64, gamma2: f64, gamma3: f64) -> Result<Self> {
        let g = [gamma1, gamma2, gamma3];
        if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!("fusion weights {g:?} must be >= 0")));
        }
        let sum: f64 = g.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Config("fusion weights sum to zero".into()));
        }
        if (sum - 1.0).abs() < 1e-12 {
            return Ok(FusionWeights {
                gamma1,
                gamma2,
                gamma3,
            });
        }
        Ok(FusionWeights {
            gamma1: gamma1 / sum,
            gamma2: gamma2 / sum,
            gamma3: gamma3 / sum,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.gamma1, self.gamma2, self.gamma3]
    }
}

impl std::str::FromStr for FusionWeights {
    type Err = Error;

    /// Parses `"0.1,0.2,0.7"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad gamma list '{s}': {e}")))?;
        match parts.as_slice() {
            [a, b, c] => FusionWeights::normalized(*a, *b, *c),
            _ => Err(Error::Config(format!("expected three gammas, got '{s}'"))),
        }
    }
}

/// Weighted sum of the bilinearly upsampled maps.
pub fn fuse_maps<T: Scalar>(
    maps: &SegMapSet<T>,
    target_h: usize,
    target_w: usize,
    weights: &FusionWeights,
) -> Result<Tensor<T>> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::InvalidInput("target dims must be positive".into()));
    }
    let mut out = Tensor::zeros(1, target_h, target_w);
    for (map, gamma) in maps.maps.iter().zip(weights.as_array()) {
        if map.channels() != 1 {
            return Err(Error::Shape("semantic maps must be single-channel".into()));
        }
        if gamma == 0.0 {
            continue;
        }
        let up = resize::bilinear(map, target_h, target_w);
        let g = T::lit(gamma);
        for (o, &v) in out.as_mut_slice().iter_mut().zip(up.as_slice()) {
            *o += g * v;
        }
    }
    Ok(out.map(|v: T| v.max(T::zero()).min(T::one())))
}

/// Per-pixel `value >= threshold`.
pub fn binarize<T: Scalar>(map: &Tensor<T>, threshold: T) -> Result<BinaryMask<T>> {
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(Error::Config(format!("threshold {threshold} must lie in (0, 1)")));
    }
    BinaryMask::new(map.map(|v| if v >= threshold { T::one() } else { T::zero() }))
}

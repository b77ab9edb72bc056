//! Per-scale prediction bundles: index 0 is the shallowest tap, 2 the deepest.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Three single-channel manipulation-probability maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SegMapSet<T> {
    pub maps: [Tensor<T>; 3],
}

/// Three 3-channel noise maps (residual scale divided by 255).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMapSet<T> {
    pub maps: [Tensor<T>; 3],
}

pub(crate) fn check_scales<T: Scalar>(pred: &[Tensor<T>; 3], gt: &[Tensor<T>; 3], what: &str) -> Result<()> {
    for (j, (p, g)) in pred.iter().zip(gt).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "{what} scale {j}: prediction {:?} vs target {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    Ok(())
}

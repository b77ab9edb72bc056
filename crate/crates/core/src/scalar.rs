//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar: `f32` for training throughput, `f64` for oracle and gradient checks.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Name stored in checkpoints and sidecars.
    const NAME: &'static str;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits in a float")
    }

    /// `c += a · b` over strided `[m×k]`, `[k×n]` and `[m×n]` views, given
    /// as `(slice, row stride, column stride)`.
    fn gemm_acc(m: usize, k: usize, n: usize, a: (&[Self], isize, isize), b: (&[Self], isize, isize), c: (&mut [Self], isize, isize));
}

fn check_extent<T>(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows > 0 && cols > 0 {
        let last = (rows - 1) as isize * rs + (cols - 1) as isize * cs;
        assert!(rs >= 0 && cs >= 0 && (last as usize) < len, "gemm view exceeds its slice");
    }
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal, $kernel:path) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            fn gemm_acc(m: usize, k: usize, n: usize, a: (&[Self], isize, isize), b: (&[Self], isize, isize), c: (&mut [Self], isize, isize)) {
                check_extent::<Self>(a.0.len(), m, k, a.1, a.2);
                check_extent::<Self>(b.0.len(), k, n, b.1, b.2);
                check_extent::<Self>(c.0.len(), m, n, c.1, c.2);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every view was checked to lie inside its slice, and
                // `c` is borrowed mutably so it cannot alias `a` or `b`.
                unsafe { $kernel(m, k, n, 1.0, a.0.as_ptr(), a.1, a.2, b.0.as_ptr(), b.1, b.2, 1.0, c.0.as_mut_ptr(), c.1, c.2) }
            }
        }
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm);
impl_scalar!(f64, "f64", matrixmultiply::dgemm);

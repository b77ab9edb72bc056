//! Dense matrix products over row-major slices.

use crate::scalar::Scalar;

/// `c[m×n] += a[m×k] · b[k×n]`
pub fn gemm_nn<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    let (k_, n_) = (k as isize, n as isize);
    T::gemm_acc(m, k, n, (a, k_, 1), (b, n_, 1), (c, n_, 1));
}

/// `c[m×n] += aᵀ · b` with `a` stored as `[k×m]`, `b` as `[k×n]`.
pub fn gemm_tn<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    let (m_, n_) = (m as isize, n as isize);
    T::gemm_acc(m, k, n, (a, 1, m_), (b, n_, 1), (c, n_, 1));
}

/// `c[m×n] += a · bᵀ` with `a` stored as `[m×k]`, `b` as `[n×k]`.
pub fn gemm_nt<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    let (k_, n_) = (k as isize, n as isize);
    T::gemm_acc(m, k, n, (a, k_, 1), (b, 1, k_), (c, n_, 1));
}

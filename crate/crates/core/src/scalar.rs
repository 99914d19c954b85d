//! Floating-point abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used by concept scores, the network and the metrics.
///
/// Implemented for `f32` and `f64`. The dense kernels (`gemm`) dispatch to
/// `matrixmultiply` for both; other floats fall back to the naive loop.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// `c = alpha * a * b + beta * c` on row-major buffers.
    ///
    /// `a` is `m x k` with row stride `lda`, `b` is `k x n`, `c` is `m x n`.
    /// When `trans_a` is set, `a` is stored as `k x m` and read transposed;
    /// likewise for `trans_b`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        trans_a: bool,
        b: &[Self],
        trans_b: bool,
        beta: Self,
        c: &mut [Self],
    ) {
        naive_gemm(m, k, n, alpha, a, trans_a, b, trans_b, beta, c);
    }

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn naive_gemm<T: Float + AddAssign>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::zero();
            for p in 0..k {
                let av = if trans_a { a[p * m + i] } else { a[i * k + p] };
                let bv = if trans_b { b[j * k + p] } else { b[p * n + j] };
                acc += av * bv;
            }
            let out = &mut c[i * n + j];
            *out = if beta == T::zero() {
                alpha * acc
            } else {
                alpha * acc + beta * *out
            };
        }
    }
}

// Strides for matrixmultiply: (row stride, column stride).
fn strides(rows: usize, cols: usize, transposed: bool) -> (isize, isize) {
    if transposed {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $kernel:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                trans_a: bool,
                b: &[Self],
                trans_b: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = strides(m, k, trans_a);
                let (rsb, csb) = strides(k, n, trans_b);
                // SAFETY: bounds checked above; strides describe dense
                // row-major (or transposed row-major) buffers of those sizes.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    dot / (na.sqrt() * nb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_against_naive<T: Scalar>(trans_a: bool, trans_b: bool) {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<T> = (0..m * k)
            .map(|i| T::from_f64_lossy(i as f64 * 0.5 - 2.0))
            .collect();
        let b: Vec<T> = (0..k * n)
            .map(|i| T::from_f64_lossy(1.0 - i as f64 * 0.25))
            .collect();
        let mut fast = vec![T::one(); m * n];
        let mut slow = fast.clone();
        let half = T::from_f64_lossy(0.5);
        T::gemm(m, k, n, T::one(), &a, trans_a, &b, trans_b, half, &mut fast);
        naive_gemm(m, k, n, T::one(), &a, trans_a, &b, trans_b, half, &mut slow);
        for (x, y) in fast.iter().zip(&slow) {
            assert!((*x - *y).abs() < T::from_f64_lossy(1e-4), "{x} vs {y}");
        }
    }

    #[test]
    fn gemm_matches_naive_for_all_transposes() {
        for ta in [false, true] {
            for tb in [false, true] {
                check_against_naive::<f64>(ta, tb);
                check_against_naive::<f32>(ta, tb);
            }
        }
    }

    #[test]
    fn cosine_handles_zero_vectors() {
        assert_eq!(cosine(&[0.0f64, 0.0], &[1.0, 2.0]), 0.0);
        assert!((cosine(&[1.0f64, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-15);
    }
}

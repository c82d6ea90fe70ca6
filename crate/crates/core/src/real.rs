//! Floating-point abstraction so the network runs in `f32` for training and
//! `f64` for gradient checks, with both routed through `matrixmultiply`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
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
    + 'static
{
    /// `c = alpha * a * b + beta * c` for strided row/column layouts.
    ///
    /// # Safety contract
    /// Strides must be non-negative and every addressed element must lie in
    /// the slices; both are asserted before the call into the kernel.
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: usize,
        csa: usize,
        b: &[Self],
        rsb: usize,
        csb: usize,
        beta: Self,
        c: &mut [Self],
        rsc: usize,
        csc: usize,
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

fn span(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

macro_rules! impl_real {
    ($t:ty, $kernel:path) => {
        impl Real for $t {
            fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: usize,
                csa: usize,
                b: &[Self],
                rsb: usize,
                csb: usize,
                beta: Self,
                c: &mut [Self],
                rsc: usize,
                csc: usize,
            ) {
                assert!(a.len() >= span(m, k, rsa, csa), "gemm: lhs too short");
                assert!(b.len() >= span(k, n, rsb, csb), "gemm: rhs too short");
                assert!(c.len() >= span(m, n, rsc, csc), "gemm: out too short");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: extents checked above; matrixmultiply reads a and b
                // and writes c only inside those extents.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        rsc as isize,
                        csc as isize,
                    )
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// `c (m×n) [+]= a (m×k) · b (k×n)`, all row-major.
pub fn matmul<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    let beta = if accumulate { T::one() } else { T::zero() };
    T::gemm_raw(m, k, n, T::one(), a, k, 1, b, n, 1, beta, c, n, 1);
}

/// `c (m×n) [+]= aᵀ · b` where `a` is stored row-major as k×m.
pub fn matmul_tn<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    let beta = if accumulate { T::one() } else { T::zero() };
    T::gemm_raw(m, k, n, T::one(), a, 1, m, b, n, 1, beta, c, n, 1);
}

/// `c (m×n) [+]= a · bᵀ` where `b` is stored row-major as n×k.
pub fn matmul_nt<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    let beta = if accumulate { T::one() } else { T::zero() };
    T::gemm_raw(m, k, n, T::one(), a, k, 1, b, 1, k, beta, c, n, 1);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = a[i * cols + j];
            }
        }
        t
    }

    #[test]
    fn matmul_variants_match_naive() {
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        matmul(m, k, n, &a, &b, &mut c, false);
        let at = transpose(m, k, &a);
        let mut c2 = vec![0.0; m * n];
        matmul_tn(m, k, n, &at, &b, &mut c2, false);
        let bt = transpose(k, n, &b);
        let mut c3 = vec![1.0; m * n];
        matmul_nt(m, k, n, &a, &bt, &mut c3, true);
        for i in 0..m * n {
            assert!((c[i] - want[i]).abs() < 1e-12);
            assert!((c2[i] - want[i]).abs() < 1e-12);
            assert!((c3[i] - want[i] - 1.0).abs() < 1e-12);
        }
    }
}

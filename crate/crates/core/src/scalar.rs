//! Floating point abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Layout of a dense row-major operand passed to [`Scalar::gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    /// Use the stored matrix as is.
    N,
    /// Use the transpose of the stored matrix.
    T,
}

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 converts to every float type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("float converts to f64")
    }

    #[inline]
    fn of_f32(x: f32) -> Self {
        Self::of(x as f64)
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self.as_f64() as f32
    }

    /// `c = op(a) * op(b) + beta * c` where `op(a)` is `m x k`, `op(b)` is
    /// `k x n` and `c` is `m x n`, all row-major.
    ///
    /// The default is a straightforward triple loop; `f32` and `f64` route to
    /// a blocked kernel.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        op_a: Op,
        b: &[Self],
        op_b: Op,
        beta: Self,
        c: &mut [Self],
    ) {
        check_gemm_dims(m, k, n, a.len(), b.len(), c.len());
        let at = |i: usize, p: usize| match op_a {
            Op::N => a[i * k + p],
            Op::T => a[p * m + i],
        };
        let bt = |p: usize, j: usize| match op_b {
            Op::N => b[p * n + j],
            Op::T => b[j * k + p],
        };
        for i in 0..m {
            for j in 0..n {
                let mut acc = Self::zero();
                for p in 0..k {
                    acc += at(i, p) * bt(p, j);
                }
                let out = &mut c[i * n + j];
                *out = if beta == Self::zero() {
                    acc
                } else {
                    acc + beta * *out
                };
            }
        }
    }
}

#[inline]
fn check_gemm_dims(m: usize, k: usize, n: usize, a: usize, b: usize, c: usize) {
    assert_eq!(a, m * k, "gemm: lhs has wrong size");
    assert_eq!(b, k * n, "gemm: rhs has wrong size");
    assert_eq!(c, m * n, "gemm: output has wrong size");
}

#[inline]
fn strides(op: Op, rows: usize, cols: usize) -> (isize, isize) {
    // strides of the logical (rows x cols) operand
    match op {
        Op::N => (cols as isize, 1),
        Op::T => (1, rows as isize),
    }
}

macro_rules! blocked_gemm {
    ($ty:ty, $kernel:path) => {
        impl Scalar for $ty {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                op_a: Op,
                b: &[Self],
                op_b: Op,
                beta: Self,
                c: &mut [Self],
            ) {
                check_gemm_dims(m, k, n, a.len(), b.len(), c.len());
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = strides(op_a, m, k);
                let (rsb, csb) = strides(op_b, k, n);
                // SAFETY: the slice lengths were checked against m, k, n above and
                // the strides describe exactly those row-major buffers.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
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

blocked_gemm!(f32, matrixmultiply::sgemm);
blocked_gemm!(f64, matrixmultiply::dgemm);

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};
use rustfft::FftNum;

/// Floating-point scalar the tensors are generic over.
///
/// Training runs in `f32`; gradient verification runs the same code paths in
/// `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + FftNum
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;

    fn erf(self) -> Self;

    /// In-place `exp` over a slice.
    fn exp_slice(xs: &mut [Self]);

    /// `C = alpha * A * B + beta * C` with arbitrary (non-negative) strides.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`; each slice starts at
    /// the matrix origin.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
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

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
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
    ($t:ty, $name:literal, $erf:path, $exp:path, $gemm:path) => {
        impl Real for $t {
            const NAME: &'static str = $name;

            #[inline]
            fn erf(self) -> Self {
                $erf(self)
            }

            #[inline]
            fn exp_slice(xs: &mut [Self]) {
                xs.iter_mut().for_each(|v| *v = $exp(*v));
            }

            fn gemm(
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
                assert!(span(m, k, rsa, csa) <= a.len(), "gemm: lhs out of bounds");
                assert!(span(k, n, rsb, csb) <= b.len(), "gemm: rhs out of bounds");
                assert!(span(m, n, rsc, csc) <= c.len(), "gemm: output out of bounds");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: all three views were bounds-checked above and `c`
                // is uniquely borrowed.
                unsafe {
                    $gemm(
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
                    );
                }
            }
        }
    };
}

impl_real!(f32, "f32", libm::erff, exp_f32, matrixmultiply::sgemm);
impl_real!(f64, "f64", libm::erf, f64::exp, matrixmultiply::dgemm);

/// Branch-free `exp` for `f32` that the compiler can vectorize: Cody-Waite
/// reduction `x = n ln2 + f` with `|f| <= ln2 / 2`, a degree-7 Taylor
/// polynomial for `e^f` and exponent bit assembly for `2^n`. Inputs are
/// clamped to `[-87, 88]`.
#[inline(always)]
fn exp_f32(x: f32) -> f32 {
    const ROUND: f32 = 12_582_912.0; // 1.5 * 2^23
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    let x = if x < -87.0 { -87.0 } else { x };
    let x = if x > 88.0 { 88.0 } else { x };
    let shifted = x * std::f32::consts::LOG2_E + ROUND;
    let n = shifted - ROUND;
    let f = x - n * LN2_HI - n * LN2_LO;
    let q = 1.0 / 5040.0;
    let q = q * f + 1.0 / 720.0;
    let q = q * f + 1.0 / 120.0;
    let q = q * f + 1.0 / 24.0;
    let q = q * f + 1.0 / 6.0;
    let q = q * f + 0.5;
    // the small tail is accumulated first so only the last add rounds near 1
    let p = 1.0 + (f + (f * f) * q);
    let ni = shifted.to_bits() as i32 - 0x4B40_0000;
    p * f32::from_bits(((ni + 127) << 23) as u32)
}

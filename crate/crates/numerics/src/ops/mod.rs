//! Differentiable ops, each implemented as a method on [`Graph`](crate::Graph).

mod attention;
mod conv;
mod linear;
mod norm;
mod pointwise;
mod reduce;
mod shape;

pub use attention::{softmax_rows, MhsaParams};
pub use norm::LAYER_NORM_EPS;

use crate::real::Real;

/// Splits `shape` into `(outer, mid, inner)` around the axis range `axes`.
pub(crate) fn split_axes(shape: &[usize], axes: std::ops::Range<usize>) -> (usize, usize, usize) {
    let outer = shape[..axes.start].iter().product();
    let mid = shape[axes.clone()].iter().product();
    let inner = shape[axes.end..].iter().product();
    (outer, mid, inner)
}

#[inline]
pub(crate) fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (ac, bc) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += ac[l] * bc[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

#[inline]
pub(crate) fn sum<T: Real>(a: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        for l in 0..8 {
            acc[l] += a[c * 8 + l];
        }
    }
    let mut tail = T::zero();
    for &v in &a[chunks * 8..] {
        tail += v;
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

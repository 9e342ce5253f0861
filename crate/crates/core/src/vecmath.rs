//! Small dense-vector helpers over plain slices.

use crate::scalar::Scalar;

/// Dot product. Panics on length mismatch in debug builds.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Euclidean norm.
#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance between two points.
#[inline]
pub fn dist_sq<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Euclidean distance between two points.
#[inline]
pub fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    dist_sq(a, b).sqrt()
}

/// `a - b` as a new vector.
#[inline]
pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// `a + c * b` as a new vector.
#[inline]
pub fn axpy<T: Scalar>(a: &[T], c: T, b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + c * y).collect()
}

/// In-place `a += c * b`.
#[inline]
pub fn axpy_mut<T: Scalar>(a: &mut [T], c: T, b: &[T]) {
    debug_assert_eq!(a.len(), b.len());
    for (x, &y) in a.iter_mut().zip(b) {
        *x += c * y;
    }
}

/// `c * a` as a new vector.
#[inline]
pub fn scale<T: Scalar>(a: &[T], c: T) -> Vec<T> {
    a.iter().map(|&x| c * x).collect()
}

/// Numerically stable `log(sum(exp(v)))`.
pub fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let max = v.iter().cloned().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum: T = v.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Max-subtracted softmax; entries whose exponent underflows are flushed to
/// exact zero so that downstream weighted sums stay clean.
pub fn stable_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut w: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let flush = crate::scalar::cast::<T>(1e-300);
    for x in w.iter_mut() {
        if *x < flush {
            *x = T::zero();
        }
    }
    let total: T = w.iter().cloned().sum();
    for x in w.iter_mut() {
        *x /= total;
    }
    w
}

//! Scalar abstraction and compensated summation.
//!
//! Every numerical kernel in this crate is generic over [`Real`], which is
//! implemented for `f32` and `f64`. Constants written in source as `f64`
//! literals are injected through [`Real::of`].

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating-point scalar used by fields, maps and solvers.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lift an `f64` literal into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    /// Lossy view as `f64`, for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Kahan compensated accumulator.
///
/// Reductions that feed stopping tests or duality audits accumulate through
/// this type in a fixed sequential order, so results are deterministic and
/// the rounding error stays at a few ulps of the true sum.
#[derive(Debug, Clone, Copy)]
pub struct Accumulator<T> {
    sum: T,
    comp: T,
}

impl<T: Real> Accumulator<T> {
    #[inline]
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> T {
        self.sum
    }
}

impl<T: Real> Default for Accumulator<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Compensated sum of an iterator in its given order.
pub fn kahan_sum<T: Real, I: IntoIterator<Item = T>>(items: I) -> T {
    let mut acc = Accumulator::new();
    for x in items {
        acc.add(x);
    }
    acc.total()
}

/// `x.powf(a)` with fast paths for the exponents that dominate the kernels.
///
/// Requires `x >= 0`; the half-integer branches keep solver inner loops off
/// the generic `powf` path.
#[inline]
pub fn fast_pow<T: Real>(x: T, a: T) -> T {
    if a == T::one() {
        x
    } else if a == T::of(2.0) {
        x * x
    } else if a == T::of(0.5) {
        x.sqrt()
    } else if a == T::of(1.5) {
        x * x.sqrt()
    } else {
        x.powf(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        // 1 + 1e-16 * 1e4 in plain f64 order loses the tail; Kahan keeps it.
        let mut acc = Accumulator::<f64>::new();
        acc.add(1.0);
        for _ in 0..10_000 {
            acc.add(1e-16);
        }
        assert!((acc.total() - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn fast_pow_matches_powf() {
        for &x in &[0.0f64, 1e-9, 0.3, 1.0, 7.5] {
            for &a in &[0.5, 1.0, 1.5, 2.0, 0.37, 2.31] {
                assert!((fast_pow(x, a) - x.powf(a)).abs() <= 1e-15 * (1.0 + x.powf(a)));
            }
        }
    }

    #[test]
    fn generic_over_f32() {
        let s: f32 = kahan_sum([1.0f32, 2.0, 3.0]);
        assert_eq!(s, 6.0);
    }
}

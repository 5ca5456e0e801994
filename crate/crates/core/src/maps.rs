//! Closed-form nonlinear maps of the congested transport model.
//!
//! The primal cost is `H(sigma) = |sigma|^p / p + |sigma|` and its convex
//! conjugate is `H*(z) = (|z| - 1)_+^q / q`, where `p` and `q` are conjugate
//! exponents. The gradient of the conjugate is the threshold map
//! `H_{q-1}(z) = (|z| - 1)_+^{q-1} z / |z|`, which vanishes on the closed
//! unit ball. The auxiliary families `H_a`, `V_gamma` and the potential `F`
//! drive the pointwise inequality oracles in [`crate::oracles`].
//!
//! All maps are dimension generic (`n >= 2`) and total; vectors are plain
//! slices with the Euclidean norm.

use crate::real::{fast_pow, Real};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MapsError {
    #[error("exponent q must lie in (1, inf); got {0}")]
    InvalidQ(f64),
    #[error("data smoothness alpha must lie in (0, 1); got {0}")]
    InvalidAlpha(f64),
    #[error("potential exponent gamma must lie in (-1/2, 0); got {0}")]
    GammaOutOfRange(f64),
}

/// Conjugate exponent pair `(q, p)` with `1/p + 1/q = 1`, plus an optional
/// data-smoothness order `alpha` used by the Besov branches.
///
/// `p` is always derived from `q`, so the conjugacy identity holds to
/// machine precision. `q < 2` is the singular branch, `q >= 2` the
/// degenerate one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents<T> {
    q: T,
    p: T,
    alpha: Option<T>,
}

impl<T: Real> Exponents<T> {
    pub fn new(q: T) -> Result<Self, MapsError> {
        if !(q > T::one()) || !q.is_finite() {
            return Err(MapsError::InvalidQ(q.as_f64()));
        }
        Ok(Self {
            q,
            p: q / (q - T::one()),
            alpha: None,
        })
    }

    pub fn with_alpha(q: T, alpha: T) -> Result<Self, MapsError> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(MapsError::InvalidAlpha(alpha.as_f64()));
        }
        let mut e = Self::new(q)?;
        e.alpha = Some(alpha);
        Ok(e)
    }

    #[inline]
    pub fn q(&self) -> T {
        self.q
    }

    #[inline]
    pub fn p(&self) -> T {
        self.p
    }

    #[inline]
    pub fn alpha(&self) -> Option<T> {
        self.alpha
    }

    /// `1 < q < 2`: the conjugate gradient is Hoelder but not Lipschitz.
    #[inline]
    pub fn is_singular(&self) -> bool {
        self.q < T::of(2.0)
    }

    /// `q >= 2`: the diffusion coefficient degenerates on the unit ball.
    #[inline]
    pub fn is_degenerate(&self) -> bool {
        !self.is_singular()
    }
}

/// Euclidean norm of a slice.
#[inline]
pub fn norm<T: Real>(v: &[T]) -> T {
    let mut s = T::zero();
    for &x in v {
        s = s + x * x;
    }
    s.sqrt()
}

/// Euclidean inner product.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s = s + x * y;
    }
    s
}

#[inline]
pub fn positive_part<T: Real>(t: T) -> T {
    t.max(T::zero())
}

/// Scalar profile `(t - 1)_+^a` of the threshold maps.
#[inline]
pub fn excess_profile<T: Real>(t: T, a: T) -> T {
    let ex = t - T::one();
    if ex > T::zero() {
        fast_pow(ex, a)
    } else {
        T::zero()
    }
}

/// Primal transport cost `H(sigma) = |sigma|^p / p + |sigma|`.
pub fn cost_h<T: Real>(sigma: &[T], e: &Exponents<T>) -> T {
    debug_assert!(sigma.len() >= 2);
    let r = norm(sigma);
    if r == T::zero() {
        return T::zero();
    }
    fast_pow(r, e.p()) / e.p() + r
}

/// Conjugate cost `H*(z) = (|z| - 1)_+^q / q`; identically zero on the
/// closed unit ball.
pub fn conjugate_h_star<T: Real>(z: &[T], e: &Exponents<T>) -> T {
    debug_assert!(z.len() >= 2);
    excess_profile(norm(z), e.q()) / e.q()
}

/// Threshold map `H_a(xi) = (|xi| - 1)_+^a xi / |xi|` written into `out`.
///
/// The positive part forces the limit 0 at the origin, so the 0/0 at
/// `xi = 0` is resolved by convention and the map is continuous on all of
/// `R^n`.
pub fn h_map_into<T: Real>(xi: &[T], a: T, out: &mut [T]) {
    debug_assert!(a > T::zero());
    debug_assert_eq!(xi.len(), out.len());
    let r = norm(xi);
    let ex = r - T::one();
    if ex <= T::zero() {
        for o in out.iter_mut() {
            *o = T::zero();
        }
        return;
    }
    let scale = fast_pow(ex, a) / r;
    for (o, &x) in out.iter_mut().zip(xi) {
        *o = scale * x;
    }
}

/// Allocating form of [`h_map_into`].
pub fn h_map<T: Real>(xi: &[T], a: T) -> Vec<T> {
    let mut out = vec![T::zero(); xi.len()];
    h_map_into(xi, a, &mut out);
    out
}

/// Gradient of the conjugate cost, `H_{q-1}`.
pub fn grad_h_star<T: Real>(z: &[T], e: &Exponents<T>) -> Vec<T> {
    h_map(z, e.q() - T::one())
}

/// `V_gamma(xi) = (mu^2 + |xi|^2)^{gamma/2} xi` for `gamma > 0`, `mu >= 0`.
pub fn v_gamma<T: Real>(xi: &[T], gamma: T, mu: T) -> Vec<T> {
    debug_assert!(gamma > T::zero());
    debug_assert!(mu >= T::zero());
    let w = (mu * mu + dot(xi, xi)).powf(gamma / T::of(2.0));
    xi.iter().map(|&x| w * x).collect()
}

/// Potential `F(zeta) = (mu^2 + |zeta|^2)^{gamma+1} / (2(gamma+1))`, defined
/// for `gamma` in `(-1/2, 0)`; its gradient is `(mu^2 + |zeta|^2)^gamma zeta`.
pub fn f_potential<T: Real>(zeta: &[T], gamma: T, mu: T) -> Result<T, MapsError> {
    if !(gamma > T::of(-0.5) && gamma < T::zero()) {
        return Err(MapsError::GammaOutOfRange(gamma.as_f64()));
    }
    debug_assert!(mu >= T::zero());
    let s = mu * mu + dot(zeta, zeta);
    Ok(s.powf(gamma + T::one()) / (T::of(2.0) * (gamma + T::one())))
}

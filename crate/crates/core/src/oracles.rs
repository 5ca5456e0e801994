//! Executable forms of the pointwise vector inequalities behind the model,
//! with empirical calibration of the constants they leave implicit.
//!
//! Each operation evaluates one inequality on a concrete pair `(xi, eta)`
//! and returns the slack (gap) or the dimensionless comparison ratio:
//!
//! * [`giaquinta_ratio`]: two-sided Lipschitz comparison for `V_gamma`,
//!   `gamma > 0`.
//! * [`fusco_bounds`] / [`fusco_monotonicity_gap`]: the Acerbi--Fusco
//!   comparison for `(mu^2 + |.|^2)^gamma id` with explicit lower constant
//!   `2 gamma + 1`, `gamma` in `(-1/2, 0)`.
//! * [`jolly_ratio`]: comparison of the threshold maps `H_a` and `H_eps`
//!   at two exponents `0 < a < eps`.
//! * [`brasco_gaps`]: monotonicity and Lipschitz bounds linking `H_{q-1}`
//!   and `H_{q/2}` for `q >= 2`.
//! * [`singular_monotonicity_gap`] / [`calibrate_beta`]: the same
//!   monotonicity in the singular range `1 < q < 2`, whose constant
//!   `beta(q, n)` is only known to be positive and is estimated here by a
//!   seeded sweep.
//!
//! Sampling deliberately mixes uniform pairs with pairs straddling the unit
//! sphere and near-collinear pairs; the inequalities degenerate exactly in
//! those regimes and uniform sampling alone misses them.

use crate::maps::{dot, h_map_into, norm, Exponents};
use crate::real::Real;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

/// Gap below which a checked inequality instance is considered violated.
pub const GAP_TOLERANCE: f64 = -1e-12;

/// Ratios with denominator below this floor are reported as undefined
/// rather than amplified into bogus constant estimates.
pub const DENOMINATOR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("ratio undefined for coincident arguments xi = eta")]
    CoincidentArguments,
    #[error("gamma {0} outside the admissible range {1}")]
    GammaOutOfRange(f64, &'static str),
    #[error("exponents must satisfy 0 < a < eps; got a={0}, eps={1}")]
    BadExponentPair(f64, f64),
    #[error("q {0} outside the admissible range {1}")]
    QOutOfRange(f64, &'static str),
    #[error("formula singular at mu = 0 with a vanishing argument")]
    SingularAtOrigin,
    #[error("beta must be positive; got {0}")]
    NonPositiveBeta(f64),
    #[error("calibration needs at least {min} samples; got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("fewer than 1% of samples had a usable denominator")]
    DegenerateSample,
}

/// Slack report for one checked inequality instance.
///
/// `gap` is left side minus required lower bound; an instance with
/// `gap < -1e-12` is failing and keeps the witness pair for diagnosis.
#[derive(Debug, Clone)]
pub struct GapReport<T> {
    pub gap: T,
    pub ratio: T,
    pub witness: (Vec<T>, Vec<T>),
}

impl<T: Real> GapReport<T> {
    pub fn is_failing(&self) -> bool {
        self.gap.as_f64() < GAP_TOLERANCE
    }
}

/// Empirical interval for an inequality constant, reproducible from `seed`.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult<T> {
    pub constant_low: T,
    pub constant_high: T,
    pub sample_count: usize,
    pub seed: u64,
}

/// Outcome of a ratio whose numerator and denominator may both vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioOutcome<T> {
    Defined(T),
    Undefined,
}

impl<T> RatioOutcome<T> {
    pub fn defined(self) -> Option<T> {
        match self {
            RatioOutcome::Defined(v) => Some(v),
            RatioOutcome::Undefined => None,
        }
    }
}

fn check_pair<T: Real>(xi: &[T], eta: &[T]) -> Result<(), OracleError> {
    debug_assert!(xi.len() >= 2 && xi.len() == eta.len());
    if xi == eta {
        return Err(OracleError::CoincidentArguments);
    }
    Ok(())
}

/// `|V_gamma(xi) - V_gamma(eta)| / ((mu^2 + |xi|^2 + |eta|^2)^{gamma/2} |xi - eta|)`.
///
/// Bounded above and below by positive constants depending only on `gamma`.
pub fn giaquinta_ratio<T: Real>(
    xi: &[T],
    eta: &[T],
    gamma: T,
    mu: T,
) -> Result<T, OracleError> {
    check_pair(xi, eta)?;
    if !(gamma > T::zero()) {
        return Err(OracleError::GammaOutOfRange(gamma.as_f64(), "(0, inf)"));
    }
    let (nx2, ne2) = (dot(xi, xi), dot(eta, eta));
    let half = gamma / T::of(2.0);
    let wx = (mu * mu + nx2).powf(half);
    let we = (mu * mu + ne2).powf(half);
    let mut diff2 = T::zero();
    let mut dist2 = T::zero();
    for k in 0..xi.len() {
        let d = wx * xi[k] - we * eta[k];
        diff2 = diff2 + d * d;
        let s = xi[k] - eta[k];
        dist2 = dist2 + s * s;
    }
    let denom = (mu * mu + nx2 + ne2).powf(half) * dist2.sqrt();
    Ok(diff2.sqrt() / denom)
}

/// Vector `(mu^2 + |z|^2)^gamma z`, the gradient of the potential `F`.
fn scaled_vector<T: Real>(z: &[T], gamma: T, mu: T, out: &mut [T]) {
    let w = (mu * mu + dot(z, z)).powf(gamma);
    for (o, &x) in out.iter_mut().zip(z) {
        *o = w * x;
    }
}

fn fusco_preconditions<T: Real>(
    xi: &[T],
    eta: &[T],
    gamma: T,
    mu: T,
) -> Result<(), OracleError> {
    check_pair(xi, eta)?;
    if !(gamma > T::of(-0.5) && gamma < T::zero()) {
        return Err(OracleError::GammaOutOfRange(gamma.as_f64(), "(-1/2, 0)"));
    }
    if mu == T::zero() && (norm(xi) == T::zero() || norm(eta) == T::zero()) {
        return Err(OracleError::SingularAtOrigin);
    }
    Ok(())
}

/// Lower-bound slack of the Acerbi--Fusco two-sided comparison.
///
/// The middle quantity is
/// `|(mu^2+|xi|^2)^gamma xi - (mu^2+|eta|^2)^gamma eta| / (mu^2+|xi|^2+|eta|^2)^gamma`
/// and the explicit lower bound is `(2 gamma + 1) |xi - eta|`. The returned
/// `ratio` (middle over `|xi - eta|`) feeds upper-constant calibration.
pub fn fusco_bounds<T: Real>(
    xi: &[T],
    eta: &[T],
    gamma: T,
    mu: T,
) -> Result<GapReport<T>, OracleError> {
    fusco_preconditions(xi, eta, gamma, mu)?;
    let n = xi.len();
    let mut gx = vec![T::zero(); n];
    let mut ge = vec![T::zero(); n];
    scaled_vector(xi, gamma, mu, &mut gx);
    scaled_vector(eta, gamma, mu, &mut ge);
    let mut diff2 = T::zero();
    let mut dist2 = T::zero();
    for k in 0..n {
        let d = gx[k] - ge[k];
        diff2 = diff2 + d * d;
        let s = xi[k] - eta[k];
        dist2 = dist2 + s * s;
    }
    let dist = dist2.sqrt();
    let middle =
        diff2.sqrt() / (mu * mu + dot(xi, xi) + dot(eta, eta)).powf(gamma);
    let lower = (T::of(2.0) * gamma + T::one()) * dist;
    Ok(GapReport {
        gap: middle - lower,
        ratio: middle / dist,
        witness: (xi.to_vec(), eta.to_vec()),
    })
}

/// Monotonicity slack
/// `<grad F(xi) - grad F(eta), xi - eta> - (2 gamma + 1)(mu^2+|xi|^2+|eta|^2)^gamma |xi-eta|^2`.
pub fn fusco_monotonicity_gap<T: Real>(
    xi: &[T],
    eta: &[T],
    gamma: T,
    mu: T,
) -> Result<T, OracleError> {
    if xi == eta {
        return Ok(T::zero());
    }
    fusco_preconditions(xi, eta, gamma, mu)?;
    let n = xi.len();
    let mut gx = vec![T::zero(); n];
    let mut ge = vec![T::zero(); n];
    scaled_vector(xi, gamma, mu, &mut gx);
    scaled_vector(eta, gamma, mu, &mut ge);
    let mut inner = T::zero();
    let mut dist2 = T::zero();
    for k in 0..n {
        let s = xi[k] - eta[k];
        inner = inner + (gx[k] - ge[k]) * s;
        dist2 = dist2 + s * s;
    }
    let weight = (mu * mu + dot(xi, xi) + dot(eta, eta)).powf(gamma);
    Ok(inner - (T::of(2.0) * gamma + T::one()) * weight * dist2)
}

/// `|H_a(xi) - H_a(eta)| / (((|xi|-1)_+^eps + (|eta|-1)_+^eps)^{(a-eps)/eps} |H_eps(xi) - H_eps(eta)|)`
/// for `0 < a < eps`.
///
/// Undefined when both arguments lie in the closed unit ball (both maps
/// vanish) or when `H_eps(xi) = H_eps(eta)`.
pub fn jolly_ratio<T: Real>(
    xi: &[T],
    eta: &[T],
    a: T,
    eps: T,
) -> Result<RatioOutcome<T>, OracleError> {
    if !(a > T::zero() && a < eps) {
        return Err(OracleError::BadExponentPair(a.as_f64(), eps.as_f64()));
    }
    let n = xi.len();
    let (rx, re) = (norm(xi), norm(eta));
    let one = T::one();
    if rx <= one && re <= one {
        return Ok(RatioOutcome::Undefined);
    }
    let mut ha_x = vec![T::zero(); n];
    let mut ha_e = vec![T::zero(); n];
    let mut he_x = vec![T::zero(); n];
    let mut he_e = vec![T::zero(); n];
    h_map_into(xi, a, &mut ha_x);
    h_map_into(eta, a, &mut ha_e);
    h_map_into(xi, eps, &mut he_x);
    h_map_into(eta, eps, &mut he_e);
    let mut num2 = T::zero();
    let mut den2 = T::zero();
    for k in 0..n {
        let da = ha_x[k] - ha_e[k];
        num2 = num2 + da * da;
        let de = he_x[k] - he_e[k];
        den2 = den2 + de * de;
    }
    let he_dist = den2.sqrt();
    if he_dist.as_f64() <= DENOMINATOR_FLOOR {
        return Ok(RatioOutcome::Undefined);
    }
    let s = (rx - one).max(T::zero()).powf(eps) + (re - one).max(T::zero()).powf(eps);
    let weight = s.powf((a - eps) / eps);
    Ok(RatioOutcome::Defined(num2.sqrt() / (weight * he_dist)))
}

/// Gaps of the two estimates linking `H_{q-1}` and `H_{q/2}` for `q >= 2`:
///
/// * `<H_{q-1}(xi) - H_{q-1}(eta), xi - eta> - (4/q^2) |H_{q/2}(xi) - H_{q/2}(eta)|^2`
/// * `(q-1)(|H_{q/2}(xi)|^{(q-2)/q} + |H_{q/2}(eta)|^{(q-2)/q}) |H_{q/2}(xi) - H_{q/2}(eta)|
///    - |H_{q-1}(xi) - H_{q-1}(eta)|`
pub fn brasco_gaps<T: Real>(
    xi: &[T],
    eta: &[T],
    e: &Exponents<T>,
) -> Result<(T, T), OracleError> {
    let q = e.q();
    if q < T::of(2.0) {
        return Err(OracleError::QOutOfRange(q.as_f64(), "[2, inf)"));
    }
    let n = xi.len();
    let one = T::one();
    let mut hq1_x = vec![T::zero(); n];
    let mut hq1_e = vec![T::zero(); n];
    let mut hh_x = vec![T::zero(); n];
    let mut hh_e = vec![T::zero(); n];
    h_map_into(xi, q - one, &mut hq1_x);
    h_map_into(eta, q - one, &mut hq1_e);
    let half_q = q / T::of(2.0);
    h_map_into(xi, half_q, &mut hh_x);
    h_map_into(eta, half_q, &mut hh_e);
    let mut inner = T::zero();
    let mut dh2 = T::zero();
    let mut dq2 = T::zero();
    for k in 0..n {
        let dq1 = hq1_x[k] - hq1_e[k];
        inner = inner + dq1 * (xi[k] - eta[k]);
        dq2 = dq2 + dq1 * dq1;
        let dh = hh_x[k] - hh_e[k];
        dh2 = dh2 + dh * dh;
    }
    let first = inner - T::of(4.0) / (q * q) * dh2;
    // 0^0 = 1 keeps the q = 2 case consistent.
    let expo = (q - T::of(2.0)) / q;
    let weight = norm(&hh_x).powf(expo) + norm(&hh_e).powf(expo);
    let second = (q - one) * weight * dh2.sqrt() - dq2.sqrt();
    Ok((first, second))
}

/// Monotonicity slack `<H_{q-1}(xi) - H_{q-1}(eta), xi - eta> - beta |H_{q/2}(xi) - H_{q/2}(eta)|^2`
/// in the singular range `1 < q < 2`, for a caller-supplied `beta > 0`.
pub fn singular_monotonicity_gap<T: Real>(
    xi: &[T],
    eta: &[T],
    e: &Exponents<T>,
    beta: T,
) -> Result<T, OracleError> {
    let q = e.q();
    if !(q > T::one() && q < T::of(2.0)) {
        return Err(OracleError::QOutOfRange(q.as_f64(), "(1, 2)"));
    }
    if !(beta > T::zero()) {
        return Err(OracleError::NonPositiveBeta(beta.as_f64()));
    }
    let n = xi.len();
    let one = T::one();
    let mut hq1_x = vec![T::zero(); n];
    let mut hq1_e = vec![T::zero(); n];
    let mut hh_x = vec![T::zero(); n];
    let mut hh_e = vec![T::zero(); n];
    h_map_into(xi, q - one, &mut hq1_x);
    h_map_into(eta, q - one, &mut hq1_e);
    let half_q = q / T::of(2.0);
    h_map_into(xi, half_q, &mut hh_x);
    h_map_into(eta, half_q, &mut hh_e);
    let mut inner = T::zero();
    let mut dh2 = T::zero();
    for k in 0..n {
        inner = inner + (hq1_x[k] - hq1_e[k]) * (xi[k] - eta[k]);
        let dh = hh_x[k] - hh_e[k];
        dh2 = dh2 + dh * dh;
    }
    Ok(inner - beta * dh2)
}

/// Sampling regimes for inequality sweeps.
#[derive(Debug, Clone, Copy)]
pub enum SampleMode {
    /// 50% uniform in `[-10, 10]^n`, 25% straddling the unit sphere with
    /// radii in `[0.5, 1.5]`, 25% near-collinear (`eta = xi + 1e-3 * u`).
    Mixture,
    /// Both radii uniform in `(lo, hi]`, directions uniform; used to
    /// calibrate ratio constants away from the degenerate ball.
    Annulus { lo: f64, hi: f64 },
}

/// Seeded generator of test pairs for the inequality sweeps.
pub struct PairSampler<T> {
    rng: ChaCha8Rng,
    mode: SampleMode,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Real> PairSampler<T> {
    pub fn new(dim: usize, seed: u64, mode: SampleMode) -> Self {
        assert!(dim >= 2, "vectors must have dimension >= 2");
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            mode,
            _marker: std::marker::PhantomData,
        }
    }

    fn unit_direction(&mut self, out: &mut [T]) {
        loop {
            let mut s = 0.0f64;
            for o in out.iter_mut() {
                let g: f64 = self.rng.sample(StandardNormal);
                *o = T::of(g);
                s += g * g;
            }
            if s > 1e-12 {
                let inv = T::of(1.0 / s.sqrt());
                for o in out.iter_mut() {
                    *o = *o * inv;
                }
                return;
            }
        }
    }

    fn uniform_box(&mut self, out: &mut [T]) {
        for o in out.iter_mut() {
            *o = T::of(self.rng.gen_range(-10.0..10.0));
        }
    }

    fn sphere_straddle(&mut self, out: &mut [T]) {
        let r = self.rng.gen_range(0.5..1.5);
        self.unit_direction(out);
        for o in out.iter_mut() {
            *o = *o * T::of(r);
        }
    }

    /// Fill `xi`, `eta` with the next pair.
    pub fn next_pair(&mut self, xi: &mut [T], eta: &mut [T]) {
        match self.mode {
            SampleMode::Mixture => {
                let u: f64 = self.rng.gen();
                if u < 0.5 {
                    self.uniform_box(xi);
                    self.uniform_box(eta);
                } else if u < 0.75 {
                    self.sphere_straddle(xi);
                    self.sphere_straddle(eta);
                } else {
                    self.uniform_box(xi);
                    for (e, &x) in eta.iter_mut().zip(xi.iter()) {
                        let d = self.rng.gen_range(-1.0..1.0);
                        *e = x + T::of(1e-3 * d);
                    }
                }
            }
            SampleMode::Annulus { lo, hi } => {
                for v in [&mut *xi, &mut *eta] {
                    let r = self.rng.gen_range(lo..=hi);
                    self.unit_direction(v);
                    for o in v.iter_mut() {
                        *o = *o * T::of(r);
                    }
                }
            }
        }
    }
}

/// Empirical `beta(q, n)` for the singular monotonicity estimate: the
/// sample infimum of the defining ratio, shrunk by a 0.99 safety factor.
///
/// Only pairs with `|H_{q/2}(xi) - H_{q/2}(eta)|^2` above the denominator
/// floor enter; fewer than 1% usable pairs is an error. `constant_high`
/// records the sample supremum of the same ratio.
pub fn calibrate_beta<T: Real>(
    e: &Exponents<T>,
    samples: usize,
    seed: u64,
) -> Result<CalibrationResult<T>, OracleError> {
    const MIN_SAMPLES: usize = 100_000;
    let q = e.q();
    if !(q > T::one() && q < T::of(2.0)) {
        return Err(OracleError::QOutOfRange(q.as_f64(), "(1, 2)"));
    }
    if samples < MIN_SAMPLES {
        return Err(OracleError::TooFewSamples {
            min: MIN_SAMPLES,
            got: samples,
        });
    }
    let dim = 2;
    let one = T::one();
    let half_q = q / T::of(2.0);
    let mut sampler = PairSampler::<T>::new(dim, seed, SampleMode::Mixture);
    let mut xi = vec![T::zero(); dim];
    let mut eta = vec![T::zero(); dim];
    let mut hq1_x = vec![T::zero(); dim];
    let mut hq1_e = vec![T::zero(); dim];
    let mut hh_x = vec![T::zero(); dim];
    let mut hh_e = vec![T::zero(); dim];
    let mut lo = T::infinity();
    let mut hi = T::zero();
    let mut usable = 0usize;
    for _ in 0..samples {
        sampler.next_pair(&mut xi, &mut eta);
        h_map_into(&xi, q - one, &mut hq1_x);
        h_map_into(&eta, q - one, &mut hq1_e);
        h_map_into(&xi, half_q, &mut hh_x);
        h_map_into(&eta, half_q, &mut hh_e);
        let mut inner = T::zero();
        let mut dh2 = T::zero();
        for k in 0..dim {
            inner = inner + (hq1_x[k] - hq1_e[k]) * (xi[k] - eta[k]);
            let dh = hh_x[k] - hh_e[k];
            dh2 = dh2 + dh * dh;
        }
        if dh2.as_f64() <= DENOMINATOR_FLOOR {
            continue;
        }
        usable += 1;
        let ratio = inner / dh2;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    if usable * 100 < samples {
        return Err(OracleError::DegenerateSample);
    }
    Ok(CalibrationResult {
        constant_low: lo * T::of(0.99),
        constant_high: hi,
        sample_count: samples,
        seed,
    })
}

/// Empirical interval for the two-exponent threshold comparison ratio,
/// sampled over an annulus of radii in `(lo, hi]`.
pub fn calibrate_jolly<T: Real>(
    a: T,
    eps: T,
    radii: (f64, f64),
    samples: usize,
    seed: u64,
) -> Result<CalibrationResult<T>, OracleError> {
    if !(a > T::zero() && a < eps) {
        return Err(OracleError::BadExponentPair(a.as_f64(), eps.as_f64()));
    }
    let dim = 2;
    let mut sampler = PairSampler::<T>::new(
        dim,
        seed,
        SampleMode::Annulus {
            lo: radii.0,
            hi: radii.1,
        },
    );
    let mut xi = vec![T::zero(); dim];
    let mut eta = vec![T::zero(); dim];
    let mut lo = T::infinity();
    let mut hi = T::zero();
    let mut usable = 0usize;
    for _ in 0..samples {
        sampler.next_pair(&mut xi, &mut eta);
        if let RatioOutcome::Defined(r) = jolly_ratio(&xi, &eta, a, eps)? {
            usable += 1;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if usable * 100 < samples {
        return Err(OracleError::DegenerateSample);
    }
    Ok(CalibrationResult {
        constant_low: lo,
        constant_high: hi,
        sample_count: samples,
        seed,
    })
}

/// Empirical interval for the `V_gamma` comparison ratio under mixture
/// sampling.
pub fn calibrate_giaquinta<T: Real>(
    gamma: T,
    mu: T,
    samples: usize,
    seed: u64,
) -> Result<CalibrationResult<T>, OracleError> {
    let dim = 2;
    let mut sampler = PairSampler::<T>::new(dim, seed, SampleMode::Mixture);
    let mut xi = vec![T::zero(); dim];
    let mut eta = vec![T::zero(); dim];
    let mut lo = T::infinity();
    let mut hi = T::zero();
    let mut usable = 0usize;
    for _ in 0..samples {
        sampler.next_pair(&mut xi, &mut eta);
        if xi == eta || (mu == T::zero() && (norm(&xi) == T::zero() && norm(&eta) == T::zero())) {
            continue;
        }
        let r = giaquinta_ratio(&xi, &eta, gamma, mu)?;
        if !r.is_finite() {
            continue;
        }
        usable += 1;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    if usable * 100 < samples {
        return Err(OracleError::DegenerateSample);
    }
    Ok(CalibrationResult {
        constant_low: lo,
        constant_high: hi,
        sample_count: samples,
        seed,
    })
}

/// One row of a sweep report; exported as CSV by the harness.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    /// Inequality family: giaquinta, fusco, jolly, brasco, singular.
    pub family: &'static str,
    /// Which bound within the family was checked.
    pub check: &'static str,
    pub params: String,
    pub samples: usize,
    pub seed: u64,
    /// Minimum observed slack (for ratio checks, the minimum ratio).
    pub min_gap: f64,
    pub constant_low: f64,
    pub constant_high: f64,
}

impl SweepRow {
    pub fn csv_header() -> &'static str {
        "family,check,params,samples,seed,min_gap,constant_low,constant_high"
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:e},{:e},{:e}",
            self.family,
            self.check,
            self.params,
            self.samples,
            self.seed,
            self.min_gap,
            self.constant_low,
            self.constant_high
        )
    }
}

/// Sweep of the `V_gamma` ratio; `min_gap` is the minimum ratio observed.
pub fn sweep_giaquinta(gamma: f64, mu: f64, samples: usize, seed: u64) -> SweepRow {
    let cal = calibrate_giaquinta::<f64>(gamma, mu, samples, seed)
        .expect("mixture sampling always yields usable pairs");
    SweepRow {
        family: "giaquinta",
        check: "ratio_bounds",
        params: format!("gamma={gamma};mu={mu}"),
        samples,
        seed,
        min_gap: cal.constant_low,
        constant_low: cal.constant_low,
        constant_high: cal.constant_high,
    }
}

/// Sweep of the Acerbi--Fusco lower bound and monotonicity gaps.
pub fn sweep_fusco(gamma: f64, mu: f64, samples: usize, seed: u64) -> Vec<SweepRow> {
    let mut sampler = PairSampler::<f64>::new(2, seed, SampleMode::Mixture);
    let mut xi = [0.0; 2];
    let mut eta = [0.0; 2];
    let mut min_lower = f64::INFINITY;
    let mut min_mono = f64::INFINITY;
    let mut ratio_lo = f64::INFINITY;
    let mut ratio_hi = 0.0f64;
    let mut used = 0usize;
    for _ in 0..samples {
        sampler.next_pair(&mut xi, &mut eta);
        if xi == eta || (mu == 0.0 && (norm(&xi) == 0.0 || norm(&eta) == 0.0)) {
            continue;
        }
        used += 1;
        let rep = fusco_bounds(&xi, &eta, gamma, mu).expect("preconditions checked");
        min_lower = min_lower.min(rep.gap);
        ratio_lo = ratio_lo.min(rep.ratio);
        ratio_hi = ratio_hi.max(rep.ratio);
        let g = fusco_monotonicity_gap(&xi, &eta, gamma, mu).expect("preconditions checked");
        min_mono = min_mono.min(g);
    }
    let params = format!("gamma={gamma};mu={mu}");
    vec![
        SweepRow {
            family: "fusco",
            check: "lower_bound",
            params: params.clone(),
            samples: used,
            seed,
            min_gap: min_lower,
            constant_low: ratio_lo,
            constant_high: ratio_hi,
        },
        SweepRow {
            family: "fusco",
            check: "monotonicity",
            params,
            samples: used,
            seed,
            min_gap: min_mono,
            constant_low: ratio_lo,
            constant_high: ratio_hi,
        },
    ]
}

/// Sweep of the two-exponent threshold ratio over an annulus.
pub fn sweep_jolly(a: f64, eps: f64, samples: usize, seed: u64) -> SweepRow {
    let cal = calibrate_jolly::<f64>(a, eps, (1.0, 10.0), samples, seed)
        .expect("annulus sampling always yields usable pairs");
    SweepRow {
        family: "jolly",
        check: "ratio_bounds",
        params: format!("a={a};eps={eps}"),
        samples,
        seed,
        min_gap: cal.constant_low,
        constant_low: cal.constant_low,
        constant_high: cal.constant_high,
    }
}

/// Sweep of both estimates for `q >= 2`. When `q = 2` the deterministic
/// tight pair `xi = (2, 0)`, `eta = (1, 0)` is injected so the report
/// contains an exactly-zero monotonicity gap.
pub fn sweep_brasco(q: f64, samples: usize, seed: u64) -> Vec<SweepRow> {
    let e = Exponents::new(q).expect("q validated by caller");
    let mut sampler = PairSampler::<f64>::new(2, seed, SampleMode::Mixture);
    let mut xi = [0.0; 2];
    let mut eta = [0.0; 2];
    let mut min_first = f64::INFINITY;
    let mut min_second = f64::INFINITY;
    for _ in 0..samples {
        sampler.next_pair(&mut xi, &mut eta);
        let (g1, g2) = brasco_gaps(&xi, &eta, &e).expect("q >= 2");
        min_first = min_first.min(g1);
        min_second = min_second.min(g2);
    }
    if q == 2.0 {
        let (g1, g2) = brasco_gaps(&[2.0, 0.0], &[1.0, 0.0], &e).expect("q >= 2");
        min_first = min_first.min(g1);
        min_second = min_second.min(g2);
    }
    let params = format!("q={q}");
    vec![
        SweepRow {
            family: "brasco",
            check: "monotonicity",
            params: params.clone(),
            samples,
            seed,
            min_gap: min_first,
            constant_low: 4.0 / (q * q),
            constant_high: q - 1.0,
        },
        SweepRow {
            family: "brasco",
            check: "lipschitz",
            params,
            samples,
            seed,
            min_gap: min_second,
            constant_low: 4.0 / (q * q),
            constant_high: q - 1.0,
        },
    ]
}

/// Sweep of the singular monotonicity estimate: checks nonnegativity of the
/// raw inner product, calibrates `beta(q, 2)` on `seed`, then revalidates
/// the gap with that beta on held-out pairs drawn from `seed + 1`.
pub fn sweep_singular(q: f64, samples: usize, seed: u64) -> Vec<SweepRow> {
    let e = Exponents::new(q).expect("q validated by caller");
    let cal =
        calibrate_beta::<f64>(&e, samples.max(100_000), seed).expect("mixture sample is usable");
    let beta = cal.constant_low;
    let mut sampler = PairSampler::<f64>::new(2, seed + 1, SampleMode::Mixture);
    let mut xi = [0.0; 2];
    let mut eta = [0.0; 2];
    let mut min_inner = f64::INFINITY;
    let mut min_gap = f64::INFINITY;
    for _ in 0..samples {
        sampler.next_pair(&mut xi, &mut eta);
        let g = singular_monotonicity_gap(&xi, &eta, &e, beta).expect("q in (1,2), beta > 0");
        min_gap = min_gap.min(g);
        // The raw inner product is the gap with beta weight removed.
        let hx = crate::maps::h_map(&xi, q - 1.0);
        let he = crate::maps::h_map(&eta, q - 1.0);
        let inner: f64 = (0..2).map(|k| (hx[k] - he[k]) * (xi[k] - eta[k])).sum();
        min_inner = min_inner.min(inner);
    }
    let params = format!("q={q}");
    vec![
        SweepRow {
            family: "singular",
            check: "inner_product",
            params: params.clone(),
            samples,
            seed: seed + 1,
            min_gap: min_inner,
            constant_low: cal.constant_low,
            constant_high: cal.constant_high,
        },
        SweepRow {
            family: "singular",
            check: "beta_heldout",
            params,
            samples,
            seed: seed + 1,
            min_gap,
            constant_low: cal.constant_low,
            constant_high: cal.constant_high,
        },
    ]
}

//! Windowed difference-quotient statistics and scaling-exponent fits.
//!
//! For a solved field the regularity-carrying quantity is
//! `H_{q/2}(grad u)`. Its translated second moment over an interior window,
//! `M(h) = integral over B_{R/2} of |v(x + h e_s) - v(x)|^2`, decays like
//! `h^{2 lambda}` exactly when `v` has fractional smoothness `lambda`
//! measured in `L^2`. This module computes those moments for whole-cell
//! shifts (no interpolation, so the translation and product/parts
//! identities are exact), fits the decay exponent on a log-log ladder, and
//! audits the solved fields against the branch-specific growth bounds.

use crate::grid::{Boundary, CellSampled, GridDomain, ScalarField};
use crate::maps::Exponents;
use crate::oracles::{calibrate_jolly, CalibrationResult};
use crate::problems::{DataClass, ProblemSpec};
use crate::real::{fast_pow, Accumulator, Real};
use crate::solver::Solution;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BesovError {
    #[error("whole-field translation requires periodic boundaries")]
    TranslateNeedsPeriodic,
    #[error("shift of {shift} cells exceeds the window margin of {margin} cells")]
    ShiftExceedsMargin { shift: usize, margin: usize },
    #[error("window radius {radius} with margin {margin} does not fit the domain")]
    WindowDoesNotFit { radius: f64, margin: f64 },
    #[error("window selects no cells")]
    EmptyWindow,
    #[error("shift ladder is empty")]
    EmptyLadder,
    #[error("exponent fits need at least {min} steps; got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("branch {branch} is inconsistent with q = {q}")]
    BranchMismatch { branch: &'static str, q: f64 },
    #[error("branch {0} needs a data smoothness order alpha")]
    MissingAlpha(&'static str),
    #[error("data class of the instance does not match the requested branch")]
    DataClassMismatch,
}

/// Interior measurement window: concentric balls of radius `R` (norms) and
/// `R/2` (moments), with translation margin `r0`.
#[derive(Debug, Clone, Serialize)]
pub struct Window<T> {
    pub center: Vec<T>,
    pub radius: T,
    pub margin: T,
}

impl<T: Real> Window<T> {
    pub fn new(center: Vec<T>, radius: T, margin: T) -> Self {
        Self {
            center,
            radius,
            margin,
        }
    }

    /// Centered window with radius a box fraction: `radius = frac * min L`.
    pub fn centered(domain: &GridDomain<T>, radius: T, margin: T) -> Self {
        let center = domain
            .box_lengths()
            .iter()
            .map(|&l| l * T::of(0.5))
            .collect();
        Self::new(center, radius, margin)
    }

    /// Checks the window and its translation margin against the domain: in
    /// Neumann mode the margin must stay below half the distance from the
    /// ball to the walls; in periodic mode the enlarged ball must fit in a
    /// half period.
    pub fn validate(&self, domain: &GridDomain<T>) -> Result<(), BesovError> {
        let lengths = domain.box_lengths();
        let err = || BesovError::WindowDoesNotFit {
            radius: self.radius.as_f64(),
            margin: self.margin.as_f64(),
        };
        if !(self.margin > T::zero()) || !(self.radius > T::zero()) {
            return Err(err());
        }
        match domain.boundary() {
            Boundary::Neumann => {
                let mut dist = T::infinity();
                for s in 0..domain.ndim() {
                    let c = self.center[s];
                    dist = dist.min(c.min(lengths[s] - c) - self.radius);
                }
                if !(self.margin < dist * T::of(0.5)) {
                    return Err(err());
                }
            }
            Boundary::Periodic => {
                let half_min = lengths
                    .iter()
                    .fold(T::infinity(), |m, &l| m.min(l))
                    * T::of(0.5);
                if !(self.radius + self.margin <= half_min) {
                    return Err(err());
                }
            }
        }
        Ok(())
    }

    /// Flat indices of cells whose centers lie within `radius` of the
    /// window center.
    pub fn cells_within(&self, domain: &GridDomain<T>, radius: T) -> Vec<usize> {
        let mut x = vec![T::zero(); domain.ndim()];
        let r2 = radius * radius;
        (0..domain.num_cells())
            .filter(|&idx| {
                domain.cell_center_into(idx, &mut x);
                let mut d2 = T::zero();
                for s in 0..x.len() {
                    let d = x[s] - self.center[s];
                    d2 = d2 + d * d;
                }
                d2 <= r2
            })
            .collect()
    }

    /// Half-octave shift ladder in cells: 2, 3, 4, 6, 8, ... capped at
    /// `min(margin, R/8)`. The single-cell shift is excluded because it is
    /// dominated by discretization noise.
    pub fn shift_ladder(&self, domain: &GridDomain<T>) -> Vec<usize> {
        let cap_len = self
            .margin
            .min(self.radius / T::of(8.0))
            .as_f64();
        let cap = (cap_len / domain.spacing().as_f64()).floor() as usize;
        half_octave_ladder(cap)
    }
}

/// 2, 3, 4, 6, 8, 11, 16, ... up to `cap` cells.
pub fn half_octave_ladder(cap: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = 2u32;
    loop {
        let m = 2f64.powf(k as f64 / 2.0).round() as usize;
        if m > cap {
            break;
        }
        if out.last() != Some(&m) {
            out.push(m);
        }
        k += 1;
    }
    out
}

/// Translated second moments `(h, M(h))` along one axis.
#[derive(Debug, Clone, Serialize)]
pub struct SeminormCurve<T> {
    pub direction: usize,
    pub steps: Vec<(T, T)>,
}

/// Log-log least-squares fit of a moment curve; `exponent` is half the
/// fitted slope (second moments scale like `h^{2 lambda}`). A curve that is
/// zero to rounding reports the infinite-smoothness marker.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult<T> {
    pub exponent: T,
    pub constant: T,
    pub r_squared: T,
}

impl<T: Real> FitResult<T> {
    pub fn is_infinitely_smooth(&self) -> bool {
        self.exponent == T::infinity()
    }
}

/// Moments below this are treated as exact zeros of the measured field.
pub const ZERO_MOMENT_FLOOR: f64 = 1e-14;

/// Whole-field translation `v(x) -> v(x + m e_s)` by whole cells.
///
/// Exact on periodic grids; on walls there is no admissible whole-field
/// shift (windowed statistics use in-range indexed reads instead).
pub fn translate<T: Real>(
    v: &ScalarField<T>,
    axis: usize,
    m: isize,
) -> Result<ScalarField<T>, BesovError> {
    if v.domain().boundary() != Boundary::Periodic && m != 0 {
        return Err(BesovError::TranslateNeedsPeriodic);
    }
    let domain = v.domain().clone();
    let mut out = ScalarField::zeros(&domain);
    let mut coords = vec![0usize; domain.ndim()];
    for idx in 0..domain.num_cells() {
        let src = domain.shifted(idx, &coords, axis, m);
        out.values_mut()[idx] = v.values()[src];
        domain.advance(&mut coords);
    }
    Ok(out)
}

fn check_shift<T: Real>(
    domain: &GridDomain<T>,
    w: &Window<T>,
    m: usize,
) -> Result<(), BesovError> {
    let margin_cells = (w.margin.as_f64() / domain.spacing().as_f64()).floor() as usize;
    if m > margin_cells {
        return Err(BesovError::ShiftExceedsMargin {
            shift: m,
            margin: margin_cells,
        });
    }
    Ok(())
}

/// `spacing^n` times the sum over window cells (inner ball `R/2`) of the
/// squared increment `|v(x + m e_s) - v(x)|^2`, components summed.
pub fn second_moment<T: Real, V: CellSampled<T>>(
    v: &V,
    axis: usize,
    m: usize,
    w: &Window<T>,
) -> Result<T, BesovError> {
    let domain = v.domain();
    w.validate(domain)?;
    check_shift(domain, w, m)?;
    let cells = w.cells_within(domain, w.radius * T::of(0.5));
    if cells.is_empty() {
        return Err(BesovError::EmptyWindow);
    }
    Ok(moment_over_cells(v, axis, m, &cells, T::of(2.0)))
}

/// Power-`p` moment over precomputed window cells; `p = 2` for second
/// moments. Increments are whole-cell shifts, wrapped when periodic.
fn moment_over_cells<T: Real, V: CellSampled<T>>(
    v: &V,
    axis: usize,
    m: usize,
    cells: &[usize],
    p: T,
) -> T {
    let domain = v.domain();
    let ncomp = v.components();
    let mut coords = vec![0usize; domain.ndim()];
    let mut acc = Accumulator::new();
    let two = T::of(2.0);
    for &idx in cells {
        domain.coords_of(idx, &mut coords);
        let shifted = domain.shifted(idx, &coords, axis, m as isize);
        let mut inc2 = T::zero();
        for comp in 0..ncomp {
            let d = v.value(comp, shifted) - v.value(comp, idx);
            inc2 = inc2 + d * d;
        }
        if p == two {
            acc.add(inc2);
        } else if inc2 > T::zero() {
            acc.add(fast_pow(inc2.sqrt(), p));
        }
    }
    domain.cell_volume() * acc.total()
}

/// Moment curve of `v` along `axis` over the window's shift ladder.
pub fn moment_curve<T: Real, V: CellSampled<T>>(
    v: &V,
    axis: usize,
    w: &Window<T>,
    ladder: &[usize],
    p: T,
) -> Result<SeminormCurve<T>, BesovError> {
    let domain = v.domain();
    w.validate(domain)?;
    if ladder.is_empty() {
        return Err(BesovError::EmptyLadder);
    }
    let cells = w.cells_within(domain, w.radius * T::of(0.5));
    if cells.is_empty() {
        return Err(BesovError::EmptyWindow);
    }
    let dx = domain.spacing();
    let mut steps = Vec::with_capacity(ladder.len());
    for &m in ladder {
        check_shift(domain, w, m)?;
        let h = T::of(m as f64) * dx;
        steps.push((h, moment_over_cells(v, axis, m, &cells, p)));
    }
    Ok(SeminormCurve {
        direction: axis,
        steps,
    })
}

/// Discrete fractional seminorm of order `alpha` in `L^p`: the maximum over
/// directions and ladder shifts of `(integral |increment|^p / h^{alpha p})^{1/p}`
/// over the ball of radius `radius` around the window center.
pub fn besov_seminorm<T: Real, V: CellSampled<T>>(
    v: &V,
    alpha: T,
    p: T,
    w: &Window<T>,
    radius: T,
    ladder: &[usize],
) -> Result<T, BesovError> {
    let domain = v.domain();
    w.validate(domain)?;
    if ladder.is_empty() {
        return Err(BesovError::EmptyLadder);
    }
    let cells = w.cells_within(domain, radius);
    if cells.is_empty() {
        return Err(BesovError::EmptyWindow);
    }
    let dx = domain.spacing();
    let mut sup = T::zero();
    for axis in 0..domain.ndim() {
        for &m in ladder {
            check_shift(domain, w, m)?;
            let h = T::of(m as f64) * dx;
            let val = moment_over_cells(v, axis, m, &cells, p).powf(T::one() / p) / h.powf(alpha);
            sup = sup.max(val);
        }
    }
    Ok(sup)
}

/// `L^p` norm of `v` over the ball of the given radius around the window
/// center (component norms).
pub fn lp_window_norm<T: Real, V: CellSampled<T>>(
    v: &V,
    p: T,
    w: &Window<T>,
    radius: T,
) -> Result<T, BesovError> {
    let domain = v.domain();
    let cells = w.cells_within(domain, radius);
    if cells.is_empty() {
        return Err(BesovError::EmptyWindow);
    }
    let mut acc = Accumulator::new();
    for &idx in &cells {
        let mut n2 = T::zero();
        for comp in 0..v.components() {
            let x = v.value(comp, idx);
            n2 = n2 + x * x;
        }
        if n2 > T::zero() {
            acc.add(fast_pow(n2.sqrt(), p));
        }
    }
    Ok((domain.cell_volume() * acc.total()).powf(T::one() / p))
}

/// Minimum number of curve points for a trustworthy fit.
pub const MIN_FIT_POINTS: usize = 5;

/// Least-squares slope of `log M` against `log h`, halved.
pub fn fit_exponent<T: Real>(curve: &SeminormCurve<T>) -> Result<FitResult<T>, BesovError> {
    if curve.steps.len() < MIN_FIT_POINTS {
        return Err(BesovError::TooFewPoints {
            min: MIN_FIT_POINTS,
            got: curve.steps.len(),
        });
    }
    fit_exponent_unchecked(curve)
}

/// Fit without the point-count gate, for refinement legs whose ladder is
/// geometrically capped below five steps.
pub fn fit_exponent_unchecked<T: Real>(
    curve: &SeminormCurve<T>,
) -> Result<FitResult<T>, BesovError> {
    let usable: Vec<(f64, f64)> = curve
        .steps
        .iter()
        .filter(|(_, m)| m.as_f64() > 0.0)
        .map(|(h, m)| (h.as_f64().ln(), m.as_f64().ln()))
        .collect();
    let all_zero = curve
        .steps
        .iter()
        .all(|(_, m)| m.as_f64() <= ZERO_MOMENT_FLOOR);
    if all_zero || usable.len() < 2 {
        return Ok(FitResult {
            exponent: T::infinity(),
            constant: T::zero(),
            r_squared: T::one(),
        });
    }
    let n = usable.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for &(x, y) in &usable {
        sx += x;
        sy += y;
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &usable {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };
    Ok(FitResult {
        exponent: T::of(slope / 2.0),
        constant: T::of(intercept.exp()),
        r_squared: T::of(r2),
    })
}

/// Estimate branch selecting the growth exponents `(e1, e2)` of the bound
/// `M(h) <= C (A B h^{e1} + B^q h^{e2})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateBranch {
    /// Differentiable data, singular exponent range: `(2, 2/(3-q))`.
    SobolevSingular,
    /// Fractional data, singular range: `(alpha + 1, 2/(3-q))`.
    BesovSingular,
    /// Fractional data, degenerate range `q >= 2`: `(alpha + 1, 2)`.
    BesovDegenerate,
}

impl EstimateBranch {
    pub fn name(&self) -> &'static str {
        match self {
            EstimateBranch::SobolevSingular => "sobolev_q_lt_2",
            EstimateBranch::BesovSingular => "besov_q_lt_2",
            EstimateBranch::BesovDegenerate => "besov_q_ge_2",
        }
    }
}

/// Per-direction measurement of one estimate audit.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionReport<T> {
    pub direction: usize,
    pub curve: SeminormCurve<T>,
    /// Present when the ladder has enough points to fit.
    pub fit: Option<FitResult<T>>,
    /// Raw log-log slope of M(h) (twice the Besov exponent), when fitted.
    pub moment_slope: Option<T>,
    /// Smallest constant C with `M(h) <= C (A B h^{e1} + B^q h^{e2})`
    /// across the ladder.
    pub min_constant: T,
    /// True when every moment on the ladder is zero to rounding.
    pub infinitely_smooth: bool,
}

/// Audit of the translated-moment growth bound on a solved instance.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport<T> {
    pub branch: &'static str,
    pub q: T,
    pub p: T,
    pub alpha: Option<T>,
    pub exponent_pair: (T, T),
    /// Data factor: `|grad f|_{L^p}` over the enlarged ball for the
    /// differentiable branch, the fractional norm of `f` otherwise.
    pub a_norm: T,
    /// Gradient factor `|grad u|_{L^q}` over the enlarged ball.
    pub b_norm: T,
    pub window_center: Vec<T>,
    pub window_radius: T,
    pub window_margin: T,
    pub ladder_cells: Vec<usize>,
    pub directions: Vec<DirectionReport<T>>,
}

/// Measure `H_{q/2}(grad u)` moments against the branch bound.
///
/// `A` and `B` norms are taken over the enlarged ball of radius
/// `R + margin`; moments over the inner ball `R/2` per direction, on the
/// window's shift ladder (or a caller-supplied one).
pub fn verify_estimate<T: Real>(
    sol: &Solution<T>,
    prob: &ProblemSpec<T>,
    w: &Window<T>,
    branch: EstimateBranch,
    ladder_override: Option<&[usize]>,
) -> Result<VerifyReport<T>, BesovError> {
    let domain = &prob.domain;
    w.validate(domain)?;
    let e = &prob.exponents;
    let q = e.q();
    let singular = e.is_singular();
    match branch {
        EstimateBranch::SobolevSingular | EstimateBranch::BesovSingular if !singular => {
            return Err(BesovError::BranchMismatch {
                branch: branch.name(),
                q: q.as_f64(),
            })
        }
        EstimateBranch::BesovDegenerate if singular => {
            return Err(BesovError::BranchMismatch {
                branch: branch.name(),
                q: q.as_f64(),
            })
        }
        _ => {}
    }
    match (&prob.data_class, branch) {
        (DataClass::Sobolev, EstimateBranch::SobolevSingular) => {}
        (DataClass::Besov { .. }, EstimateBranch::BesovSingular)
        | (DataClass::Besov { .. }, EstimateBranch::BesovDegenerate) => {}
        // Unclassified data may be audited under any compatible branch.
        (DataClass::None, _) => {}
        _ => return Err(BesovError::DataClassMismatch),
    }
    let alpha = match branch {
        EstimateBranch::SobolevSingular => None,
        _ => Some(match prob.data_class {
            DataClass::Besov { alpha } => alpha,
            _ => e.alpha().ok_or(BesovError::MissingAlpha(branch.name()))?,
        }),
    };
    let two = T::of(2.0);
    let exponent_pair = match branch {
        EstimateBranch::SobolevSingular => (two, two / (T::of(3.0) - q)),
        EstimateBranch::BesovSingular => (alpha.unwrap() + T::one(), two / (T::of(3.0) - q)),
        EstimateBranch::BesovDegenerate => (alpha.unwrap() + T::one(), two),
    };

    let ladder = match ladder_override {
        Some(l) => l.to_vec(),
        None => w.shift_ladder(domain),
    };
    if ladder.is_empty() {
        return Err(BesovError::EmptyLadder);
    }

    let outer = w.radius + w.margin;
    let grad_u = crate::grid::discrete_gradient(&sol.u);
    let b_norm = lp_window_norm(&grad_u, q, w, outer)?;
    let a_norm = match branch {
        EstimateBranch::SobolevSingular => {
            let grad_f = crate::grid::discrete_gradient(&prob.f);
            lp_window_norm(&grad_f, e.p(), w, outer)?
        }
        _ => {
            let semi = besov_seminorm(&prob.f, alpha.unwrap(), e.p(), w, outer, &ladder)?;
            lp_window_norm(&prob.f, e.p(), w, outer)? + semi
        }
    };

    let hq2 = crate::grid::threshold_map(&sol.u, q / two);
    let mut directions = Vec::with_capacity(domain.ndim());
    for axis in 0..domain.ndim() {
        let curve = moment_curve(&hq2, axis, w, &ladder, two)?;
        let infinitely_smooth = curve
            .steps
            .iter()
            .all(|(_, m)| m.as_f64() <= ZERO_MOMENT_FLOOR);
        let fit = if curve.steps.len() >= MIN_FIT_POINTS {
            Some(fit_exponent(&curve)?)
        } else {
            None
        };
        let moment_slope = fit.as_ref().map(|f| f.exponent * two);
        let mut min_constant = T::zero();
        for &(h, m) in &curve.steps {
            let bound = a_norm * b_norm * h.powf(exponent_pair.0)
                + fast_pow(b_norm, q) * h.powf(exponent_pair.1);
            if bound > T::zero() {
                min_constant = min_constant.max(m / bound);
            }
        }
        directions.push(DirectionReport {
            direction: axis,
            curve,
            fit,
            moment_slope,
            min_constant,
            infinitely_smooth,
        });
    }

    Ok(VerifyReport {
        branch: branch.name(),
        q,
        p: e.p(),
        alpha,
        exponent_pair,
        a_norm,
        b_norm,
        window_center: w.center.clone(),
        window_radius: w.radius,
        window_margin: w.margin,
        ladder_cells: ladder,
        directions,
    })
}

/// Settings of the flux regularity audit.
#[derive(Debug, Clone)]
pub struct SigmaCheckConfig {
    /// Sample count of the threshold-comparison calibration behind kappa.
    pub calibration_samples: usize,
    pub calibration_seed: u64,
}

impl Default for SigmaCheckConfig {
    fn default() -> Self {
        Self {
            calibration_samples: 1_000_000,
            calibration_seed: 0x6a6f6c6c79,
        }
    }
}

/// Per-direction flux moment measurements.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaDirectionReport<T> {
    pub direction: usize,
    /// `(h, integral over B_{R/2} of |sigma(x+h) - sigma(x)|^p)`.
    pub p_moments: SeminormCurve<T>,
    /// Second moments of `H_{q/2}(grad u)` on the same ladder.
    pub gradient_moments: SeminormCurve<T>,
    /// Fitted exponent of the p-moment curve divided by p.
    pub p_scale_exponent: Option<T>,
    /// Largest ratio of the p-moment to `kappa` times the gradient moment.
    pub max_moment_ratio: T,
    pub infinitely_smooth: bool,
}

/// Flux regularity audit: p-moments of `sigma` increments dominated
/// cellwise and in integral by the `H_{q/2}` moments.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaReport<T> {
    pub q: T,
    pub p: T,
    /// Predicted fractional order `2 / (p (3 - q))`.
    pub predicted_exponent: T,
    /// Cellwise domination constant `kappa = beta2^p` from the calibrated
    /// two-exponent threshold comparison.
    pub kappa: T,
    pub calibration: CalibrationResult<T>,
    pub directions: Vec<SigmaDirectionReport<T>>,
    /// True when `|increment sigma|^p <= kappa |increment H_{q/2}|^2` held
    /// at every window cell and every ladder shift.
    pub cellwise_domination: bool,
    /// Largest cellwise excess over the domination bound (negative when
    /// the bound holds strictly).
    pub max_cellwise_excess: T,
}

/// Check the flux increments of a solved singular-branch instance.
pub fn sigma_estimate_check<T: Real>(
    sol: &Solution<T>,
    w: &Window<T>,
    e: &Exponents<T>,
    cfg: &SigmaCheckConfig,
) -> Result<SigmaReport<T>, BesovError> {
    let q = e.q();
    if !e.is_singular() {
        return Err(BesovError::BranchMismatch {
            branch: "sigma_q_lt_2",
            q: q.as_f64(),
        });
    }
    let domain = sol.u.domain();
    w.validate(domain)?;
    let p = e.p();
    let two = T::of(2.0);
    let one = T::one();

    // kappa = beta2^p with beta2 the upper constant of the comparison
    // |H_{q-1} diff| <= beta2 S^{(a-eps)/eps} |H_{q/2} diff| at a = q-1,
    // eps = q/2; the exponent bookkeeping makes the weight cancel when
    // raised to the p-th power.
    let cal = calibrate_jolly::<T>(
        q - one,
        q / two,
        (1.0, 10.0),
        cfg.calibration_samples,
        cfg.calibration_seed,
    )
    .map_err(|_| BesovError::EmptyLadder)?;
    let kappa = fast_pow(cal.constant_high, p);

    let ladder = w.shift_ladder(domain);
    if ladder.is_empty() {
        return Err(BesovError::EmptyLadder);
    }
    let cells = w.cells_within(domain, w.radius * T::of(0.5));
    if cells.is_empty() {
        return Err(BesovError::EmptyWindow);
    }

    let hq2 = crate::grid::threshold_map(&sol.u, q / two);
    let sigma = &sol.sigma0;
    let dx = domain.spacing();
    let ncomp = domain.ndim();
    let mut coords = vec![0usize; ncomp];
    let mut directions = Vec::with_capacity(ncomp);
    let mut domination = true;
    let mut max_excess = T::neg_infinity();

    for axis in 0..ncomp {
        let mut p_steps = Vec::with_capacity(ladder.len());
        let mut g_steps = Vec::with_capacity(ladder.len());
        for &m in &ladder {
            check_shift(domain, w, m)?;
            let h = T::of(m as f64) * dx;
            let mut p_acc = Accumulator::new();
            let mut g_acc = Accumulator::new();
            for &idx in &cells {
                domain.coords_of(idx, &mut coords);
                let sh = domain.shifted(idx, &coords, axis, m as isize);
                let mut ds2 = T::zero();
                let mut dh2 = T::zero();
                for comp in 0..ncomp {
                    let d = sigma.component(comp)[sh] - sigma.component(comp)[idx];
                    ds2 = ds2 + d * d;
                    let g = hq2.component(comp)[sh] - hq2.component(comp)[idx];
                    dh2 = dh2 + g * g;
                }
                let lhs = if ds2 > T::zero() {
                    fast_pow(ds2.sqrt(), p)
                } else {
                    T::zero()
                };
                let rhs = kappa * dh2;
                let excess = lhs - rhs;
                max_excess = max_excess.max(excess);
                if excess > T::of(1e-18) {
                    domination = false;
                }
                p_acc.add(lhs);
                g_acc.add(dh2);
            }
            p_steps.push((h, domain.cell_volume() * p_acc.total()));
            g_steps.push((h, domain.cell_volume() * g_acc.total()));
        }
        let p_curve = SeminormCurve {
            direction: axis,
            steps: p_steps,
        };
        let g_curve = SeminormCurve {
            direction: axis,
            steps: g_steps,
        };
        let infinitely_smooth = p_curve
            .steps
            .iter()
            .all(|(_, m)| m.as_f64() <= ZERO_MOMENT_FLOOR);
        let p_scale_exponent = if p_curve.steps.len() >= MIN_FIT_POINTS {
            let fit = fit_exponent(&p_curve)?;
            // fit.exponent is slope/2; rescale to slope/p.
            Some(fit.exponent * two / p)
        } else {
            None
        };
        let mut max_ratio = T::zero();
        for ((_, pm), (_, gm)) in p_curve.steps.iter().zip(&g_curve.steps) {
            if *gm > T::zero() {
                max_ratio = max_ratio.max(*pm / (kappa * *gm));
            }
        }
        directions.push(SigmaDirectionReport {
            direction: axis,
            p_moments: p_curve,
            gradient_moments: g_curve,
            p_scale_exponent,
            max_moment_ratio: max_ratio,
            infinitely_smooth,
        });
    }

    Ok(SigmaReport {
        q,
        p,
        predicted_exponent: two / (p * (T::of(3.0) - q)),
        kappa,
        calibration: cal,
        directions,
        cellwise_domination: domination,
        max_cellwise_excess: max_excess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{discrete_gradient, Boundary, GridDomain, ScalarField};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> GridDomain<f64> {
        GridDomain::<f64>::unit_square(n, Boundary::Periodic).unwrap()
    }

    fn window(domain: &GridDomain<f64>) -> Window<f64> {
        let _ = domain;
        Window::centered(domain, 0.25, 0.1)
    }

    #[test]
    fn translate_identity_and_inverse() {
        let domain = unit(32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = ScalarField::from_values(
            &domain,
            (0..domain.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        assert_eq!(translate(&v, 0, 0).unwrap().values(), v.values());
        let fwd = translate(&v, 1, 5).unwrap();
        let back = translate(&fwd, 1, -5).unwrap();
        assert_eq!(back.values(), v.values());
        let neumann = GridDomain::<f64>::unit_square(32, Boundary::Neumann).unwrap();
        let z = ScalarField::zeros(&neumann);
        assert!(translate(&z, 0, 1).is_err());
        assert!(translate(&z, 0, 0).is_ok());
    }

    #[test]
    fn translate_of_linear_field_adds_the_shift() {
        let domain = unit(32);
        let v = ScalarField::from_fn(&domain, |x| x[0]);
        let t = translate(&v, 0, 3).unwrap();
        let dx = domain.spacing();
        let mut coords = [0usize; 2];
        for idx in 0..domain.num_cells() {
            domain.coords_of(idx, &mut coords);
            if coords[0] + 3 < 32 {
                assert_relative_eq!(
                    t.values()[idx],
                    v.values()[idx] + 3.0 * dx,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn second_moment_examples() {
        let domain = unit(64);
        let w = window(&domain);
        let constant = ScalarField::from_fn(&domain, |_| 2.5);
        assert_eq!(second_moment(&constant, 0, 4, &w).unwrap(), 0.0);

        // Linear field: every increment is exactly m dx inside the window.
        let v = ScalarField::from_fn(&domain, |x| x[0]);
        let cells = w.cells_within(&domain, w.radius * 0.5) .len();
        let m = 4usize;
        let expect =
            (m as f64 * domain.spacing()).powi(2) * cells as f64 * domain.cell_volume();
        assert_relative_eq!(
            second_moment(&v, 0, m, &w).unwrap(),
            expect,
            max_relative = 1e-12
        );
        // Shift beyond margin is rejected.
        assert!(second_moment(&v, 0, 30, &w).is_err());
    }

    #[test]
    fn moments_grow_with_window_size() {
        let domain = unit(64);
        let v = ScalarField::from_fn(&domain, |x| {
            (std::f64::consts::TAU * x[0]).sin() * (std::f64::consts::TAU * x[1]).cos()
        });
        let small = Window::centered(&domain, 0.2, 0.05);
        let large = Window::centered(&domain, 0.4, 0.05);
        for m in [2usize, 4, 8] {
            let a = second_moment(&v, 0, m, &small).unwrap();
            let b = second_moment(&v, 0, m, &large).unwrap();
            assert!(a <= b + 1e-15);
        }
    }

    #[test]
    fn difference_quotient_parts_and_product_rules_are_exact() {
        let domain = unit(32);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mk = |rng: &mut ChaCha8Rng| {
            ScalarField::from_values(
                &domain,
                (0..domain.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        };
        let f = mk(&mut rng);
        let g = mk(&mut rng);
        let m = 3isize;
        let axis = 0usize;
        let tf = translate(&f, axis, m).unwrap();
        let tg = translate(&g, axis, m).unwrap();
        let tmf = translate(&f, axis, -m).unwrap();
        // Sum over the whole periodic box: F (tau G - G) = -(G)(tau_{-h}F - F).
        let mut lhs = Accumulator::<f64>::new();
        let mut rhs = Accumulator::<f64>::new();
        for idx in 0..domain.num_cells() {
            lhs.add(f.values()[idx] * (tg.values()[idx] - g.values()[idx]));
            rhs.add(g.values()[idx] * (tmf.values()[idx] - f.values()[idx]));
        }
        assert!((lhs.total() + rhs.total()).abs() <= 1e-13);
        // Product rule pointwise: increments of FG.
        for idx in 0..domain.num_cells() {
            let inc_fg = tf.values()[idx] * tg.values()[idx] - f.values()[idx] * g.values()[idx];
            let split = tf.values()[idx] * (tg.values()[idx] - g.values()[idx])
                + g.values()[idx] * (tf.values()[idx] - f.values()[idx]);
            assert!((inc_fg - split).abs() <= 1e-13);
        }
    }

    #[test]
    fn increment_integrals_are_dominated_by_gradient_integrals() {
        // Discrete Lagrange bound with constant 1: the p-moment of an
        // increment over the inner ball is at most h^p times the p-norm of
        // the forward quotients over the enlarged ball.
        let domain = unit(64);
        let w = window(&domain);
        let v = ScalarField::from_fn(&domain, |x| {
            (std::f64::consts::TAU * x[0]).sin() + 0.3 * (std::f64::consts::TAU * 2.0 * x[1]).cos()
        });
        let g = discrete_gradient(&v);
        let p = 3.0;
        let cells_inner = w.cells_within(&domain, w.radius * 0.5);
        let cells_outer = w.cells_within(&domain, w.radius * 0.5 + w.margin);
        let mut gp = Accumulator::<f64>::new();
        for &idx in &cells_outer {
            gp.add(g.component(0)[idx].abs().powf(p));
        }
        let grad_term = domain.cell_volume() * gp.total();
        for m in [2usize, 4, 8] {
            let h = m as f64 * domain.spacing();
            let lhs = moment_over_cells(&v, 0, m, &cells_inner, p);
            assert!(
                lhs <= h.powf(p) * grad_term * (1.0 + 1e-12),
                "m={m}: {} vs {}",
                lhs,
                h.powf(p) * grad_term
            );
        }
    }

    #[test]
    fn besov_seminorm_examples() {
        let domain = unit(64);
        let w = window(&domain);
        let ladder = w.shift_ladder(&domain);
        let constant = ScalarField::from_fn(&domain, |_| 1.0);
        assert_eq!(
            besov_seminorm(&constant, 0.5, 2.0, &w, w.radius, &ladder).unwrap(),
            0.0
        );
        // Linear field at alpha = 1, p = 2: every ladder term equals
        // (cell count * volume)^{1/2}.
        let v = ScalarField::from_fn(&domain, |x| x[0]);
        let cells = w.cells_within(&domain, w.radius * 0.5);
        let expect = (cells.len() as f64 * domain.cell_volume()).sqrt();
        let semi = besov_seminorm(&v, 1.0, 2.0, &w, w.radius * 0.5, &ladder).unwrap();
        assert_relative_eq!(semi, expect, max_relative = 1e-12);
    }

    #[test]
    fn fit_recovers_exact_power_laws() {
        let hs = [0.01, 0.02, 0.04, 0.08, 0.16];
        let mk = |c: f64, e: f64| SeminormCurve::<f64> {
            direction: 0,
            steps: hs.iter().map(|&h| (h, c * f64::powf(h, e))).collect(),
        };
        let fit = fit_exponent(&mk(3.0, 2.0)).unwrap();
        assert_relative_eq!(fit.exponent, 1.0, max_relative = 1e-10);
        assert_relative_eq!(fit.constant, 3.0, max_relative = 1e-9);
        assert_relative_eq!(fit.r_squared, 1.0, max_relative = 1e-12);
        let fit = fit_exponent(&mk(0.7, 4.0 / 3.0)).unwrap();
        assert_relative_eq!(fit.exponent, 2.0 / 3.0, max_relative = 1e-10);
        // Degenerate curve short-circuits to the marker.
        let zero = SeminormCurve {
            direction: 0,
            steps: hs.iter().map(|&h| (h, 0.0)).collect(),
        };
        assert!(fit_exponent(&zero).unwrap().is_infinitely_smooth());
        // Too few points is an error.
        let short = SeminormCurve {
            direction: 0,
            steps: vec![(0.01, 1.0), (0.02, 2.0)],
        };
        assert!(matches!(
            fit_exponent(&short),
            Err(BesovError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn ladder_is_half_octave_and_capped() {
        assert_eq!(half_octave_ladder(8), vec![2, 3, 4, 6, 8]);
        assert_eq!(half_octave_ladder(4), vec![2, 3, 4]);
        assert_eq!(half_octave_ladder(1), Vec::<usize>::new());
        let domain = unit(256);
        let w = Window::centered(&domain, 0.25, 0.1);
        // Cap is min(0.1, 0.25/8) = 5/160... = 8 cells at 256.
        assert_eq!(w.shift_ladder(&domain), vec![2, 3, 4, 6, 8]);
    }

    #[test]
    fn window_validation() {
        let neumann = GridDomain::<f64>::unit_square(64, Boundary::Neumann).unwrap();
        // dist(B_R, walls) = 0.5 - 0.25 = 0.25; margin must be < 0.125.
        assert!(Window::centered(&neumann, 0.25, 0.1).validate(&neumann).is_ok());
        assert!(Window::centered(&neumann, 0.25, 0.2).validate(&neumann).is_err());
        let periodic = unit(64);
        assert!(Window::centered(&periodic, 0.45, 0.1).validate(&periodic).is_err());
    }
}

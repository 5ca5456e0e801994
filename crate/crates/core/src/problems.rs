//! Manufactured and synthetic problem instances with known structure.
//!
//! Every constructor returns a [`ProblemSpec`] whose source term has zero
//! mean to machine precision. The radial family carries an exact optimal
//! flux whose discrete divergence *defines* the source, so feasibility of
//! the exact pair is an identity rather than an approximation, and solver
//! error is measured against a flux that is optimal for the continuum
//! problem as well.

use crate::grid::{discrete_divergence, Boundary, FluxField, GridDomain, ScalarField};
use crate::maps::Exponents;
use crate::real::{Accumulator, Real};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("free boundary radius {radius} does not fit inside the domain (margin {margin})")]
    FreeBoundaryOutsideWindow { radius: f64, margin: f64 },
    #[error("highest oscillation 2^{j} is unresolvable on {cells} cells per axis")]
    FrequencyOverflow { j: u32, cells: usize },
    #[error("mode frequencies exceed a quarter of the cells per axis")]
    UnresolvableModes,
}

/// Regularity class claimed for the source term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataClass<T> {
    /// First derivatives in `L^p`.
    Sobolev,
    /// Fractional smoothness of order alpha measured in `L^p`.
    Besov { alpha: T },
    /// No regularity claim (manufactured or null sources).
    None,
}

/// Construction metadata, echoed into report sidecars.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    Radial {
        a: f64,
        center: Vec<f64>,
        cutoff: (f64, f64),
    },
    LipschitzNull {
        shape: NullShape,
        seed: u64,
    },
    BesovSource {
        alpha: f64,
        j_max: u32,
        amplitude: f64,
        seed: u64,
    },
    SmoothSource {
        modes: usize,
        amplitude: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NullShape {
    Plane,
    Cone,
    RandomClipped,
}

/// Exact reference pair attached to manufactured instances.
#[derive(Debug, Clone)]
pub struct ExactSolution<T> {
    pub u: ScalarField<T>,
    pub sigma: FluxField<T>,
}

/// A ready-to-solve instance: domain, zero-mean source, exponents, data
/// class and optional exact reference.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T> {
    pub domain: GridDomain<T>,
    pub f: ScalarField<T>,
    pub exponents: Exponents<T>,
    pub data_class: DataClass<T>,
    pub exact: Option<ExactSolution<T>>,
    pub kind: ProblemKind,
}

/// Off-node offsets (in box fractions) of manufactured centers; avoids
/// symmetry-artifact cancellations on any grid resolution.
const CENTER_OFFSETS: [f64; 3] = [0.0137, -0.0071, 0.0053];

fn domain_center<T: Real>(domain: &GridDomain<T>) -> Vec<T> {
    domain
        .box_lengths()
        .iter()
        .enumerate()
        .map(|(s, &l)| l * T::of(0.5 + CENTER_OFFSETS[s]))
        .collect()
}

fn quintic_falloff(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Radial manufactured instance: potential slope `a |x - c|` with free
/// boundary at radius `1/a`, flux tapered to zero by a smooth cutoff
/// before the walls, and `f := -div_h sigma_exact` so discrete feasibility
/// is exact.
///
/// The taper multiplies only the flux magnitude, which keeps the pair
/// optimal: a radial potential with unit slope beyond the cutoff still
/// generates the tapered flux through the threshold map.
pub fn make_radial<T: Real>(
    e: &Exponents<T>,
    a: T,
    domain: &GridDomain<T>,
) -> Result<ProblemSpec<T>, ProblemError> {
    let af = a.as_f64();
    let center = domain_center(domain);
    let lengths = domain.box_lengths();
    let margin = (0..domain.ndim())
        .map(|s| {
            let c = center[s].as_f64();
            c.min(lengths[s].as_f64() - c)
        })
        .fold(f64::INFINITY, f64::min);
    let corner = (0..domain.ndim())
        .map(|s| {
            let c = center[s].as_f64();
            c.max(lengths[s].as_f64() - c).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let r_fb = 1.0 / af;
    let fully_degenerate = af * corner <= 1.0;
    let (r1, r2) = if fully_degenerate {
        (corner + 1.0, corner + 2.0)
    } else {
        let r1 = 1.25 * r_fb;
        let r2 = (2.2 * r_fb).min(0.9 * margin);
        let min_width = 4.0 * domain.spacing().as_f64();
        if r_fb >= 0.8 * margin || r2 <= r1 + min_width {
            return Err(ProblemError::FreeBoundaryOutsideWindow {
                radius: r_fb,
                margin,
            });
        }
        (r1, r2)
    };

    let qm1 = e.q().as_f64() - 1.0;
    let magnitude = |r: f64| -> f64 {
        let ex = af * r - 1.0;
        if ex <= 0.0 {
            0.0
        } else {
            ex.powf(qm1) * quintic_falloff((r - r1) / (r2 - r1))
        }
    };

    let ndim = domain.ndim();
    let sigma = FluxField::from_fn(domain, |x, s| {
        let mut r2sum = 0.0;
        for k in 0..ndim {
            let d = x[k].as_f64() - center[k].as_f64();
            r2sum += d * d;
        }
        let r = r2sum.sqrt();
        if r < 1e-300 {
            return T::zero();
        }
        let d = x[s].as_f64() - center[s].as_f64();
        T::of(magnitude(r) * d / r)
    });

    let mut f = discrete_divergence(&sigma);
    for v in f.values_mut() {
        *v = -*v;
    }

    // Radial potential consistent with the tapered flux: slope a r up to
    // the taper, 1 + falloff^{1/(q-1)} (a r - 1) across it, unit slope
    // beyond. The annulus part is integrated by a fixed Gauss rule.
    let u = ScalarField::from_fn(domain, |x| {
        let mut r2sum = 0.0;
        for k in 0..ndim {
            let d = x[k].as_f64() - center[k].as_f64();
            r2sum += d * d;
        }
        let r = r2sum.sqrt();
        let w = if r <= r1 {
            0.5 * af * r * r
        } else {
            let upper = r.min(r2);
            let mut acc = 0.5 * af * r1 * r1 + gauss_integral(r1, upper, |s| {
                1.0 + quintic_falloff((s - r1) / (r2 - r1)).powf(1.0 / qm1) * (af * s - 1.0)
            });
            if r > r2 {
                acc += r - r2;
            }
            acc
        };
        T::of(w)
    });
    let mut u = u;
    u.subtract_mean();

    Ok(ProblemSpec {
        domain: domain.clone(),
        f,
        exponents: *e,
        data_class: DataClass::None,
        exact: Some(ExactSolution { u, sigma }),
        kind: ProblemKind::Radial {
            a: af,
            center: center.iter().map(|c| c.as_f64()).collect(),
            cutoff: (r1, r2),
        },
    })
}

/// 32-point Gauss--Legendre on `[a, b]`.
fn gauss_integral(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    // Nodes/weights for n=16 on [-1,1], symmetric halves listed once.
    const X: [f64; 8] = [
        0.0950125098376374,
        0.2816035507792589,
        0.4580167776572274,
        0.6178762444026438,
        0.7554044083550030,
        0.8656312023878318,
        0.9445750230732326,
        0.9894009349916499,
    ];
    const W: [f64; 8] = [
        0.1894506104550685,
        0.1826034150449236,
        0.1691565193950025,
        0.1495959888165767,
        0.1246289712555339,
        0.0951585116824928,
        0.0622535239386479,
        0.0271524594117541,
    ];
    if b <= a {
        return 0.0;
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for k in 0..8 {
        acc += W[k] * (f(mid + half * X[k]) + f(mid - half * X[k]));
    }
    acc * half
}

/// Null instances: `f = 0` and a potential whose owner-face gradient
/// vectors stay strictly inside the unit ball, so the zero flux is optimal
/// and the Euler--Lagrange residual vanishes identically.
pub fn make_lipschitz_null<T: Real>(
    e: &Exponents<T>,
    domain: &GridDomain<T>,
    shape: NullShape,
    seed: u64,
) -> ProblemSpec<T> {
    let lengths = domain.box_lengths();
    let center = domain_center(domain);
    let periodic = domain.boundary() == Boundary::Periodic;
    let mut u = match shape {
        NullShape::Plane => ScalarField::from_fn(domain, |x| {
            let t = x[0] / lengths[0];
            if periodic {
                // Triangle wave: the periodic stand-in for a tilted plane.
                let tri = if t < T::of(0.5) { t } else { T::one() - t };
                T::of(0.5) * lengths[0] * tri
            } else {
                T::of(0.5) * x[0]
            }
        }),
        NullShape::Cone => ScalarField::from_fn(domain, |x| {
            let mut r2 = T::zero();
            for s in 0..x.len() {
                let mut d = (x[s] - center[s]).abs();
                if periodic {
                    d = d.min(lengths[s] - d);
                }
                r2 = r2 + d * d;
            }
            T::of(0.95) * r2.sqrt()
        }),
        NullShape::RandomClipped => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tau = std::f64::consts::TAU;
            let modes: Vec<(f64, f64, f64, f64)> = (0..6)
                .map(|_| {
                    (
                        rng.gen_range(-3i32..=3) as f64,
                        rng.gen_range(-3i32..=3) as f64,
                        rng.gen_range(0.0..tau),
                        rng.gen_range(0.5..1.5),
                    )
                })
                .collect();
            ScalarField::from_fn(domain, |x| {
                let mut acc = 0.0;
                for &(kx, ky, phase, amp) in &modes {
                    let arg = tau
                        * (kx * x[0].as_f64() / lengths[0].as_f64()
                            + ky * x[1].as_f64() / lengths[1].as_f64())
                        + phase;
                    acc += amp * arg.cos();
                }
                T::of(acc)
            })
        }
    };
    // Rescale so the largest gradient vector has norm 0.99; the thresholded
    // flux of the result is then exactly zero.
    let max_grad = crate::grid::max_gradient_norm(&u).as_f64();
    if max_grad > 0.99 {
        let s = T::of(0.99 / max_grad);
        for v in u.values_mut() {
            *v = *v * s;
        }
    }
    u.subtract_mean();
    ProblemSpec {
        domain: domain.clone(),
        f: ScalarField::zeros(domain),
        exponents: *e,
        data_class: DataClass::None,
        exact: Some(ExactSolution {
            u,
            sigma: FluxField::zeros(domain),
        }),
        kind: ProblemKind::LipschitzNull { shape, seed },
    }
}

/// Hoelder-rough source: a lacunary cosine series along the first axis,
/// `sum_j 2^{-alpha j} cos(2^j 2 pi x_1 / L + phase_j)`, mean subtracted.
/// Its fractional smoothness of order `alpha` is bounded while any higher
/// order grows under grid refinement.
pub fn make_besov_source<T: Real>(
    e: &Exponents<T>,
    alpha: T,
    j_max: u32,
    amplitude: T,
    domain: &GridDomain<T>,
    seed: u64,
) -> Result<ProblemSpec<T>, ProblemError> {
    let cells = domain.dims()[0];
    if (1usize << j_max) >= 4 * cells {
        return Err(ProblemError::FrequencyOverflow {
            j: j_max,
            cells,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = (0..=j_max)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let l0 = domain.box_lengths()[0].as_f64();
    let af = alpha.as_f64();
    let mut f = ScalarField::from_fn(domain, |x| {
        let mut acc = Accumulator::<f64>::new();
        for (j, &phase) in phases.iter().enumerate() {
            let freq = (1u64 << j) as f64;
            acc.add(
                2.0f64.powf(-af * j as f64)
                    * (freq * std::f64::consts::TAU * x[0].as_f64() / l0 + phase).cos(),
            );
        }
        T::of(acc.total()) * amplitude
    });
    f.subtract_mean();
    Ok(ProblemSpec {
        domain: domain.clone(),
        f,
        exponents: *e,
        data_class: DataClass::Besov { alpha },
        exact: None,
        kind: ProblemKind::BesovSource {
            alpha: af,
            j_max,
            amplitude: amplitude.as_f64(),
            seed,
        },
    })
}

/// Frequencies of the smooth trigonometric source, exposed so tests can
/// integrate the continuum gradient norm independently.
#[derive(Debug, Clone, Serialize)]
pub struct TrigMode {
    pub wave: Vec<i32>,
    pub amplitude: f64,
    pub phase: f64,
}

/// Smooth zero-mean trigonometric source with `modes` random low
/// frequencies; the mode list is recoverable from the seed for oracle
/// integration.
pub fn make_smooth_source<T: Real>(
    e: &Exponents<T>,
    domain: &GridDomain<T>,
    modes: usize,
    amplitude: T,
    seed: u64,
) -> Result<ProblemSpec<T>, ProblemError> {
    let spec = smooth_modes(domain, modes, amplitude.as_f64(), seed)?;
    let mut f = trig_field(domain, &spec);
    f.subtract_mean();
    Ok(ProblemSpec {
        domain: domain.clone(),
        f,
        exponents: *e,
        data_class: DataClass::Sobolev,
        exact: None,
        kind: ProblemKind::SmoothSource {
            modes,
            amplitude: amplitude.as_f64(),
            seed,
        },
    })
}

/// Deterministic mode list of [`make_smooth_source`].
pub fn smooth_modes<T: Real>(
    domain: &GridDomain<T>,
    modes: usize,
    amplitude: f64,
    seed: u64,
) -> Result<Vec<TrigMode>, ProblemError> {
    const KMAX: i32 = 3;
    if domain.dims().iter().any(|&d| d < 4 * KMAX as usize) {
        return Err(ProblemError::UnresolvableModes);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = if modes == 0 {
        0.0
    } else {
        amplitude / modes as f64
    };
    Ok((0..modes)
        .map(|_| {
            let mut wave: Vec<i32> = (0..domain.ndim())
                .map(|_| rng.gen_range(-KMAX..=KMAX))
                .collect();
            if wave.iter().all(|&k| k == 0) {
                wave[0] = 1;
            }
            TrigMode {
                wave,
                amplitude: scale * rng.gen_range(0.5..1.5),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            }
        })
        .collect())
}

/// Evaluate a trigonometric mode list on cell centers.
pub fn trig_field<T: Real>(domain: &GridDomain<T>, modes: &[TrigMode]) -> ScalarField<T> {
    let lengths: Vec<f64> = domain.box_lengths().iter().map(|l| l.as_f64()).collect();
    ScalarField::from_fn(domain, |x| {
        let mut acc = 0.0;
        for mode in modes {
            let mut arg = mode.phase;
            for s in 0..x.len() {
                arg += std::f64::consts::TAU * mode.wave[s] as f64 * x[s].as_f64() / lengths[s];
            }
            acc += mode.amplitude * arg.cos();
        }
        T::of(acc)
    })
}

//! Solver and measurement library for congested transport at unit
//! threshold.
//!
//! The primal problem minimizes the cost `|sigma|^p / p + |sigma|` over
//! vector fields with prescribed divergence and no outflow; its dual
//! maximizes `integral(u f) - integral((|grad u| - 1)_+^q / q)` over
//! zero-mean potentials. The two are linked by the optimality map
//! `sigma = (|grad u| - 1)_+^{q-1} grad u / |grad u|`, which vanishes
//! wherever the potential is 1-Lipschitz, so the associated elliptic
//! equation is strongly degenerate (`q >= 2`) or singular (`1 < q < 2`).
//!
//! The crate provides:
//!
//! * [`maps`]: the closed-form cost, conjugate, threshold and comparison
//!   maps;
//! * [`oracles`]: samplable forms of the pointwise vector inequalities
//!   those maps satisfy, with empirical constant calibration;
//! * [`grid`]: staggered fields with an exactly adjoint gradient /
//!   divergence pair, the discrete dual energy, flux recovery and duality
//!   audits;
//! * [`solver`]: a monotone preconditioned descent method for the dual
//!   energy;
//! * [`besov`]: windowed difference-quotient moments, fractional seminorm
//!   estimation, scaling-exponent fits and the regularity audits;
//! * [`problems`]: manufactured instances (radial free-boundary, null,
//!   rough-source and smooth-source families);
//! * [`io`]: binary field containers, CSV tables and JSON reports;
//! * [`thresholds`]: the pinned tolerances of the verification suite.
//!
//! All numerics are generic over the scalar type through [`real::Real`]
//! (`f32` or `f64`); the aliases below fix the default `f64` instantiation.

pub mod besov;
pub mod grid;
pub mod io;
pub mod maps;
pub mod oracles;
pub mod poisson;
pub mod problems;
pub mod real;
pub mod solver;
pub mod thresholds;

pub use maps::Exponents;
pub use real::Real;

/// Default `f64` instantiations of the core types.
pub type Domain64 = grid::GridDomain<f64>;
pub type Field64 = grid::ScalarField<f64>;
pub type Flux64 = grid::FluxField<f64>;
pub type Exponents64 = maps::Exponents<f64>;
pub type Solution64 = solver::Solution<f64>;
pub type SolverConfig64 = solver::SolverConfig<f64>;
pub type Problem64 = problems::ProblemSpec<f64>;
pub type Window64 = besov::Window<f64>;

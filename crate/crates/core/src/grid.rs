//! Uniform staggered grids and the discrete calculus of the dual problem.
//!
//! Scalars (`u`, `f`) live on cell centers. Vector fields (`sigma`,
//! gradients) are face centered: component `s` at flat index `c` sits on the
//! face between cell `c` and its upward neighbour along axis `s`, so each
//! cell owns one face per axis and flux arrays have cell shape.
//!
//! [`discrete_gradient`] takes forward differences onto faces and
//! [`discrete_divergence`] takes backward differences onto cells; the pair
//! satisfies the summation-by-parts identity
//! `<grad u, w> = -<u, div w>` exactly, in both boundary modes. In Neumann
//! mode the upward faces of the last cell layer are boundary faces pinned to
//! zero, which encodes the no-flux condition and makes the same wrapped
//! index arithmetic exact for both modes.
//!
//! The dual objective minimized by the solver is
//! `J(u) = integral of H*(grad u) - integral of u f`, discretized cellwise
//! with the owner-face gradient vector. Its exact first variation is
//! `-div(H_{q-1}(grad u)) - f`, so the energy, the recovered flux and the
//! Euler--Lagrange residual are mutually consistent identities rather than
//! independent discretizations.

use crate::maps::Exponents;
use crate::real::{fast_pow, Accumulator, Real};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grids need 2 or 3 axes; got {0}")]
    BadDimension(usize),
    #[error("grids need at least {min} cells per axis; got {got}")]
    TooFewCells { min: usize, got: usize },
    #[error("spacing must be positive and finite; got {0}")]
    BadSpacing(f64),
    #[error("field length {got} does not match the {want} cells of its domain")]
    LengthMismatch { got: usize, want: usize },
    #[error("source term must have zero mean; got mean {0}")]
    NonZeroMeanSource(f64),
    #[error("fields live on different domains")]
    DomainMismatch,
    #[error("flux is infeasible: divergence residual {residual} exceeds {allowed}")]
    InfeasibleFlux { residual: f64, allowed: f64 },
}

/// Boundary handling for fields and difference operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Wrapped indices; the default for interior regularity experiments.
    Periodic,
    /// No-flux walls: normal components on boundary faces are pinned to 0.
    Neumann,
}

pub const MIN_CELLS_PER_AXIS: usize = 16;

/// Uniform box of `dims` cells per axis with common `spacing`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDomain<T> {
    dims: Vec<usize>,
    spacing: T,
    boundary: Boundary,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl<T: Real> GridDomain<T> {
    pub fn new(dims: &[usize], spacing: T, boundary: Boundary) -> Result<Self, GridError> {
        if dims.len() < 2 || dims.len() > 3 {
            return Err(GridError::BadDimension(dims.len()));
        }
        for &d in dims {
            if d < MIN_CELLS_PER_AXIS {
                return Err(GridError::TooFewCells {
                    min: MIN_CELLS_PER_AXIS,
                    got: d,
                });
            }
        }
        if !(spacing > T::zero()) || !spacing.is_finite() {
            return Err(GridError::BadSpacing(spacing.as_f64()));
        }
        let mut strides = vec![1usize; dims.len()];
        for s in (0..dims.len().saturating_sub(1)).rev() {
            strides[s] = strides[s + 1] * dims[s + 1];
        }
        Ok(Self {
            dims: dims.to_vec(),
            spacing,
            boundary,
            strides,
        })
    }

    /// Unit box helper: `n` cells per axis, spacing `1/n`.
    pub fn unit_square(n: usize, boundary: Boundary) -> Result<Self, GridError> {
        Self::new(&[n, n], T::one() / T::of(n as f64), boundary)
    }

    #[inline]
    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    #[inline]
    pub fn spacing(&self) -> T {
        self.spacing
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        self.dims.iter().product()
    }

    /// `spacing^n`, the cell volume weight of discrete integrals.
    pub fn cell_volume(&self) -> T {
        let mut v = T::one();
        for _ in 0..self.ndim() {
            v = v * self.spacing;
        }
        v
    }

    pub fn box_lengths(&self) -> Vec<T> {
        self.dims
            .iter()
            .map(|&d| T::of(d as f64) * self.spacing)
            .collect()
    }

    #[inline]
    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Flat index of the cell with the given coordinates.
    pub fn index_of(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c * s)
            .sum()
    }

    /// Write the coordinates of flat index `idx` into `coords`.
    #[inline]
    pub fn coords_of(&self, idx: usize, coords: &mut [usize]) {
        let mut rest = idx;
        for s in 0..self.dims.len() {
            coords[s] = rest / self.strides[s];
            rest %= self.strides[s];
        }
    }

    /// Advance row-major coordinates by one cell; `idx + 1` stays in sync.
    #[inline]
    pub(crate) fn advance(&self, coords: &mut [usize]) {
        for s in (0..self.dims.len()).rev() {
            coords[s] += 1;
            if coords[s] < self.dims[s] {
                return;
            }
            coords[s] = 0;
        }
    }

    /// Index of the upward neighbour along `s`, wrapping at the top.
    #[inline]
    pub(crate) fn up(&self, idx: usize, coords: &[usize], s: usize) -> usize {
        if coords[s] + 1 == self.dims[s] {
            idx - (self.dims[s] - 1) * self.strides[s]
        } else {
            idx + self.strides[s]
        }
    }

    /// Index of the downward neighbour along `s`, wrapping at the bottom.
    #[inline]
    pub(crate) fn down(&self, idx: usize, coords: &[usize], s: usize) -> usize {
        if coords[s] == 0 {
            idx + (self.dims[s] - 1) * self.strides[s]
        } else {
            idx - self.strides[s]
        }
    }

    /// Index shifted by `m` whole cells along `s` (periodic arithmetic).
    pub fn shifted(&self, idx: usize, coords: &[usize], s: usize, m: isize) -> usize {
        let d = self.dims[s] as isize;
        let nc = (coords[s] as isize + m).rem_euclid(d) as usize;
        idx - coords[s] * self.strides[s] + nc * self.strides[s]
    }

    /// Cell center of flat index `idx`.
    pub fn cell_center_into(&self, idx: usize, out: &mut [T]) {
        let mut rest = idx;
        for s in 0..self.dims.len() {
            let c = rest / self.strides[s];
            rest %= self.strides[s];
            out[s] = (T::of(c as f64) + T::of(0.5)) * self.spacing;
        }
    }

    /// Center of the face owned by cell `idx` along `axis`: the cell center
    /// moved half a spacing up that axis.
    pub fn face_center_into(&self, idx: usize, axis: usize, out: &mut [T]) {
        self.cell_center_into(idx, out);
        out[axis] = out[axis] + self.spacing * T::of(0.5);
    }

    /// True when `coords` owns a pinned boundary face along `s`.
    #[inline]
    pub(crate) fn owns_boundary_face(&self, coords: &[usize], s: usize) -> bool {
        self.boundary == Boundary::Neumann && coords[s] + 1 == self.dims[s]
    }
}

/// Scalar field on cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    domain: GridDomain<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(domain: &GridDomain<T>) -> Self {
        Self {
            domain: domain.clone(),
            values: vec![T::zero(); domain.num_cells()],
        }
    }

    pub fn from_values(domain: &GridDomain<T>, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != domain.num_cells() {
            return Err(GridError::LengthMismatch {
                got: values.len(),
                want: domain.num_cells(),
            });
        }
        Ok(Self {
            domain: domain.clone(),
            values,
        })
    }

    /// Evaluate `f` at every cell center.
    pub fn from_fn(domain: &GridDomain<T>, mut f: impl FnMut(&[T]) -> T) -> Self {
        let n = domain.ndim();
        let mut x = vec![T::zero(); n];
        let mut values = Vec::with_capacity(domain.num_cells());
        for idx in 0..domain.num_cells() {
            domain.cell_center_into(idx, &mut x);
            values.push(f(&x));
        }
        Self {
            domain: domain.clone(),
            values,
        }
    }

    #[inline]
    pub fn domain(&self) -> &GridDomain<T> {
        &self.domain
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn mean(&self) -> T {
        let mut acc = Accumulator::new();
        for &v in &self.values {
            acc.add(v);
        }
        acc.total() / T::of(self.values.len() as f64)
    }

    pub fn subtract_mean(&mut self) {
        let m = self.mean();
        for v in &mut self.values {
            *v = *v - m;
        }
    }

    /// `L^2` norm with the `spacing^n` volume weight.
    pub fn l2_norm(&self) -> T {
        let mut acc = Accumulator::new();
        for &v in &self.values {
            acc.add(v * v);
        }
        (self.domain.cell_volume() * acc.total()).sqrt()
    }

    pub fn linf_norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// Volume-weighted inner product.
    pub fn l2_inner(&self, other: &Self) -> T {
        debug_assert_eq!(self.values.len(), other.values.len());
        let mut acc = Accumulator::new();
        for (&a, &b) in self.values.iter().zip(&other.values) {
            acc.add(a * b);
        }
        self.domain.cell_volume() * acc.total()
    }
}

/// Face-centered vector field in the owner-cell layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField<T> {
    domain: GridDomain<T>,
    comps: Vec<Vec<T>>,
}

impl<T: Real> FluxField<T> {
    pub fn zeros(domain: &GridDomain<T>) -> Self {
        Self {
            domain: domain.clone(),
            comps: vec![vec![T::zero(); domain.num_cells()]; domain.ndim()],
        }
    }

    /// Sample `f(face_center, axis)` on every face, honouring the Neumann
    /// pin on boundary faces.
    pub fn from_fn(domain: &GridDomain<T>, mut f: impl FnMut(&[T], usize) -> T) -> Self {
        let n = domain.ndim();
        let mut x = vec![T::zero(); n];
        let mut coords = vec![0usize; n];
        let mut comps = vec![vec![T::zero(); domain.num_cells()]; n];
        for idx in 0..domain.num_cells() {
            for s in 0..n {
                if domain.owns_boundary_face(&coords, s) {
                    continue;
                }
                domain.face_center_into(idx, s, &mut x);
                comps[s][idx] = f(&x, s);
            }
            domain.advance(&mut coords);
        }
        Self {
            domain: domain.clone(),
            comps,
        }
    }

    #[inline]
    pub fn domain(&self) -> &GridDomain<T> {
        &self.domain
    }

    #[inline]
    pub fn component(&self, s: usize) -> &[T] {
        &self.comps[s]
    }

    #[inline]
    pub fn component_mut(&mut self, s: usize) -> &mut [T] {
        &mut self.comps[s]
    }

    /// The vector of owner faces of cell `idx`.
    #[inline]
    pub fn cell_vector_into(&self, idx: usize, out: &mut [T]) {
        for (s, c) in self.comps.iter().enumerate() {
            out[s] = c[idx];
        }
    }

    /// Zero the normal components on boundary faces (no-op when periodic).
    pub fn enforce_boundary_pin(&mut self) {
        if self.domain.boundary != Boundary::Neumann {
            return;
        }
        let n = self.domain.ndim();
        let mut coords = vec![0usize; n];
        for idx in 0..self.domain.num_cells() {
            for s in 0..n {
                if coords[s] + 1 == self.domain.dims[s] {
                    self.comps[s][idx] = T::zero();
                }
            }
            self.domain.advance(&mut coords);
        }
    }

    /// `L^2` norm over all components with the volume weight.
    pub fn l2_norm(&self) -> T {
        let mut acc = Accumulator::new();
        for c in &self.comps {
            for &v in c {
                acc.add(v * v);
            }
        }
        (self.domain.cell_volume() * acc.total()).sqrt()
    }

    /// `L^2` distance to another flux on the same domain.
    pub fn l2_distance(&self, other: &Self) -> T {
        debug_assert_eq!(self.domain.dims, other.domain.dims);
        let mut acc = Accumulator::new();
        for (a, b) in self.comps.iter().zip(&other.comps) {
            for (&x, &y) in a.iter().zip(b) {
                let d = x - y;
                acc.add(d * d);
            }
        }
        (self.domain.cell_volume() * acc.total()).sqrt()
    }

    pub fn linf_norm(&self) -> T {
        self.comps.iter().flatten().fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

/// Uniform access to cellwise components of scalar and flux fields, used by
/// the window statistics in [`crate::besov`].
pub trait CellSampled<T: Real> {
    fn domain(&self) -> &GridDomain<T>;
    fn components(&self) -> usize;
    fn value(&self, comp: usize, idx: usize) -> T;
}

impl<T: Real> CellSampled<T> for ScalarField<T> {
    fn domain(&self) -> &GridDomain<T> {
        &self.domain
    }
    fn components(&self) -> usize {
        1
    }
    #[inline]
    fn value(&self, _comp: usize, idx: usize) -> T {
        self.values[idx]
    }
}

impl<T: Real> CellSampled<T> for FluxField<T> {
    fn domain(&self) -> &GridDomain<T> {
        &self.domain
    }
    fn components(&self) -> usize {
        self.domain.ndim()
    }
    #[inline]
    fn value(&self, comp: usize, idx: usize) -> T {
        self.comps[comp][idx]
    }
}

/// Forward differences of `u` onto owner faces. Boundary faces carry 0 in
/// Neumann mode, which is the reflection convention.
pub fn discrete_gradient<T: Real>(u: &ScalarField<T>) -> FluxField<T> {
    let mut g = FluxField::zeros(u.domain());
    discrete_gradient_into(u, &mut g);
    g
}

pub(crate) fn discrete_gradient_into<T: Real>(u: &ScalarField<T>, g: &mut FluxField<T>) {
    let domain = u.domain().clone();
    let n = domain.ndim();
    let inv = T::one() / domain.spacing();
    let mut coords = vec![0usize; n];
    let vals = u.values();
    for idx in 0..domain.num_cells() {
        for s in 0..n {
            g.comps[s][idx] = if domain.owns_boundary_face(&coords, s) {
                T::zero()
            } else {
                (vals[domain.up(idx, &coords, s)] - vals[idx]) * inv
            };
        }
        domain.advance(&mut coords);
    }
}

/// Backward differences of owner-face values onto cells; the exact negative
/// adjoint of [`discrete_gradient`] in both boundary modes.
pub fn discrete_divergence<T: Real>(w: &FluxField<T>) -> ScalarField<T> {
    let mut d = ScalarField::zeros(w.domain());
    discrete_divergence_into(w, &mut d);
    d
}

pub(crate) fn discrete_divergence_into<T: Real>(w: &FluxField<T>, out: &mut ScalarField<T>) {
    let domain = w.domain().clone();
    let n = domain.ndim();
    let inv = T::one() / domain.spacing();
    let mut coords = vec![0usize; n];
    for idx in 0..domain.num_cells() {
        let mut acc = T::zero();
        for s in 0..n {
            acc = acc + (w.comps[s][idx] - w.comps[s][domain.down(idx, &coords, s)]);
        }
        out.values_mut()[idx] = acc * inv;
        domain.advance(&mut coords);
    }
}

fn require_same_domain<T: Real>(a: &GridDomain<T>, b: &GridDomain<T>) -> Result<(), GridError> {
    if a.dims != b.dims || a.boundary != b.boundary {
        return Err(GridError::DomainMismatch);
    }
    Ok(())
}

/// Tolerance on the mean of a source term, relative to its sup norm.
pub const ZERO_MEAN_TOL: f64 = 1e-12;

fn require_zero_mean<T: Real>(f: &ScalarField<T>) -> Result<(), GridError> {
    let mean = f.mean().as_f64();
    let scale = 1.0 + f.linf_norm().as_f64();
    if mean.abs() > ZERO_MEAN_TOL * scale {
        return Err(GridError::NonZeroMeanSource(mean));
    }
    Ok(())
}

/// Dual objective `J(u) = spacing^n (sum_c H*(g(c)) - sum_c u f)`, the
/// quantity the solver minimizes; convex in `u` and zero at `u = 0`.
pub fn dual_energy<T: Real>(
    u: &ScalarField<T>,
    f: &ScalarField<T>,
    e: &Exponents<T>,
) -> Result<T, GridError> {
    require_same_domain(u.domain(), f.domain())?;
    require_zero_mean(f)?;
    Ok(dual_energy_unchecked(u, f, e))
}

pub(crate) fn dual_energy_unchecked<T: Real>(
    u: &ScalarField<T>,
    f: &ScalarField<T>,
    e: &Exponents<T>,
) -> T {
    let domain = u.domain();
    let n = domain.ndim();
    let inv = T::one() / domain.spacing();
    let q = e.q();
    let one = T::one();
    let mut coords = vec![0usize; n];
    let mut hstar = Accumulator::new();
    let mut load = Accumulator::new();
    let uv = u.values();
    let fv = f.values();
    for idx in 0..domain.num_cells() {
        let mut r2 = T::zero();
        for s in 0..n {
            if !domain.owns_boundary_face(&coords, s) {
                let g = (uv[domain.up(idx, &coords, s)] - uv[idx]) * inv;
                r2 = r2 + g * g;
            }
        }
        let ex = r2.sqrt() - one;
        if ex > T::zero() {
            hstar.add(fast_pow(ex, q));
        }
        load.add(uv[idx] * fv[idx]);
        domain.advance(&mut coords);
    }
    domain.cell_volume() * (hstar.total() / q - load.total())
}

/// Optimal flux map: `H_{q-1}` applied facewise to the owner-face gradient.
pub fn recover_flux<T: Real>(u: &ScalarField<T>, e: &Exponents<T>) -> FluxField<T> {
    let mut flux = FluxField::zeros(u.domain());
    recover_flux_into(u, e, &mut flux);
    flux
}

pub(crate) fn recover_flux_into<T: Real>(
    u: &ScalarField<T>,
    e: &Exponents<T>,
    flux: &mut FluxField<T>,
) {
    threshold_map_into(u, e.q() - T::one(), flux);
}

/// `H_a` of the discrete gradient, written facewise into `out`. The same
/// gradient reconstruction as the energy, so measured fields are exactly
/// the ones the solver controls.
pub fn threshold_map_into<T: Real>(u: &ScalarField<T>, a: T, out: &mut FluxField<T>) {
    let domain = u.domain().clone();
    let n = domain.ndim();
    let inv = T::one() / domain.spacing();
    let one = T::one();
    let mut coords = vec![0usize; n];
    let mut g = [T::zero(); 3];
    let uv = u.values();
    for idx in 0..domain.num_cells() {
        let mut r2 = T::zero();
        for s in 0..n {
            let gs = if domain.owns_boundary_face(&coords, s) {
                T::zero()
            } else {
                (uv[domain.up(idx, &coords, s)] - uv[idx]) * inv
            };
            g[s] = gs;
            r2 = r2 + gs * gs;
        }
        let r = r2.sqrt();
        let ex = r - one;
        if ex > T::zero() {
            let scale = fast_pow(ex, a) / r;
            for s in 0..n {
                out.comps[s][idx] = scale * g[s];
            }
        } else {
            for s in 0..n {
                out.comps[s][idx] = T::zero();
            }
        }
        domain.advance(&mut coords);
    }
}

/// Allocating form of [`threshold_map_into`]; `H_{q/2}` of the gradient is
/// `threshold_map(u, e.q() / 2)`.
pub fn threshold_map<T: Real>(u: &ScalarField<T>, a: T) -> FluxField<T> {
    let mut out = FluxField::zeros(u.domain());
    threshold_map_into(u, a, &mut out);
    out
}

/// Euler--Lagrange residual `-div(H_{q-1}(grad u)) - f`, projected to zero
/// mean. Vanishing residual is the discrete weak form of the equation
/// against all zero-mean test fields.
pub fn energy_gradient<T: Real>(
    u: &ScalarField<T>,
    f: &ScalarField<T>,
    e: &Exponents<T>,
) -> Result<ScalarField<T>, GridError> {
    require_same_domain(u.domain(), f.domain())?;
    require_zero_mean(f)?;
    let mut flux = FluxField::zeros(u.domain());
    let mut out = ScalarField::zeros(u.domain());
    energy_gradient_into(u, f, e, &mut flux, &mut out);
    Ok(out)
}

pub(crate) fn energy_gradient_into<T: Real>(
    u: &ScalarField<T>,
    f: &ScalarField<T>,
    e: &Exponents<T>,
    flux: &mut FluxField<T>,
    out: &mut ScalarField<T>,
) {
    recover_flux_into(u, e, flux);
    discrete_divergence_into(flux, out);
    for (r, &fv) in out.values_mut().iter_mut().zip(f.values()) {
        *r = -*r - fv;
    }
    out.subtract_mean();
}

/// `L^2` norm of `-div sigma - f`, the constraint residual of the primal
/// problem. For `sigma = recover_flux(u)` it coincides with the norm of the
/// (unprojected) Euler--Lagrange residual by construction.
pub fn divergence_residual<T: Real>(sigma: &FluxField<T>, f: &ScalarField<T>) -> T {
    let mut d = discrete_divergence(sigma);
    for (r, &fv) in d.values_mut().iter_mut().zip(f.values()) {
        *r = -*r - fv;
    }
    d.l2_norm()
}

/// Primal transport cost `spacing^n sum_c H(sigma(c))`.
pub fn primal_value<T: Real>(sigma: &FluxField<T>, e: &Exponents<T>) -> T {
    let domain = sigma.domain();
    let n = domain.ndim();
    let p = e.p();
    let mut acc = Accumulator::new();
    for idx in 0..domain.num_cells() {
        let mut r2 = T::zero();
        for s in 0..n {
            let v = sigma.comps[s][idx];
            r2 = r2 + v * v;
        }
        if r2 > T::zero() {
            let r = r2.sqrt();
            acc.add(fast_pow(r, p) / p + r);
        }
    }
    domain.cell_volume() * acc.total()
}

/// Maximized dual value `integral(u f) - integral(H*(grad u))`; the
/// negation of [`dual_energy`].
pub fn dual_value<T: Real>(
    u: &ScalarField<T>,
    f: &ScalarField<T>,
    e: &Exponents<T>,
) -> Result<T, GridError> {
    Ok(-dual_energy(u, f, e)?)
}

/// Primal value minus dual value for a feasible pair.
///
/// Nonnegative up to rounding for any flux satisfying the divergence
/// constraint (weak duality is an exact discrete identity thanks to
/// summation by parts), and within solver tolerance of zero at the solved
/// pair. Rejects a flux whose divergence residual exceeds `feasibility_tol`.
pub fn duality_gap<T: Real>(
    u: &ScalarField<T>,
    sigma: &FluxField<T>,
    f: &ScalarField<T>,
    e: &Exponents<T>,
    feasibility_tol: T,
) -> Result<T, GridError> {
    require_same_domain(u.domain(), f.domain())?;
    require_same_domain(sigma.domain(), f.domain())?;
    let res = divergence_residual(sigma, f);
    if res > feasibility_tol {
        return Err(GridError::InfeasibleFlux {
            residual: res.as_f64(),
            allowed: feasibility_tol.as_f64(),
        });
    }
    Ok(primal_value(sigma, e) - dual_value(u, f, e)?)
}

/// Maximum over cells of the Euclidean norm of the owner-face gradient
/// vector; fields below 1 are in the degenerate (zero-energy) region.
pub fn max_gradient_norm<T: Real>(u: &ScalarField<T>) -> T {
    let g = discrete_gradient(u);
    let domain = u.domain();
    let n = domain.ndim();
    let mut worst = T::zero();
    for idx in 0..domain.num_cells() {
        let mut r2 = T::zero();
        for s in 0..n {
            let v = g.comps[s][idx];
            r2 = r2 + v * v;
        }
        worst = worst.max(r2.sqrt());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::Exponents;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(q: f64) -> Exponents<f64> {
        Exponents::new(q).unwrap()
    }

    fn random_scalar(domain: &GridDomain<f64>, seed: u64) -> ScalarField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..domain.num_cells())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        ScalarField::from_values(domain, vals).unwrap()
    }

    fn random_flux(domain: &GridDomain<f64>, seed: u64) -> FluxField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = FluxField::zeros(domain);
        for s in 0..domain.ndim() {
            for v in w.component_mut(s) {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        w.enforce_boundary_pin();
        w
    }

    #[test]
    fn domain_validation() {
        assert!(GridDomain::<f64>::new(&[32], 0.1, Boundary::Periodic).is_err());
        assert!(GridDomain::<f64>::new(&[8, 32], 0.1, Boundary::Periodic).is_err());
        assert!(GridDomain::<f64>::new(&[32, 32], 0.0, Boundary::Periodic).is_err());
        assert!(GridDomain::<f64>::new(&[16, 16, 16], 0.5, Boundary::Neumann).is_ok());
    }

    #[test]
    fn summation_by_parts_is_exact_in_both_modes() {
        for boundary in [Boundary::Periodic, Boundary::Neumann] {
            let domain = GridDomain::<f64>::unit_square(32, boundary).unwrap();
            for seed in 0..4u64 {
                let u = random_scalar(&domain, seed);
                let w = random_flux(&domain, 100 + seed);
                let g = discrete_gradient(&u);
                let d = discrete_divergence(&w);
                let mut lhs = crate::real::Accumulator::new();
                for s in 0..2 {
                    for (a, b) in g.component(s).iter().zip(w.component(s)) {
                        lhs.add(a * b);
                    }
                }
                let mut rhs = crate::real::Accumulator::new();
                for (a, b) in u.values().iter().zip(d.values()) {
                    rhs.add(a * b);
                }
                assert!(
                    (lhs.total() + rhs.total()).abs() <= 1e-13,
                    "{boundary:?} seed {seed}: {}",
                    lhs.total() + rhs.total()
                );
            }
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let domain = GridDomain::<f64>::unit_square(16, Boundary::Periodic).unwrap();
        let u = ScalarField::from_fn(&domain, |_| 3.7);
        let g = discrete_gradient(&u);
        assert!(g.l2_norm() == 0.0);
    }

    #[test]
    fn interior_faces_of_linear_field_carry_the_slope() {
        let domain = GridDomain::<f64>::unit_square(16, Boundary::Neumann).unwrap();
        let u = ScalarField::from_fn(&domain, |x| x[0]);
        let g = discrete_gradient(&u);
        let mut coords = [0usize; 2];
        for idx in 0..domain.num_cells() {
            domain.coords_of(idx, &mut coords);
            if coords[0] + 1 < 16 {
                assert_relative_eq!(g.component(0)[idx], 1.0, max_relative = 1e-12);
            } else {
                assert_eq!(g.component(0)[idx], 0.0);
            }
            assert!(g.component(1)[idx].abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_of_gradient_is_three_point_laplacian() {
        let domain = GridDomain::<f64>::unit_square(64, Boundary::Periodic).unwrap();
        let dx = domain.spacing();
        let u = ScalarField::from_fn(&domain, |x| (std::f64::consts::TAU * x[0]).cos());
        let lap = discrete_divergence(&discrete_gradient(&u));
        let mut coords = [0usize; 2];
        for idx in 0..domain.num_cells() {
            domain.coords_of(idx, &mut coords);
            let x0 = (coords[0] as f64 + 0.5) * dx;
            let up = (std::f64::consts::TAU * (x0 + dx)).cos();
            let dn = (std::f64::consts::TAU * (x0 - dx)).cos();
            let ctr = (std::f64::consts::TAU * x0).cos();
            let stencil = (up - 2.0 * ctr + dn) / (dx * dx);
            assert_relative_eq!(lap.values()[idx], stencil, max_relative = 1e-9, epsilon = 1e-10);
        }
        // Telescoping: the divergence of any flux has zero mean.
        let w = random_flux(&domain, 5);
        assert!(discrete_divergence(&w).mean().abs() < 1e-14);
    }

    #[test]
    fn zero_divergence_for_zero_flux() {
        let domain = GridDomain::<f64>::unit_square(16, Boundary::Neumann).unwrap();
        let w = FluxField::zeros(&domain);
        assert_eq!(discrete_divergence(&w).l2_norm(), 0.0);
    }

    #[test]
    fn dual_energy_examples() {
        let domain = GridDomain::<f64>::unit_square(32, Boundary::Periodic).unwrap();
        let f = ScalarField::zeros(&domain);
        let q2 = e(2.0);
        // u = 0.
        assert_eq!(dual_energy(&ScalarField::zeros(&domain), &f, &q2).unwrap(), 0.0);
        // Any discretely 1-Lipschitz field has exactly zero energy.
        let u = ScalarField::from_fn(&domain, |x| {
            0.4 * ((x[0] - 0.5).abs() + 0.2 * (x[1] - 0.31).abs())
        });
        assert!(max_gradient_norm(&u) <= 1.0);
        assert_eq!(dual_energy(&u, &f, &q2).unwrap(), 0.0);
        // Periodic triangle wave of slope 2: energy is volume * (2-1)^2 / 2.
        let tri = ScalarField::from_fn(&domain, |x| {
            let t = x[0];
            2.0 * if t < 0.5 { t } else { 1.0 - t }
        });
        assert_relative_eq!(dual_energy(&tri, &f, &q2).unwrap(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn dual_energy_rejects_biased_source() {
        let domain = GridDomain::<f64>::unit_square(16, Boundary::Periodic).unwrap();
        let f = ScalarField::from_fn(&domain, |_| 0.5);
        assert!(matches!(
            dual_energy(&ScalarField::zeros(&domain), &f, &e(2.0)),
            Err(GridError::NonZeroMeanSource(_))
        ));
    }

    #[test]
    fn recover_flux_examples() {
        let domain = GridDomain::<f64>::unit_square(32, Boundary::Periodic).unwrap();
        let q2 = e(2.0);
        // Gradients inside the unit ball give zero flux.
        let u = ScalarField::from_fn(&domain, |x| 0.3 * (std::f64::consts::TAU * x[0]).sin());
        if max_gradient_norm(&u) <= 1.0 {
            assert_eq!(recover_flux(&u, &q2).l2_norm(), 0.0);
        }
        // Triangle wave of slope 2: flux magnitude 1 on every face.
        let tri = ScalarField::from_fn(&domain, |x| {
            let t = x[0];
            2.0 * if t < 0.5 { t } else { 1.0 - t }
        });
        let flux = recover_flux(&tri, &q2);
        for idx in 0..domain.num_cells() {
            let m = (flux.component(0)[idx].powi(2) + flux.component(1)[idx].powi(2)).sqrt();
            assert_relative_eq!(m, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn flux_magnitude_matches_threshold_power_identity() {
        // |sigma| = |H_{q/2}(grad u)|^{2/p} facewise.
        let domain = GridDomain::<f64>::unit_square(24, Boundary::Periodic).unwrap();
        let u = ScalarField::from_fn(&domain, |x| {
            1.9 * (std::f64::consts::TAU * x[0]).sin() + 0.7 * (std::f64::consts::TAU * x[1]).cos()
        });
        for q in [1.5, 2.0, 3.0] {
            let ex = e(q);
            let sigma = recover_flux(&u, &ex);
            let hq2 = threshold_map(&u, q / 2.0);
            for idx in 0..domain.num_cells() {
                let sm = (sigma.component(0)[idx].powi(2) + sigma.component(1)[idx].powi(2)).sqrt();
                let hm = (hq2.component(0)[idx].powi(2) + hq2.component(1)[idx].powi(2)).sqrt();
                let want = hm.powf(2.0 / ex.p());
                assert!((sm - want).abs() <= 1e-12 * (1.0 + want), "q={q}");
            }
        }
    }

    #[test]
    fn energy_gradient_vanishes_exactly_on_lipschitz_fields() {
        for boundary in [Boundary::Periodic, Boundary::Neumann] {
            let domain = GridDomain::<f64>::unit_square(32, boundary).unwrap();
            let f = ScalarField::zeros(&domain);
            let u = ScalarField::from_fn(&domain, |x| {
                0.5 * ((x[0] - 0.47).powi(2) + (x[1] - 0.52).powi(2)).sqrt()
            });
            assert!(max_gradient_norm(&u) <= 1.0);
            let r = energy_gradient(&u, &f, &e(1.5)).unwrap();
            assert_eq!(r.linf_norm(), 0.0);
        }
    }

    #[test]
    fn energy_gradient_matches_directional_difference() {
        let domain = GridDomain::<f64>::unit_square(32, Boundary::Periodic).unwrap();
        let q_values = [1.5, 2.0, 3.0];
        let mut u = ScalarField::from_fn(&domain, |x| {
            0.35 * (std::f64::consts::TAU * x[0]).sin() + 0.3 * (std::f64::consts::TAU * x[1]).cos()
        });
        u.subtract_mean();
        let mut f = ScalarField::from_fn(&domain, |x| {
            (std::f64::consts::TAU * x[0]).cos() * (std::f64::consts::TAU * x[1]).sin()
        });
        f.subtract_mean();
        let mut phi = ScalarField::from_fn(&domain, |x| {
            (std::f64::consts::TAU * 2.0 * x[1]).sin() + 0.5 * (std::f64::consts::TAU * x[0]).cos()
        });
        phi.subtract_mean();
        for q in q_values {
            let ex = e(q);
            let g = energy_gradient(&u, &f, &ex).unwrap();
            let inner = g.l2_inner(&phi);
            let t = 1e-6;
            let mut ut = u.clone();
            for (a, &b) in ut.values_mut().iter_mut().zip(phi.values()) {
                *a += t * b;
            }
            let fd = (dual_energy(&ut, &f, &ex).unwrap() - dual_energy(&u, &f, &ex).unwrap()) / t;
            assert!(
                (fd - inner).abs() <= 1e-4 * inner.abs().max(1e-8),
                "q={q}: fd={fd} inner={inner}"
            );
        }
    }

    #[test]
    fn dual_energy_is_midpoint_convex() {
        let domain = GridDomain::<f64>::unit_square(24, Boundary::Periodic).unwrap();
        let mut f = random_scalar(&domain, 40);
        f.subtract_mean();
        let ex = e(1.7);
        for seed in 0..5u64 {
            let mut u = random_scalar(&domain, seed);
            let mut v = random_scalar(&domain, 50 + seed);
            for w in [&mut u, &mut v] {
                for x in w.values_mut() {
                    *x *= 0.1;
                }
            }
            let mut mid = u.clone();
            for (m, &b) in mid.values_mut().iter_mut().zip(v.values()) {
                *m = 0.5 * (*m + b);
            }
            let em = dual_energy(&mid, &f, &ex).unwrap();
            let avg = 0.5 * (dual_energy(&u, &f, &ex).unwrap() + dual_energy(&v, &f, &ex).unwrap());
            assert!(em <= avg + 1e-12);
        }
    }

    #[test]
    fn weak_duality_for_arbitrary_feasible_pairs() {
        // Feasibility by construction: f := -div w for a random flux w.
        for boundary in [Boundary::Periodic, Boundary::Neumann] {
            let domain = GridDomain::<f64>::unit_square(24, boundary).unwrap();
            let ex = e(1.5);
            for seed in 0..5u64 {
                let w = random_flux(&domain, seed);
                let mut f = discrete_divergence(&w);
                for v in f.values_mut() {
                    *v = -*v;
                }
                let u = random_scalar(&domain, 60 + seed);
                let gap = duality_gap(&u, &w, &f, &ex, 1e-10).unwrap();
                assert!(gap >= -1e-10, "{boundary:?} seed {seed}: gap {gap}");
            }
        }
    }

    #[test]
    fn duality_gap_trivial_and_infeasible_cases() {
        let domain = GridDomain::<f64>::unit_square(16, Boundary::Periodic).unwrap();
        let ex = e(2.0);
        let z = ScalarField::zeros(&domain);
        let w = FluxField::zeros(&domain);
        assert_eq!(duality_gap(&z, &w, &z, &ex, 1e-12).unwrap(), 0.0);
        let mut f = random_scalar(&domain, 1);
        f.subtract_mean();
        assert!(matches!(
            duality_gap(&z, &w, &f, &ex, 1e-10),
            Err(GridError::InfeasibleFlux { .. })
        ));
    }

    #[test]
    fn divergence_residual_of_own_divergence_is_zero() {
        let domain = GridDomain::<f64>::unit_square(24, Boundary::Periodic).unwrap();
        let w = random_flux(&domain, 9);
        let mut f = discrete_divergence(&w);
        for v in f.values_mut() {
            *v = -*v;
        }
        assert!(divergence_residual(&w, &f) <= 1e-13);
        let z = FluxField::zeros(&domain);
        let zf = ScalarField::zeros(&domain);
        assert_eq!(divergence_residual(&z, &zf), 0.0);
    }
}

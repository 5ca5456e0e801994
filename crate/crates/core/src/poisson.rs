//! Constant-coefficient Poisson pseudo-inverse on the solver's grids.
//!
//! Applies `(-div grad)^+` on zero-mean fields by diagonalizing the
//! discrete Laplacian axis by axis: complex FFT for periodic axes, an
//! even-extension FFT (a DCT-II / DCT-III pair) for Neumann axes, whose
//! cosine modes are exactly the eigenvectors of the pinned-face Laplacian.
//! The constant mode is projected out, so the result is the minimum-norm
//! solution of `-lap z = rhs`.
//!
//! The solver uses this operator as a fixed metric: it removes the
//! grid-scale conditioning of the linearized problem while leaving the
//! nonlinear threshold structure untouched. Transforms run in `f64`
//! internally regardless of the field scalar.

use crate::grid::{Boundary, GridDomain, ScalarField};
use crate::real::Real;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct PoissonInverse {
    dims: Vec<usize>,
    strides: Vec<usize>,
    boundary: Boundary,
    /// Laplacian eigenvalue factors per axis and wavenumber, over spacing^2.
    axis_eigs: Vec<Vec<f64>>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    spectral: Vec<Complex<f64>>,
    line: Vec<Complex<f64>>,
}

impl PoissonInverse {
    pub fn new<T: Real>(domain: &GridDomain<T>) -> Self {
        let dims = domain.dims().to_vec();
        let boundary = domain.boundary();
        let dx = domain.spacing().as_f64();
        let mut planner = FftPlanner::new();
        let mut axis_eigs = Vec::with_capacity(dims.len());
        let mut forward = Vec::with_capacity(dims.len());
        let mut inverse = Vec::with_capacity(dims.len());
        let mut maxline = 0usize;
        for &n in &dims {
            let eigs: Vec<f64> = (0..n)
                .map(|k| {
                    let theta = match boundary {
                        Boundary::Periodic => std::f64::consts::TAU * k as f64 / n as f64,
                        Boundary::Neumann => std::f64::consts::PI * k as f64 / n as f64,
                    };
                    (2.0 - 2.0 * theta.cos()) / (dx * dx)
                })
                .collect();
            axis_eigs.push(eigs);
            let len = match boundary {
                Boundary::Periodic => n,
                Boundary::Neumann => 2 * n,
            };
            forward.push(planner.plan_fft_forward(len));
            inverse.push(planner.plan_fft_inverse(len));
            maxline = maxline.max(len);
        }
        let mut strides = vec![1usize; dims.len()];
        for s in (0..dims.len().saturating_sub(1)).rev() {
            strides[s] = strides[s + 1] * dims[s + 1];
        }
        let cells = dims.iter().product();
        Self {
            dims,
            strides,
            boundary,
            axis_eigs,
            forward,
            inverse,
            spectral: vec![Complex::default(); cells],
            line: vec![Complex::default(); maxline],
        }
    }

    /// Overwrite `out` with the zero-mean pseudo-inverse applied to `rhs`.
    pub fn apply<T: Real>(&mut self, rhs: &ScalarField<T>, out: &mut ScalarField<T>) {
        debug_assert_eq!(rhs.domain().dims(), &self.dims[..]);
        for (dst, &src) in self.spectral.iter_mut().zip(rhs.values()) {
            *dst = Complex::new(src.as_f64(), 0.0);
        }
        for axis in 0..self.dims.len() {
            self.transform_axis(axis, true);
        }
        // Divide by the eigenvalue sum, projecting out the constant mode.
        let ndim = self.dims.len();
        let mut coords = vec![0usize; ndim];
        for v in self.spectral.iter_mut() {
            let mut lam = 0.0;
            for s in 0..ndim {
                lam += self.axis_eigs[s][coords[s]];
            }
            *v = if lam > 0.0 {
                *v * (1.0 / lam)
            } else {
                Complex::default()
            };
            for s in (0..ndim).rev() {
                coords[s] += 1;
                if coords[s] < self.dims[s] {
                    break;
                }
                coords[s] = 0;
            }
        }
        for axis in 0..self.dims.len() {
            self.transform_axis(axis, false);
        }
        for (dst, &src) in out.values_mut().iter_mut().zip(&self.spectral) {
            *dst = T::of(src.re);
        }
    }

    /// In-place forward or inverse transform of every line along `axis`.
    fn transform_axis(&mut self, axis: usize, fwd: bool) {
        let n = self.dims[axis];
        let stride = self.strides[axis];
        let cells: usize = self.dims.iter().product();
        let lines = cells / n;
        for line_id in 0..lines {
            let block = line_id / stride;
            let offset = line_id % stride;
            let base = block * stride * n + offset;
            match self.boundary {
                Boundary::Periodic => self.fft_line(base, stride, n, axis, fwd),
                Boundary::Neumann => self.dct_line(base, stride, n, axis, fwd),
            }
        }
    }

    fn fft_line(&mut self, base: usize, stride: usize, n: usize, axis: usize, fwd: bool) {
        for j in 0..n {
            self.line[j] = self.spectral[base + j * stride];
        }
        if fwd {
            self.forward[axis].process(&mut self.line[..n]);
            for j in 0..n {
                self.spectral[base + j * stride] = self.line[j];
            }
        } else {
            self.inverse[axis].process(&mut self.line[..n]);
            let scale = 1.0 / n as f64;
            for j in 0..n {
                self.spectral[base + j * stride] = self.line[j] * scale;
            }
        }
    }

    /// DCT-II (forward) / DCT-III (inverse) through a length-2n FFT of the
    /// even extension. Neumann grids only ever hold real data here, so the
    /// Hermitian reconstruction in the inverse branch is exact.
    fn dct_line(&mut self, base: usize, stride: usize, n: usize, axis: usize, fwd: bool) {
        let m = 2 * n;
        if fwd {
            for j in 0..n {
                let v = self.spectral[base + j * stride];
                self.line[j] = v;
                self.line[m - 1 - j] = v;
            }
            self.forward[axis].process(&mut self.line[..m]);
            for k in 0..n {
                let tw = Complex::from_polar(0.5, -std::f64::consts::PI * k as f64 / m as f64);
                self.spectral[base + k * stride] =
                    Complex::new((tw * self.line[k]).re, 0.0);
            }
        } else {
            let coeff0 = self.spectral[base].re;
            self.line[0] = Complex::new(2.0 * coeff0, 0.0);
            for k in 1..n {
                let c = self.spectral[base + k * stride].re;
                let tw = Complex::from_polar(2.0 * c, std::f64::consts::PI * k as f64 / m as f64);
                self.line[k] = tw;
                self.line[m - k] = tw.conj();
            }
            self.line[n] = Complex::default();
            self.inverse[axis].process(&mut self.line[..m]);
            let scale = 1.0 / m as f64;
            for j in 0..n {
                self.spectral[base + j * stride] = Complex::new(self.line[j].re * scale, 0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{discrete_divergence, discrete_gradient};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_inverse(boundary: Boundary) {
        let domain = GridDomain::<f64>::new(&[24, 18], 1.0 / 24.0, boundary).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rhs = ScalarField::from_values(
            &domain,
            (0..domain.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        rhs.subtract_mean();
        let mut z = ScalarField::zeros(&domain);
        let mut op = PoissonInverse::new(&domain);
        op.apply(&rhs, &mut z);
        // -div grad z should reproduce rhs.
        let lap = discrete_divergence(&discrete_gradient(&z));
        for (a, b) in lap.values().iter().zip(rhs.values()) {
            assert!((-a - b).abs() < 1e-9, "{boundary:?}: {} vs {}", -a, b);
        }
        assert!(z.mean().abs() < 1e-12);
    }

    #[test]
    fn inverts_periodic_laplacian() {
        check_inverse(Boundary::Periodic);
    }

    #[test]
    fn inverts_neumann_laplacian() {
        check_inverse(Boundary::Neumann);
    }

    #[test]
    fn works_in_three_dimensions() {
        let domain = GridDomain::<f64>::new(&[16, 16, 16], 0.0625, Boundary::Periodic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut rhs = ScalarField::from_values(
            &domain,
            (0..domain.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        rhs.subtract_mean();
        let mut z = ScalarField::zeros(&domain);
        PoissonInverse::new(&domain).apply(&rhs, &mut z);
        let lap = discrete_divergence(&discrete_gradient(&z));
        for (a, b) in lap.values().iter().zip(rhs.values()) {
            assert!((-a - b).abs() < 1e-9);
        }
    }
}

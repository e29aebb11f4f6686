//! Derivative operators: complex Hessian `∂²φ/∂z_j∂z̄_k` and `|∇φ|²_ω`.
//!
//! With `∂/∂z_j = ½(∂_{x_j} − i∂_{y_j})` the Hessian entry is
//! `H_jk = ¼[(∂_{x_j}∂_{x_k} + ∂_{y_j}∂_{y_k})φ + i(∂_{x_j}∂_{y_k} − ∂_{y_j}∂_{x_k})φ]`,
//! so for `n = 1` it reduces to `¼Δφ`.

use super::{Fft, HermMat, HermitianField, ScalarField, TorusGrid};
use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Fourier differentiation.
    #[default]
    Spectral,
    /// Second-order centred differences.
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub struct Differentiator {
    grid: TorusGrid,
    backend: Backend,
    fft: Fft,
    /// Symbol of a first derivative along one axis, divided by `i`.
    first: Vec<f64>,
    /// Symbol of a second derivative along one axis.
    second: Vec<f64>,
    /// `¼Δ` symbol in the half-spectrum layout.
    half_quarter: Vec<f64>,
}

impl Differentiator {
    pub fn new(grid: TorusGrid, backend: Backend) -> Self {
        let fft = Fft::new(grid);
        let n = grid.resolution();
        let h = grid.spacing();
        let mut first = vec![0.0; n];
        let mut second = vec![0.0; n];
        for i in 0..n {
            let k = fft.wavenumber(i) as f64;
            match backend {
                Backend::Spectral => {
                    first[i] = if fft.is_nyquist(i) { 0.0 } else { 2.0 * PI * k };
                    second[i] = -(2.0 * PI * k).powi(2);
                }
                Backend::FiniteDifference => {
                    first[i] = (2.0 * PI * k / n as f64).sin() / h;
                    second[i] = -4.0 / (h * h) * (PI * k / n as f64).sin().powi(2);
                }
            }
        }
        let dims = grid.real_dim();
        let half_quarter = (0..fft.half_len())
            .map(|i| {
                let m = fft.half_multi_index(i);
                0.25 * (0..dims).map(|a| second[m[a]]).sum::<f64>()
            })
            .collect();
        Self {
            grid,
            backend,
            fft,
            first,
            second,
            half_quarter,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn fft(&self) -> &Fft {
        &self.fft
    }

    /// Eigenvalue of `¼Δ` (the trace of the Hessian operator) on the Fourier mode at `index`.
    pub fn quarter_laplacian_symbol(&self, index: usize) -> f64 {
        let m = self.grid.multi_index(index);
        0.25 * (0..self.grid.real_dim())
            .map(|a| self.second[m[a]])
            .sum::<f64>()
    }

    /// `¼Δ` symbol indexed like [`Fft::forward_half`].
    pub fn quarter_laplacian_half_symbol(&self) -> &[f64] {
        &self.half_quarter
    }

    /// Largest magnitude of the `¼Δ` symbol; scales round-off in Hessian evaluations.
    pub fn quarter_laplacian_norm(&self) -> f64 {
        let worst = self.second.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        0.25 * worst * self.grid.real_dim() as f64
    }

    pub fn complex_hessian(&self, phi: &ScalarField) -> Result<HermitianField> {
        self.grid.check_same(phi.grid())?;
        let mats = self.hessian_values(phi.values());
        if let Some(i) = mats.iter().position(|m| !m.is_finite()) {
            return Err(Error::NonFinite(format!("complex Hessian at point {i}")));
        }
        HermitianField::new(self.grid, mats)
    }

    /// Hessian matrices of raw grid values (no finiteness check).
    pub fn hessian_values(&self, values: &[f64]) -> Vec<HermMat> {
        match (self.backend, self.grid.n()) {
            (Backend::FiniteDifference, 1) => self
                .fd_quarter_laplacian(values)
                .into_iter()
                .map(|v| HermMat::diag(&[v]))
                .collect(),
            (Backend::FiniteDifference, _) => self.fd_hessian_n2(values),
            (Backend::Spectral, 1) => self
                .spectral_quarter_laplacian(values)
                .into_iter()
                .map(|v| HermMat::diag(&[v]))
                .collect(),
            (Backend::Spectral, _) => self.spectral_hessian_n2(values),
        }
    }

    /// `tr(H(φ))`, i.e. `¼Δφ`.
    pub fn quarter_laplacian(&self, values: &[f64]) -> Vec<f64> {
        match self.backend {
            Backend::FiniteDifference if self.grid.n() == 1 => self.fd_quarter_laplacian(values),
            Backend::Spectral => self.spectral_quarter_laplacian(values),
            Backend::FiniteDifference => self
                .fd_hessian_n2(values)
                .iter()
                .map(HermMat::trace)
                .collect(),
        }
    }

    /// `|∇φ|²_ω = Σ_j |∂φ/∂z_j|² = ¼ Σ_j (φ_{x_j}² + φ_{y_j}²)`.
    pub fn gradient_sq(&self, phi: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(phi.grid())?;
        let mut acc = vec![0.0; self.grid.len()];
        for axis in 0..self.grid.real_dim() {
            let d = self.first_derivative(phi.values(), axis);
            acc.par_iter_mut().zip(&d).for_each(|(a, v)| *a += 0.25 * v * v);
        }
        ScalarField::new(self.grid, acc)
    }

    pub fn first_derivative(&self, values: &[f64], axis: usize) -> Vec<f64> {
        match self.backend {
            Backend::FiniteDifference => {
                let inv = 0.5 / self.grid.spacing();
                (0..self.grid.len())
                    .into_par_iter()
                    .map(|i| {
                        let p = self.grid.shifted(i, axis, 1);
                        let m = self.grid.shifted(i, axis, -1);
                        (values[p] - values[m]) * inv
                    })
                    .collect()
            }
            Backend::Spectral => self
                .fft
                .apply_symbol(values, |_, m| Complex64::new(0.0, self.first[m[axis]])),
        }
    }

    fn spectral_quarter_laplacian(&self, values: &[f64]) -> Vec<f64> {
        let q = &self.half_quarter;
        self.fft.apply_symbol(values, |i, _| Complex64::new(q[i], 0.0))
    }

    fn spectral_hessian_n2(&self, values: &[f64]) -> Vec<HermMat> {
        let spec = self.fft.forward_half(values);
        let (first, second) = (&self.first, &self.second);
        let fft = &self.fft;
        // every symbol below is real and even in k, so each output is a real field
        let apply = |sym: &(dyn Fn([usize; 4]) -> f64 + Sync)| {
            let s: Vec<Complex64> = spec
                .par_iter()
                .enumerate()
                .map(|(i, v)| v * sym(fft.half_multi_index(i)))
                .collect();
            fft.inverse_half(s)
        };
        let h11 = apply(&|m| 0.25 * (second[m[0]] + second[m[1]]));
        let h22 = apply(&|m| 0.25 * (second[m[2]] + second[m[3]]));
        // D_a D_b has symbol (i k_a)(i k_b) = −k_a k_b.
        let re = apply(&|m| -0.25 * (first[m[0]] * first[m[2]] + first[m[1]] * first[m[3]]));
        let im = apply(&|m| -0.25 * (first[m[0]] * first[m[3]] - first[m[1]] * first[m[2]]));
        (0..self.grid.len())
            .map(|i| HermMat::new2(h11[i], h22[i], Complex64::new(re[i], im[i])))
            .collect()
    }

    fn fd_quarter_laplacian(&self, values: &[f64]) -> Vec<f64> {
        let n = self.grid.resolution();
        let inv = 0.25 / (self.grid.spacing() * self.grid.spacing());
        let mut out = vec![0.0; values.len()];
        out.par_chunks_mut(n).enumerate().for_each(|(row, out_row)| {
            let up = ((row + n - 1) % n) * n;
            let down = ((row + 1) % n) * n;
            let cur = row * n;
            for col in 0..n {
                let left = (col + n - 1) % n;
                let right = (col + 1) % n;
                let c = values[cur + col];
                out_row[col] = inv
                    * (values[up + col] + values[down + col] + values[cur + left] + values[cur + right]
                        - 4.0 * c);
            }
        });
        out
    }

    fn fd_hessian_n2(&self, values: &[f64]) -> Vec<HermMat> {
        let g = self.grid;
        let h2 = g.spacing() * g.spacing();
        let second = |i: usize, a: usize| {
            (values[g.shifted(i, a, 1)] - 2.0 * values[i] + values[g.shifted(i, a, -1)]) / h2
        };
        let mixed = |i: usize, a: usize, b: usize| {
            let pp = g.shifted(g.shifted(i, a, 1), b, 1);
            let pm = g.shifted(g.shifted(i, a, 1), b, -1);
            let mp = g.shifted(g.shifted(i, a, -1), b, 1);
            let mm = g.shifted(g.shifted(i, a, -1), b, -1);
            (values[pp] - values[pm] - values[mp] + values[mm]) / (4.0 * h2)
        };
        (0..g.len())
            .into_par_iter()
            .map(|i| {
                let h11 = 0.25 * (second(i, 0) + second(i, 1));
                let h22 = 0.25 * (second(i, 2) + second(i, 3));
                let re = 0.25 * (mixed(i, 0, 2) + mixed(i, 1, 3));
                let im = 0.25 * (mixed(i, 0, 3) - mixed(i, 1, 2));
                HermMat::new2(h11, h22, Complex64::new(re, im))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(g: TorusGrid, f: impl Fn(&[f64; 4]) -> f64 + Sync) -> ScalarField {
        ScalarField::from_fn(g, f).unwrap()
    }

    #[test]
    fn constant_has_zero_hessian() {
        for backend in [Backend::Spectral, Backend::FiniteDifference] {
            for n in [1, 2] {
                let g = TorusGrid::new(n, 8).unwrap();
                let d = Differentiator::new(g, backend);
                let h = d.complex_hessian(&ScalarField::constant(g, 3.5)).unwrap();
                assert!(h.mats().iter().all(|m| m.a11.abs() < 1e-12 && m.a12.norm() < 1e-12));
                let gs = d.gradient_sq(&ScalarField::constant(g, 3.5)).unwrap();
                assert!(gs.values().iter().all(|v| v.abs() < 1e-20));
            }
        }
    }

    #[test]
    fn single_mode_n1() {
        let g = TorusGrid::new(1, 32).unwrap();
        let d = Differentiator::new(g, Backend::Spectral);
        let phi = field(g, |p| (2.0 * PI * p[0]).cos());
        let h = d.complex_hessian(&phi).unwrap();
        for i in 0..g.len() {
            let x = g.point(i)[0];
            let expect = -PI * PI * (2.0 * PI * x).cos();
            assert!((h.get(i).a11 - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn separable_modes_n2() {
        let g = TorusGrid::new(2, 8).unwrap();
        let (a, b) = (0.3, -0.7);
        for backend in [Backend::Spectral, Backend::FiniteDifference] {
            let d = Differentiator::new(g, backend);
            let phi = field(g, |p| a * (2.0 * PI * p[0]).cos() + b * (2.0 * PI * p[3]).cos());
            let h = d.complex_hessian(&phi).unwrap();
            // finite differences carry the factor sinc²(πh) on each mode
            let fac = match backend {
                Backend::Spectral => 1.0,
                Backend::FiniteDifference => {
                    let s = (PI / 8.0).sin() / (PI / 8.0);
                    s * s
                }
            };
            for i in 0..g.len() {
                let p = g.point(i);
                let m = h.get(i);
                assert!((m.a11 + fac * a * PI * PI * (2.0 * PI * p[0]).cos()).abs() < 1e-10);
                assert!((m.a22 + fac * b * PI * PI * (2.0 * PI * p[3]).cos()).abs() < 1e-10);
                assert!(m.a12.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn mixed_mode_off_diagonal_n2() {
        // φ = cos(2π(x1 + x2)): φ_{x1x2} = −4π² cos, so H12 = −π² cos.
        let g = TorusGrid::new(2, 8).unwrap();
        let d = Differentiator::new(g, Backend::Spectral);
        let phi = field(g, |p| (2.0 * PI * (p[0] + p[2])).cos());
        let h = d.complex_hessian(&phi).unwrap();
        for i in 0..g.len() {
            let p = g.point(i);
            let c = (2.0 * PI * (p[0] + p[2])).cos();
            assert!((h.get(i).a12.re + PI * PI * c).abs() < 1e-10);
            assert!(h.get(i).a12.im.abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_of_modes() {
        let g = TorusGrid::new(1, 32).unwrap();
        let d = Differentiator::new(g, Backend::Spectral);
        let a = 0.2;
        let phi = field(g, |p| a * (2.0 * PI * p[0]).cos() + a * (2.0 * PI * p[1]).cos());
        let beta = d.gradient_sq(&phi).unwrap();
        for i in 0..g.len() {
            let p = g.point(i);
            let s1 = (2.0 * PI * p[0]).sin();
            let s2 = (2.0 * PI * p[1]).sin();
            let expect = a * a * PI * PI * (s1 * s1 + s2 * s2);
            assert!((beta.values()[i] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn fd_and_spectral_agree_to_second_order() {
        let errs: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let g = TorusGrid::new(1, n).unwrap();
                let phi = field(g, |p| ((2.0 * PI * p[0]).sin() + 0.5 * (2.0 * PI * p[1]).cos()).exp());
                let s = Differentiator::new(g, Backend::Spectral).quarter_laplacian(phi.values());
                let f = Differentiator::new(g, Backend::FiniteDifference).quarter_laplacian(phi.values());
                s.iter().zip(&f).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8 && order < 2.3, "order {order}");
        }
    }
}

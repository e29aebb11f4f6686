//! Closed-form algebra of 1×1 and 2×2 Hermitian matrices.
//!
//! A real (1,1)-form in the flat frame is stored as the Hermitian matrix of its
//! coefficients, the reference form ω being the identity.

use super::TorusGrid;
use crate::error::{Error, Result};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermMat {
    dim: usize,
    pub a11: f64,
    pub a22: f64,
    /// Upper off-diagonal entry; the lower one is its conjugate.
    pub a12: Complex64,
}

impl HermMat {
    pub fn zero(dim: usize) -> Self {
        assert!(dim == 1 || dim == 2, "unsupported dimension {dim}");
        Self {
            dim,
            a11: 0.0,
            a22: 0.0,
            a12: Complex64::new(0.0, 0.0),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn scalar(dim: usize, s: f64) -> Self {
        let mut m = Self::zero(dim);
        m.a11 = s;
        if dim == 2 {
            m.a22 = s;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zero(entries.len());
        m.a11 = entries[0];
        if entries.len() == 2 {
            m.a22 = entries[1];
        }
        m
    }

    pub fn new2(a11: f64, a22: f64, a12: Complex64) -> Self {
        Self {
            dim: 2,
            a11,
            a22,
            a12,
        }
    }

    /// Builds a matrix from nested rows `[[re, im], ...]`-free real/complex input:
    /// `rows[j][k] = (re, im)`. The lower triangle must be the conjugate of the upper.
    pub fn from_rows(rows: &[Vec<(f64, f64)>]) -> Result<Self> {
        match rows.len() {
            1 if rows[0].len() == 1 => {
                if rows[0][0].1 != 0.0 {
                    return Err(Error::InvalidArgument(
                        "diagonal entries must be real".into(),
                    ));
                }
                Ok(Self::diag(&[rows[0][0].0]))
            }
            2 if rows.iter().all(|r| r.len() == 2) => {
                let (a, b, c, d) = (rows[0][0], rows[0][1], rows[1][0], rows[1][1]);
                if a.1 != 0.0 || d.1 != 0.0 || b.0 != c.0 || b.1 != -c.1 {
                    return Err(Error::InvalidArgument("matrix is not Hermitian".into()));
                }
                Ok(Self::new2(a.0, d.0, Complex64::new(b.0, b.1)))
            }
            _ => Err(Error::InvalidArgument(
                "matrix must be 1x1 or 2x2".into(),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            dim: self.dim,
            a11: self.a11 + o.a11,
            a22: self.a22 + o.a22,
            a12: self.a12 + o.a12,
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            a11: self.a11 * s,
            a22: self.a22 * s,
            a12: self.a12 * s,
        }
    }

    pub fn trace(&self) -> f64 {
        if self.dim == 1 {
            self.a11
        } else {
            self.a11 + self.a22
        }
    }

    pub fn det(&self) -> f64 {
        if self.dim == 1 {
            self.a11
        } else {
            self.a11 * self.a22 - self.a12.norm_sqr()
        }
    }

    /// Eigenvalues in increasing order (second entry unused when `dim == 1`).
    pub fn eigenvalues(&self) -> [f64; 2] {
        if self.dim == 1 {
            return [self.a11, self.a11];
        }
        let half_tr = 0.5 * (self.a11 + self.a22);
        let half_gap = 0.5 * (self.a11 - self.a22);
        let r = half_gap.hypot(self.a12.norm());
        [half_tr - r, half_tr + r]
    }

    pub fn min_eig(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eig(&self) -> f64 {
        if self.dim == 1 {
            self.a11
        } else {
            self.eigenvalues()[1]
        }
    }

    /// Adjugate; `M · adj(M) = det(M) I`.
    pub fn adjugate(&self) -> Self {
        if self.dim == 1 {
            Self::identity(1)
        } else {
            Self::new2(self.a22, self.a11, -self.a12)
        }
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(self.adjugate().scale(1.0 / det))
    }

    /// `tr(self · other)` for Hermitian arguments.
    pub fn trace_product(&self, o: &Self) -> f64 {
        if self.dim == 1 {
            self.a11 * o.a11
        } else {
            self.a11 * o.a11 + self.a22 * o.a22 + 2.0 * (self.a12 * o.a12.conj()).re
        }
    }

    /// Mixed determinant: coefficient of `s^j t^{n-j}` in `det(sA + tB)` over `binom(n, j)`.
    pub fn mixed(a: &Self, b: &Self, j: usize) -> Result<f64> {
        let n = a.dim;
        if j > n {
            return Err(Error::InvalidArgument(format!(
                "mixed index {j} out of range for n = {n}"
            )));
        }
        Ok(match (n, j) {
            (1, 1) => a.a11,
            (1, 0) => b.a11,
            (2, 2) => a.det(),
            (2, 0) => b.det(),
            _ => 0.5 * (a.a11 * b.a22 + a.a22 * b.a11 - 2.0 * (a.a12 * b.a12.conj()).re),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a22.is_finite() && self.a12.re.is_finite() && self.a12.im.is_finite()
    }
}

/// Per-point Hermitian matrices on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    grid: TorusGrid,
    mats: Vec<HermMat>,
}

impl HermitianField {
    pub fn new(grid: TorusGrid, mats: Vec<HermMat>) -> Result<Self> {
        if mats.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} matrices for a grid of {} points",
                mats.len(),
                grid.len()
            )));
        }
        if let Some(i) = mats.iter().position(|m| m.dim() != grid.n()) {
            return Err(Error::InvalidArgument(format!(
                "matrix at {i} has dimension {} on an n = {} grid",
                mats[i].dim(),
                grid.n()
            )));
        }
        if let Some(i) = mats.iter().position(|m| !m.is_finite()) {
            return Err(Error::NonFinite(format!("matrix entry at point {i}")));
        }
        Ok(Self { grid, mats })
    }

    pub fn uniform(grid: TorusGrid, m: HermMat) -> Self {
        Self {
            grid,
            mats: vec![m; grid.len()],
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn mats(&self) -> &[HermMat] {
        &self.mats
    }

    pub fn get(&self, i: usize) -> &HermMat {
        &self.mats[i]
    }

    pub fn add(&self, other: &HermitianField) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            mats: self
                .mats
                .iter()
                .zip(&other.mats)
                .map(|(a, b)| a.add(b))
                .collect(),
        })
    }

    pub fn add_uniform(&self, m: &HermMat) -> Self {
        Self {
            grid: self.grid,
            mats: self.mats.iter().map(|a| a.add(m)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            mats: self.mats.iter().map(|a| a.scale(s)).collect(),
        }
    }

    /// Smallest eigenvalue over the grid and where it is attained.
    pub fn min_eig(&self) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, m) in self.mats.iter().enumerate() {
            let e = m.min_eig();
            if e < best.0 {
                best = (e, i);
            }
        }
        best
    }
}

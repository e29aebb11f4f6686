//! Periodic lattice over the flat torus `X = R^{2n} / Z^{2n}` and the fields living on it.
//!
//! Real axes are ordered `[x_1, y_1, ..., x_n, y_n]` with `z_j = x_j + i y_j`. Storage is
//! row-major, the last axis varying fastest.

mod diff;
mod fft;
mod herm;
mod measure;
mod snapshot;

pub use diff::{Backend, Differentiator};
pub use fft::Fft;
pub use herm::{HermMat, HermitianField};
pub use measure::{norms, parabolic_holder_seminorm, FieldNorms};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotMeta};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Maximum number of real axes (`n = 2`).
pub const MAX_AXES: usize = 4;

/// A point of the torus in real coordinates; only the first `2n` entries are meaningful.
pub type Point = [f64; MAX_AXES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
    resolution: usize,
}

impl TorusGrid {
    pub fn new(n: usize, resolution: usize) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::InvalidGrid(format!(
                "complex dimension must be 1 or 2, got {n}"
            )));
        }
        if resolution < 8 || !resolution.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "resolution must be a power of two >= 8, got {resolution}"
            )));
        }
        Ok(Self { n, resolution })
    }

    /// Complex dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.real_dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.resolution.pow((self.real_dim() - 1 - axis) as u32)
    }

    pub fn multi_index(&self, mut index: usize) -> [usize; MAX_AXES] {
        let mut out = [0; MAX_AXES];
        for axis in (0..self.real_dim()).rev() {
            out[axis] = index % self.resolution;
            index /= self.resolution;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi[..self.real_dim()]
            .iter()
            .fold(0, |acc, &m| acc * self.resolution + m % self.resolution)
    }

    pub fn point(&self, index: usize) -> Point {
        let h = self.spacing();
        let multi = self.multi_index(index);
        let mut p = [0.0; MAX_AXES];
        for axis in 0..self.real_dim() {
            p[axis] = multi[axis] as f64 * h;
        }
        p
    }

    /// Index of the grid point nearest to `p` (coordinates taken modulo 1).
    pub fn nearest_index(&self, p: &[f64]) -> usize {
        let mut multi = [0usize; MAX_AXES];
        let res = self.resolution as f64;
        for axis in 0..self.real_dim() {
            let k = (p[axis].rem_euclid(1.0) * res).round() as usize;
            multi[axis] = k % self.resolution;
        }
        self.flat_index(&multi)
    }

    /// Index of the neighbour of `index` shifted by `offset` cells along `axis`.
    pub fn shifted(&self, index: usize, axis: usize, offset: isize) -> usize {
        let stride = self.stride(axis);
        let res = self.resolution as isize;
        let coord = ((index / stride) % self.resolution) as isize;
        let moved = (coord + offset).rem_euclid(res);
        index - (coord as usize) * stride + (moved as usize) * stride
    }

    /// Distance on the torus between two points, per axis wrapped into `[-1/2, 1/2]`.
    pub fn torus_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        torus_distance(&a[..self.real_dim()], &b[..self.real_dim()])
    }

    /// True when `self` is obtained from `fine` by keeping every `k`-th point.
    pub fn is_restriction_of(&self, fine: &TorusGrid) -> bool {
        self.n == fine.n && fine.resolution.is_multiple_of(self.resolution)
    }

    /// `GridMismatch` unless both grids are identical.
    pub fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "n={} N={} vs n={} N={}",
                self.n, self.resolution, other.n, other.resolution
            )));
        }
        Ok(())
    }
}

pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).rem_euclid(1.0);
            let d = d.min(1.0 - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Real-valued function sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "value {} at point {i}",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&Point) -> f64 + Sync) -> Result<Self> {
        use rayon::prelude::*;
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.point(i)))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn osc(&self) -> f64 {
        self.sup() - self.inf()
    }

    /// Integral over the torus (volume 1), i.e. the compensated mean of the samples.
    pub fn integral(&self) -> f64 {
        mean(&self.values)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    pub fn argmin(&self) -> usize {
        argmax(&self.values.iter().map(|v| -v).collect::<Vec<_>>())
    }

    /// Restriction to a coarser grid whose points are a subset of this grid's points.
    pub fn restrict(&self, coarse: TorusGrid) -> Result<Self> {
        if !coarse.is_restriction_of(&self.grid) {
            return Err(Error::GridMismatch(
                "coarse grid is not a sub-lattice".to_string(),
            ));
        }
        let factor = self.grid.resolution() / coarse.resolution();
        let values = (0..coarse.len())
            .map(|i| {
                let mut m = coarse.multi_index(i);
                for v in m.iter_mut() {
                    *v *= factor;
                }
                self.values[self.grid.flat_index(&m)]
            })
            .collect();
        Ok(Self::from_vec_unchecked(coarse, values))
    }
}

/// Neumaier-compensated mean; deterministic and order-fixed.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    compensated_sum(values.iter().copied()) / values.len() as f64
}

pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

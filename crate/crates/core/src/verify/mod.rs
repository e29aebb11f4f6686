//! Property checks over computed trajectories. Each check returns [`MarginReport`]s: a signed
//! worst margin (`≥ 0` passes), where it occurred, and any fitted constants.
//!
//! Estimates whose constants are not computable are checked in fitted form: the report gives
//! the smallest constant that makes the inequality hold, and stability of that constant under
//! refinement is judged by comparing reports.

mod comparison;
mod convergence;
mod estimates;
mod stability;

pub use comparison::{check_comparison, check_residuals, inject_defect};
pub use convergence::{check_convergence_modes, ConvergenceInput, CAPACITY_SEED};
pub use estimates::{
    check_apriori_bounds, check_energy_monotonicity, check_gradient_laplacian,
    check_time_derivative, ENERGY_TOL,
};
pub use stability::{check_contraction, check_stability, check_uniqueness, uniqueness_preconditions};

use crate::flow::FlowTrajectory;
use crate::torus::{Backend, TorusGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    #[serde(with = "crate::serde_float")]
    pub t: f64,
    /// Flat grid index, when the worst margin sits at a point.
    pub index: Option<usize>,
    pub point: Option<Vec<f64>>,
}

impl Location {
    pub fn time(t: f64) -> Self {
        Self { t, index: None, point: None }
    }

    pub fn at(grid: &TorusGrid, t: f64, index: usize) -> Self {
        let p = grid.point(index);
        Self { t, index: Some(index), point: Some(p[..grid.real_dim()].to_vec()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedConstant {
    pub name: String,
    #[serde(with = "crate::serde_float")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub check: String,
    /// The inequality being checked, in words and symbols.
    pub anchor: String,
    #[serde(with = "crate::serde_float")]
    pub margin: f64,
    pub passed: bool,
    pub location: Location,
    pub constants: Vec<NamedConstant>,
    pub notes: Vec<String>,
}

impl MarginReport {
    pub fn new(check: &str, anchor: &str, margin: f64, location: Location) -> Self {
        Self {
            check: check.to_string(),
            anchor: anchor.to_string(),
            margin,
            passed: margin >= 0.0,
            location,
            constants: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn with_constant(mut self, name: &str, value: f64) -> Self {
        self.constants.push(NamedConstant { name: name.to_string(), value });
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Overrides the pass flag when passing is decided by something other than the sign of
    /// the margin.
    pub fn with_passed(mut self, passed: bool) -> Self {
        self.passed = passed;
        self
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|c| c.name == name).map(|c| c.value)
    }
}

/// Comparison tolerance: `1e−9·Osc` for the monotone `n = 1` finite-difference scheme,
/// `10h²·Osc` otherwise.
pub fn comparison_tolerance(grid: &TorusGrid, backend: Backend, osc: f64) -> f64 {
    if grid.n() == 1 && backend == Backend::FiniteDifference {
        1e-9 * osc
    } else {
        10.0 * grid.spacing() * grid.spacing() * osc
    }
}

pub(crate) fn check_compatible(a: &FlowTrajectory, b: &FlowTrajectory) -> crate::Result<()> {
    a.grid.check_same(&b.grid)?;
    if a.backend != b.backend {
        return Err(crate::Error::GridMismatch(format!(
            "backends differ: {:?} vs {:?}",
            a.backend, b.backend
        )));
    }
    Ok(())
}

/// `(index, value)` of the largest entry.
pub(crate) fn arg_max(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    values
        .into_iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub(crate) fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

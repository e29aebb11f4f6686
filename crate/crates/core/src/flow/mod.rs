//! Implicit time integration of `∂φ/∂t = log det(θ_t + H(φ)) − log Ω − F(t, z, φ)`.

mod cascade;
mod driving;
mod gmres;
mod nef;
mod schedule;
mod solver;
mod transform;

pub use cascade::{run_cascade, CascadeResult, MonotonicityReport, CASCADE_TOL};
pub use driving::{DrivingCertificate, DrivingTerm};
pub use nef::{run_nef, NefResult};
pub use schedule::StepSchedule;
pub use solver::{pde_residual, rhs, run, run_from, step, StepOutcome};
pub use transform::{monotone_reduction, monotone_threshold, uniqueness_rescale, Reduction, TimeRescaling};

use crate::error::{Error, Result};
use crate::geometry::{MetricPath, VolumeForm};
use crate::torus::{Backend, Differentiator, ScalarField, TorusGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub horizon: f64,
    pub t_min: f64,
    pub ratio: f64,
    /// Upper bound on any single step.
    pub max_step: Option<f64>,
    /// Extra times merged into the schedule.
    pub probe_times: Vec<f64>,
    /// Number of midpoint refinements applied to the schedule.
    pub refinements: u32,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Relative GMRES tolerance per Newton iteration.
    pub linear_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max: usize,
    pub backend: Backend,
    /// Times whose fields are kept; `None` keeps every step.
    pub record_times: Option<Vec<f64>>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            horizon: 0.1,
            t_min: 1e-4,
            ratio: 2f64.powf(0.125),
            max_step: None,
            probe_times: Vec::new(),
            refinements: 0,
            newton_tol: 1e-10,
            max_newton: 30,
            linear_tol: 1e-2,
            gmres_restart: 40,
            gmres_max: 400,
            backend: Backend::Spectral,
            record_times: None,
        }
    }
}

impl FlowConfig {
    pub fn schedule(&self) -> Result<StepSchedule> {
        let mut s = StepSchedule::geometric(self.t_min, self.ratio, self.horizon)?;
        if let Some(m) = self.max_step {
            if !(m > 0.0) {
                return Err(Error::InvalidArgument(format!("max_step must be positive, got {m}")));
            }
            s = s.capped(m);
        }
        let mut extra = self.probe_times.clone();
        if let Some(r) = &self.record_times {
            extra.extend(r);
        }
        s = s.with_times(&extra);
        for _ in 0..self.refinements {
            s = s.refined();
        }
        Ok(s)
    }

    fn records(&self, t: f64) -> bool {
        match &self.record_times {
            None => true,
            Some(ts) => ts.iter().any(|s| (s - t).abs() <= 1e-12 * t.abs().max(1e-300)),
        }
    }
}

/// Everything that defines the equation on a fixed grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub diff: Differentiator,
    pub path: MetricPath,
    pub driving: DrivingTerm,
    pub omega: VolumeForm,
}

impl Problem {
    pub fn new(
        grid: TorusGrid,
        backend: Backend,
        path: MetricPath,
        driving: DrivingTerm,
        omega: VolumeForm,
    ) -> Result<Self> {
        grid.check_same(omega.grid())?;
        driving.check_grid(&grid)?;
        if path.n() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "metric path has dimension {}, grid {}",
                path.n(),
                grid.n()
            )));
        }
        Ok(Self {
            diff: Differentiator::new(grid, backend),
            path,
            driving,
            omega,
        })
    }

    /// `θ = ω`, `Ω = ωⁿ`.
    pub fn flat(grid: TorusGrid, backend: Backend, driving: DrivingTerm, horizon: f64) -> Result<Self> {
        Self::new(
            grid,
            backend,
            MetricPath::flat(grid.n(), horizon)?,
            driving,
            VolumeForm::uniform(grid, 1.0)?,
        )
    }

    pub fn grid(&self) -> &TorusGrid {
        self.diff.grid()
    }

    pub fn with_path(&self, path: MetricPath) -> Self {
        Self { path, ..self.clone() }
    }

    pub fn with_driving(&self, driving: DrivingTerm) -> Self {
        Self { driving, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    #[serde(with = "crate::serde_float")]
    pub t: f64,
    #[serde(with = "crate::serde_float")]
    pub dt: f64,
    pub newton_iters: usize,
    pub linear_iters: usize,
    /// Sup-norm of the backward-Euler residual at acceptance.
    #[serde(with = "crate::serde_float")]
    pub residual: f64,
    /// Tolerance actually applied: the requested one or the round-off floor, whichever is larger.
    #[serde(with = "crate::serde_float")]
    pub residual_tol: f64,
    #[serde(with = "crate::serde_float")]
    pub positivity_margin: f64,
    #[serde(with = "crate::serde_float")]
    pub sup: f64,
    #[serde(with = "crate::serde_float")]
    pub inf: f64,
    #[serde(with = "crate::serde_float")]
    pub osc: f64,
    #[serde(with = "crate::serde_float")]
    pub min_phidot: f64,
    #[serde(with = "crate::serde_float")]
    pub max_phidot: f64,
    /// `sup_z tr_ω(θ_t + dd^c φ_t)`.
    #[serde(with = "crate::serde_float")]
    pub sup_trace: f64,
    /// `sup_z |∇φ_t|²_ω`.
    #[serde(with = "crate::serde_float")]
    pub sup_grad_sq: f64,
    #[serde(with = "crate::serde_float")]
    pub energy: f64,
    #[serde(with = "crate::serde_float")]
    pub l1_to_initial: f64,
    #[serde(with = "crate::serde_float")]
    pub sup_to_initial: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub phi: ScalarField,
    /// `φ̇` from the right-hand side; absent at `t = 0` for data outside the open cone.
    pub phidot: Option<ScalarField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub grid: TorusGrid,
    pub backend: Backend,
    pub schedule: StepSchedule,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl FlowTrajectory {
    pub fn initial(&self) -> &ScalarField {
        &self.snapshots[0].phi
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has its initial snapshot")
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-12 * t.abs().max(1e-300))
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn diagnostics_at(&self, t: f64) -> Option<&StepDiagnostics> {
        self.diagnostics
            .iter()
            .find(|d| (d.t - t).abs() <= 1e-12 * t.abs().max(1e-300))
    }
}

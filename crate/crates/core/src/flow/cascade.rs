//! The approximation cascade: flows from a decreasing ladder of smooth approximants and
//! their monotone limit.

use super::{run, FlowConfig, FlowTrajectory, Problem};
use crate::error::{Error, Result};
use crate::psh::{mollify_decreasing, MollifiedLadder, RegularizationSchedule, RoughPotential};
use crate::torus::ScalarField;
use serde::{Deserialize, Serialize};

/// Default cascade tolerance relative to `Osc(φ_0)`.
pub const CASCADE_TOL: f64 = 1e-7;

/// Worst violation of `φ_{t,j+1} ≤ φ_{t,j}` over the common snapshot times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `max (φ_{t,j+1} − φ_{t,j})`; negative when strictly ordered.
    pub max_violation: f64,
    pub time: f64,
    /// Index of the level expected to be above.
    pub upper: usize,
    pub index: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks that `trajs[j + 1] ≤ trajs[j]` pointwise at every shared snapshot time.
pub(crate) fn check_ordering(trajs: &[&FlowTrajectory], tolerance: f64) -> MonotonicityReport {
    let mut rep = MonotonicityReport {
        max_violation: f64::NEG_INFINITY,
        time: 0.0,
        upper: 0,
        index: 0,
        tolerance,
        passed: true,
    };
    for (j, pair) in trajs.windows(2).enumerate() {
        for upper in &pair[0].snapshots {
            let Some(lower) = pair[1].snapshot_at(upper.t) else {
                continue;
            };
            for (i, (a, b)) in lower.phi.values().iter().zip(upper.phi.values()).enumerate() {
                let v = a - b;
                if v > rep.max_violation {
                    rep.max_violation = v;
                    rep.time = upper.t;
                    rep.upper = j;
                    rep.index = i;
                }
            }
        }
    }
    rep.passed = rep.max_violation <= tolerance;
    rep
}

impl MonotonicityReport {
    pub(crate) fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::MonotonicityViolated {
                time: self.time,
                upper: self.upper,
                lower: self.upper + 1,
                index: self.index,
                magnitude: self.max_violation,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct CascadeResult {
    pub ladder: MollifiedLadder,
    pub levels: Vec<FlowTrajectory>,
    /// Snapshot times shared by all levels.
    pub times: Vec<f64>,
    /// Finest-level field at each time.
    pub limits: Vec<ScalarField>,
    /// `sup |φ_{t,J} − φ_{t,J−1}|` at each time: the two-level estimate of the distance to the
    /// limit.
    pub limit_gaps: Vec<f64>,
    pub monotonicity: MonotonicityReport,
    /// Sampled initial potential the cascade approximates.
    pub initial: ScalarField,
}

impl CascadeResult {
    pub fn limit_at(&self, t: f64) -> Option<(&ScalarField, f64)> {
        let k = self
            .times
            .iter()
            .position(|s| (s - t).abs() <= 1e-12 * t.abs().max(1e-300))?;
        Some((&self.limits[k], self.limit_gaps[k]))
    }
}

/// Runs every level of the mollification ladder and checks monotonicity in `j` within
/// `rel_tol · Osc(φ_0)`.
pub fn run_cascade(
    problem: &Problem,
    phi0: &RoughPotential,
    schedule: &RegularizationSchedule,
    cfg: &FlowConfig,
    rel_tol: f64,
) -> Result<CascadeResult> {
    let grid = *problem.grid();
    let ladder = mollify_decreasing(phi0, schedule, grid)?;
    let initial = phi0.sample(grid)?;
    let levels = ladder
        .levels
        .iter()
        .map(|start| run(problem, start, cfg))
        .collect::<Result<Vec<_>>>()?;

    let tolerance = rel_tol * initial.osc().max(f64::MIN_POSITIVE);
    let refs: Vec<&FlowTrajectory> = levels.iter().collect();
    let monotonicity = check_ordering(&refs, tolerance).into_result()?;

    let finest = levels.last().expect("non-empty ladder");
    let mut times = Vec::new();
    let mut limits = Vec::new();
    let mut gaps = Vec::new();
    for snap in &finest.snapshots {
        if !levels.iter().all(|l| l.snapshot_at(snap.t).is_some()) {
            continue;
        }
        let gap = if levels.len() >= 2 {
            let prev = levels[levels.len() - 2].snapshot_at(snap.t).expect("checked");
            prev.phi
                .values()
                .iter()
                .zip(snap.phi.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        times.push(snap.t);
        limits.push(snap.phi.clone());
        gaps.push(gap);
    }
    Ok(CascadeResult {
        ladder,
        levels,
        times,
        limits,
        limit_gaps: gaps,
        monotonicity,
        initial,
    })
}

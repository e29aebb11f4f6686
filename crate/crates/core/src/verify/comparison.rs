use super::{check_compatible, comparison_tolerance, Location, MarginReport};
use crate::error::{Error, Result};
use crate::flow::{rhs, FlowTrajectory, Problem, Snapshot};

const COMPARISON: &str = "comparison: sup(φ_t − ψ_t) ≤ e^{λT}·max{sup(φ_0 − ψ_0), 0}";

/// Sub/supersolution comparison over the shared snapshot times.
pub fn check_comparison(phi: &FlowTrajectory, psi: &FlowTrajectory, lambda: f64) -> Result<MarginReport> {
    check_compatible(phi, psi)?;
    let (a0, b0) = (phi.initial(), psi.initial());
    let initial_gap = a0.zip_map(b0, |a, b| a - b)?.sup();
    let osc = a0.osc().max(b0.osc());
    let tol = comparison_tolerance(&phi.grid, phi.backend, osc);
    let horizon = phi.last().t;
    let bound = (lambda * horizon).exp() * initial_gap.max(0.0);

    let mut worst = (f64::NEG_INFINITY, 0.0, 0);
    let mut shared = 0;
    for s in &phi.snapshots {
        let Some(o) = psi.snapshot_at(s.t) else { continue };
        shared += 1;
        for (i, (a, b)) in s.phi.values().iter().zip(o.phi.values()).enumerate() {
            if a - b > worst.0 {
                worst = (a - b, s.t, i);
            }
        }
    }
    if shared == 0 {
        return Err(Error::MissingTimes(phi.times().iter().map(|t| (0.0, *t)).collect()));
    }
    Ok(MarginReport::new("comparison", COMPARISON, bound + tol - worst.0, Location::at(&phi.grid, worst.1, worst.2))
        .with_constant("lambda", lambda)
        .with_constant("bound", bound)
        .with_constant("sup_difference", worst.0)
        .with_constant("tolerance", tol))
}

/// `φ_t − η·t`: for `∂F/∂s ≥ 0` a strict subsolution of the scheme that produced `traj`.
///
/// The sign is re-verified from the backward-Euler residual of the shifted trajectory before it
/// is returned; a non-negative residual anywhere is an error.
pub fn inject_defect(problem: &Problem, traj: &FlowTrajectory, eta: f64) -> Result<(FlowTrajectory, f64)> {
    let mut out = traj.clone();
    for s in &mut out.snapshots {
        let shift = eta * s.t;
        s.phi = s.phi.add_scalar(-shift);
        s.phidot = s.phidot.as_ref().map(|d| d.add_scalar(-eta));
    }
    let mut worst = f64::NEG_INFINITY;
    for w in out.snapshots.windows(2) {
        let r = step_residual(problem, &w[0], &w[1])?;
        worst = worst.max(r.0);
    }
    if worst >= 0.0 {
        return Err(Error::PreconditionFailed(format!(
            "shifted trajectory is not a strict subsolution: residual reaches {worst}"
        )));
    }
    Ok((out, worst))
}

/// `(max, max |·|)` of `(φ_k − φ_{k−1})/Δt − rhs(t_k, φ_k)`.
fn step_residual(problem: &Problem, prev: &Snapshot, cur: &Snapshot) -> Result<(f64, f64, usize)> {
    let dt = cur.t - prev.t;
    let g = rhs(problem, cur.t, &cur.phi)?;
    let mut out = (f64::NEG_INFINITY, 0.0f64, 0);
    for (i, ((a, b), r)) in cur.phi.values().iter().zip(prev.phi.values()).zip(g.values()).enumerate() {
        let res = (a - b) / dt - r;
        out.0 = out.0.max(res);
        if res.abs() > out.1 {
            out.1 = res.abs();
            out.2 = i;
        }
    }
    Ok(out)
}

/// Residual certificate: every step recomputed from the stored fields alone stays within twice
/// the tolerance Newton accepted it at.
pub fn check_residuals(problem: &Problem, traj: &FlowTrajectory) -> Result<MarginReport> {
    let times = traj.schedule.times();
    let mut worst = (f64::INFINITY, 0.0, 0, 0.0);
    let mut checked = 0;
    for w in traj.snapshots.windows(2) {
        let k = traj.schedule.index_of(w[1].t);
        let consecutive = k.is_some_and(|k| k > 0 && (times[k - 1] - w[0].t).abs() <= 1e-12 * w[0].t.max(1e-300));
        if !consecutive {
            continue;
        }
        let tol = traj
            .diagnostics_at(w[1].t)
            .map_or(f64::NAN, |d| d.residual_tol);
        let (_, sup, i) = step_residual(problem, &w[0], &w[1])?;
        checked += 1;
        let m = 2.0 * tol - sup;
        if m < worst.0 || m.is_nan() {
            worst = (m, w[1].t, i, sup);
        }
    }
    if checked == 0 {
        return Err(Error::MissingTimes(
            times.windows(2).map(|w| (w[0], w[1])).collect(),
        ));
    }
    Ok(MarginReport::new(
        "residual",
        "backward-Euler residual recomputed from snapshots ≤ 2 × accepted Newton tolerance",
        worst.0,
        Location::at(&traj.grid, worst.1, worst.2),
    )
    .with_constant("worst_residual", worst.3)
    .with_constant("steps_checked", checked as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run, DrivingTerm, FlowConfig};
    use crate::torus::{Backend, ScalarField, TorusGrid};

    fn setup() -> (Problem, FlowConfig, TorusGrid) {
        let g = TorusGrid::new(1, 16).unwrap();
        let p = Problem::flat(g, Backend::FiniteDifference, DrivingTerm::identity(), 0.05).unwrap();
        let cfg = FlowConfig {
            horizon: 0.05,
            t_min: 1e-3,
            backend: Backend::FiniteDifference,
            ..FlowConfig::default()
        };
        (p, cfg, g)
    }

    #[test]
    fn equal_trajectories_pass_with_tolerance_margin() {
        let (p, cfg, g) = setup();
        let phi0 = ScalarField::from_fn(g, |x| 0.02 * (2.0 * std::f64::consts::PI * x[0]).cos()).unwrap();
        let t = run(&p, &phi0, &cfg).unwrap();
        let r = check_comparison(&t, &t, 0.0).unwrap();
        assert!(r.passed);
        assert!((r.margin - r.constant("tolerance").unwrap()).abs() < 1e-18);
        assert!(check_residuals(&p, &t).unwrap().passed);
    }

    #[test]
    fn shifted_constants_and_injected_defect() {
        let (p, cfg, g) = setup();
        let lo = run(&p, &ScalarField::constant(g, 0.4), &cfg).unwrap();
        let hi = run(&p, &ScalarField::constant(g, 0.5), &cfg).unwrap();
        let r = check_comparison(&lo, &hi, 0.0).unwrap();
        assert!(r.passed);
        // the difference of constant solutions is −0.1·(1 + Δt)^{−k} < 0
        assert!(r.constant("sup_difference").unwrap() < -0.09);
        let reversed = check_comparison(&hi, &lo, 0.0).unwrap();
        assert!(reversed.passed, "bound e^{{λT}}·0.1 covers the reversed pair");
        let (sub, worst) = inject_defect(&p, &hi, 0.01).unwrap();
        assert!(worst < 0.0);
        assert!(check_comparison(&sub, &hi, 0.0).unwrap().passed);
    }
}

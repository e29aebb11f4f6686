use super::{arg_max, comparison_tolerance, fit_line, Location, MarginReport};
use crate::error::{Error, Result};
use crate::flow::{DrivingTerm, FlowTrajectory};
use crate::geometry::{certify_metric_path, MetricPath, VolumeForm};

/// Slack allowed when asking `E(φ_t) + C_E·t` to be non-decreasing.
pub const ENERGY_TOL: f64 = 1e-8;

const PATH_SAMPLES: usize = 65;

/// Upper bound `φ_t ≤ Ct + max{sup φ_0, 0}` with the explicit `C = −inf F(·,·,0) + n log δ`,
/// and the fitted lower bound `φ_t ≥ φ_0 − c(t)` with `c(t) ≤ K(t log(1/t) + t)`.
///
/// The upper bound is taken against the trajectory's own first snapshot. The lower bound is
/// taken against `initial`, the data the flow approximates; for cascades this is the sampled
/// rough potential rather than the first (mollified) snapshot.
pub fn check_apriori_bounds(
    traj: &FlowTrajectory,
    initial: &crate::torus::ScalarField,
    driving: &DrivingTerm,
    path: &MetricPath,
    omega: &VolumeForm,
) -> Result<Vec<MarginReport>> {
    let grid = traj.grid;
    grid.check_same(initial.grid())?;
    let cert = certify_metric_path(path, PATH_SAMPLES, Some(omega))?;
    let delta = cert.delta.ok_or_else(|| {
        Error::PreconditionFailed("θ_tⁿ vanishes somewhere: no volume constant δ".into())
    })?;
    let n = grid.n() as f64;
    let mut inf_f = f64::INFINITY;
    for &t in traj.schedule.times() {
        for z in 0..grid.len() {
            inf_f = inf_f.min(driving.value(t, z, 0.0));
        }
    }
    let c = -inf_f + n * delta.ln();
    let top = traj.initial().sup().max(0.0);
    let tol = comparison_tolerance(&grid, traj.backend, initial.osc());

    let mut upper = (f64::INFINITY, 0.0, 0);
    for s in &traj.snapshots {
        let bound = c * s.t + top + tol;
        for (i, v) in s.phi.values().iter().enumerate() {
            if bound - v < upper.0 {
                upper = (bound - v, s.t, i);
            }
        }
    }
    let upper_report = MarginReport::new(
        "apriori-upper",
        "upper bound: φ_t ≤ C·t + max{sup φ_0, 0}, C = −inf F(t,z,0) + n·log δ",
        upper.0,
        Location::at(&grid, upper.1, upper.2),
    )
    .with_constant("C", c)
    .with_constant("delta", delta)
    .with_constant("inf_F_at_zero", inf_f)
    .with_constant("tolerance", tol);

    // c(t): smallest non-decreasing majorant of sup(φ_0 − φ_t)₊
    let mut running = 0.0f64;
    let mut cs = Vec::new();
    for s in traj.snapshots.iter().filter(|s| s.t > 0.0) {
        let (i, raw) = arg_max(initial.values().iter().zip(s.phi.values()).map(|(a, b)| a - b));
        running = running.max(raw);
        cs.push((s.t, running, i));
    }
    if cs.is_empty() {
        return Err(Error::MissingTimes(vec![(0.0, traj.schedule.end())]));
    }
    let profile = |t: f64| t * (1.0 / t).ln() + t;
    // smallest K with c(t) ≤ K·profile(t) + tol at every recorded time
    let (w, k) = cs
        .iter()
        .map(|(t, c, _)| (c - tol).max(0.0) / profile(*t))
        .enumerate()
        .fold((0, 0.0), |b, (j, r)| if r > b.1 { (j, r) } else { b });
    let k_max = 2.0 * n;
    let lower_report = MarginReport::new(
        "apriori-lower",
        "lower bound: φ_t ≥ φ_0 − c(t), c(t) ≤ K·(t·log(1/t) + t) with K ≤ 2n",
        k_max - k,
        Location::at(&grid, cs[w].0, cs[w].2),
    )
    .with_constant("K", k)
    .with_constant("K_max", k_max)
    .with_constant("c_first", cs[0].1)
    .with_constant("c_last", cs[cs.len() - 1].1)
    .with_constant("tolerance", tol);
    Ok(vec![upper_report, lower_report])
}

/// Upper bound `φ̇_t ≤ (C_up − φ_ε)/t` on `[ε, T]` with the smallest `C_up`, and a fit of
/// `min_z φ̇_t` against `log t` over `window` (default: every positive step).
///
/// The lower report passes when `C` is finite and either the fitted slope is at least `0.9n`
/// or it is below `0.1n` in absolute value (`φ̇` bounded below).
pub fn check_time_derivative(
    traj: &FlowTrajectory,
    eps: f64,
    window: Option<(f64, f64)>,
) -> Result<Vec<MarginReport>> {
    let grid = traj.grid;
    let n = grid.n() as f64;
    let first = traj.schedule.times().get(1).copied().unwrap_or(f64::INFINITY);
    if eps < first * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "ε = {eps} precedes the first step {first}"
        )));
    }
    let phi_eps = &traj
        .snapshot_at(eps)
        .ok_or_else(|| Error::MissingTimes(vec![(0.0, eps)]))?
        .phi;
    let mut c_up = (f64::NEG_INFINITY, 0.0, 0);
    let mut used = 0;
    for s in traj.snapshots.iter().filter(|s| s.t >= eps * (1.0 - 1e-12)) {
        let Some(d) = &s.phidot else { continue };
        used += 1;
        for (i, (dv, pe)) in d.values().iter().zip(phi_eps.values()).enumerate() {
            let need = s.t * dv + pe;
            if need > c_up.0 {
                c_up = (need, s.t, i);
            }
        }
    }
    if used == 0 {
        return Err(Error::MissingTimes(vec![(eps, traj.schedule.end())]));
    }
    let upper = MarginReport::new(
        "phidot-upper",
        "time derivative from above: φ̇_t ≤ (C_up − φ_ε)/t on [ε, T]",
        if c_up.0.is_finite() { 0.0 } else { f64::NEG_INFINITY },
        Location::at(&grid, c_up.1, c_up.2),
    )
    .with_constant("C_up", c_up.0)
    .with_constant("eps", eps)
    .with_note("C_up is the smallest constant for which the bound holds at every recorded point");

    let (lo, hi) = window.unwrap_or((first, traj.schedule.end()));
    let pts: Vec<(f64, f64)> = traj
        .diagnostics
        .iter()
        .filter(|d| d.t >= lo * (1.0 - 1e-12) && d.t <= hi * (1.0 + 1e-12) && d.t > 0.0)
        .filter(|d| d.min_phidot.is_finite())
        .map(|d| (d.t, d.min_phidot))
        .collect();
    if pts.len() < 2 {
        return Err(Error::MissingTimes(vec![(lo, hi)]));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (slope, intercept) = fit_line(&xs, &ys);
    let (w, c_low) = arg_max(pts.iter().map(|(t, m)| n * t.ln() - m));
    // sharp logarithmic rate, or no logarithmic singularity at all
    let margin = (slope - 0.9 * n).max(0.1 * n - slope.abs());
    let lower = MarginReport::new(
        "phidot-lower",
        "time derivative from below: min φ̇_t ≥ n·log t − C",
        if c_low.is_finite() { margin } else { f64::NEG_INFINITY },
        Location::time(pts[w].0),
    )
    .with_constant("slope", slope)
    .with_constant("intercept", intercept)
    .with_constant("C", c_low)
    .with_constant("window_start", lo)
    .with_constant("window_end", hi)
    .with_note("C combines A·Osc φ_0 and the additive constant; one trajectory cannot separate them");
    Ok(vec![upper, lower])
}

/// Gradient bound `sup|∇φ_t|² ≤ e^{C_g/t}` and the Laplacian bound
/// `t log sup tr_ω(ω_t) ≤ 2A·Osc(φ_{t/2}) + C`, both with fitted constants.
pub fn check_gradient_laplacian(traj: &FlowTrajectory) -> Result<Vec<MarginReport>> {
    let diags: Vec<_> = traj.diagnostics.iter().filter(|d| d.t > 0.0).collect();
    if diags.is_empty() {
        return Err(Error::MissingTimes(vec![(0.0, traj.schedule.end())]));
    }
    let (gi, g) = arg_max(diags.iter().map(|d| d.t * d.sup_grad_sq.ln()));
    let c_g = g.max(0.0);
    let gradient = MarginReport::new(
        "gradient",
        "gradient bound: sup|∇φ_t|² ≤ exp(C_g/t)",
        if c_g.is_finite() { 0.0 } else { f64::NEG_INFINITY },
        Location::time(diags[gi].t),
    )
    .with_constant("C_g", c_g);

    let first = traj.schedule.times().get(1).copied().unwrap_or(diags[0].t);
    let mut missing = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ts = Vec::new();
    for d in diags.iter().filter(|d| d.t >= 2.0 * first * (1.0 - 1e-12)) {
        match traj.diagnostics_at(d.t / 2.0) {
            Some(h) => {
                xs.push(2.0 * h.osc);
                ys.push(d.t * d.sup_trace.ln());
                ts.push(d.t);
            }
            None => missing.push((d.t / 2.0, d.t)),
        }
    }
    if xs.is_empty() {
        return Err(Error::MissingTimes(missing));
    }
    let a = fit_line(&xs, &ys).0.max(0.0);
    let (ci, c) = arg_max(xs.iter().zip(&ys).map(|(x, y)| y - a * x));
    let laplacian = MarginReport::new(
        "laplacian",
        "Laplacian bound: t·log sup tr_ω(θ_t + dd^c φ_t) ≤ 2A·Osc(φ_{t/2}) + C",
        if c.is_finite() { 0.0 } else { f64::NEG_INFINITY },
        Location::time(ts[ci]),
    )
    .with_constant("A", a)
    .with_constant("C", c)
    .with_constant("pairs", xs.len() as f64);
    let laplacian = if missing.is_empty() {
        laplacian
    } else {
        let list: Vec<String> = missing.iter().map(|(s, t)| format!("({s:.4e}, {t:.4e})")).collect();
        laplacian.with_note(format!("no step at t/2 for (t/2, t) = {}", list.join(", ")))
    };
    Ok(vec![gradient, laplacian])
}

/// Smallest `C_E ≥ 0` making `E(φ_t) + C_E·t` non-decreasing within [`ENERGY_TOL`].
///
/// Uses the energies recorded per step (evaluated with `θ_t`); steps whose energy is undefined
/// are skipped.
pub fn check_energy_monotonicity(traj: &FlowTrajectory) -> Result<MarginReport> {
    let pts: Vec<(f64, f64)> = traj
        .diagnostics
        .iter()
        .filter(|d| d.energy.is_finite())
        .map(|d| (d.t, d.energy))
        .collect();
    let positive = pts.iter().filter(|p| p.0 > 0.0).count();
    if positive < 16 {
        return Err(Error::PreconditionFailed(format!(
            "energy monotonicity needs at least 16 positive times with finite energy, got {positive}"
        )));
    }
    let c_e = pts
        .windows(2)
        .map(|w| (w[0].1 - w[1].1 - ENERGY_TOL) / (w[1].0 - w[0].0))
        .fold(0.0, f64::max);
    let (wi, worst) = pts
        .windows(2)
        .map(|w| (w[1].1 + c_e * w[1].0) - (w[0].1 + c_e * w[0].0) + ENERGY_TOL)
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, m)| if m < b.1 { (i, m) } else { b });
    Ok(MarginReport::new(
        "energy-monotonicity",
        "energy monotonicity: t ↦ E(φ_t) + C_E·t is non-decreasing",
        worst,
        Location::time(pts[wi + 1].0),
    )
    .with_passed(c_e.is_finite())
    .with_constant("C_E", c_e)
    .with_constant("samples", pts.len() as f64))
}

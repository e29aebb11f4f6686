//! Backward Euler with damped inexact Newton and a spectrally preconditioned Krylov solve.

use super::gmres::gmres;
use super::{FlowConfig, FlowTrajectory, Problem, Snapshot, StepDiagnostics};
use crate::error::{Error, Result};
use crate::geometry::{not_kahler, Form};
use crate::torus::{mean, HermMat, ScalarField};
use num_complex::Complex64;
use rayon::prelude::*;

/// Smallest damping factor tried before giving up on positivity.
const MIN_DAMPING: f64 = 1.0 / (1u64 << 20) as f64;
/// Residual-driven backtracking stops here; smaller factors only restore positivity.
const MIN_DESCENT_DAMPING: f64 = 1.0 / 64.0;
/// Cap on the round-off floor, which grows without bound as the iterate nears the cone boundary.
const MAX_RESIDUAL_FLOOR: f64 = 1e-6;
/// Linear-tolerance reductions tried when no damped Newton step stays inside the cone.
const LINEAR_RETRIES: [f64; 4] = [1.0, 1e-3, 1e-6, 1e-9];
/// Incoming fields closer than this to the cone boundary are pulled inside before Newton.
const START_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub phi: ScalarField,
    pub phidot: ScalarField,
    pub hessian: Vec<HermMat>,
    pub newton_iters: usize,
    pub linear_iters: usize,
    pub residual: f64,
    pub residual_tol: f64,
    pub margin: f64,
}

struct Evaluation {
    hessian: Vec<HermMat>,
    det: Vec<f64>,
    rhs: Vec<f64>,
    residual: Vec<f64>,
    sup_residual: f64,
    margin: (f64, usize),
}

/// Pointwise `log det(θ + H) − log Ω − F` and the backward-Euler residual against `prev`.
fn evaluate(
    problem: &Problem,
    theta: &Form,
    t: f64,
    dt: f64,
    prev: &[f64],
    x: &[f64],
) -> Evaluation {
    let hessian = problem.diff.hessian_values(x);
    let log_omega = problem.omega.log_density();
    let f = &problem.driving;
    let per_point: Vec<(f64, f64, f64, f64)> = hessian
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            let m = theta.at(i).add(h);
            let lam = m.min_eig();
            let det = m.det();
            let rhs = if lam > 0.0 && det > 0.0 {
                det.ln() - log_omega[i] - f.value(t, i, x[i])
            } else {
                f64::NAN
            };
            let r = if dt > 0.0 { (x[i] - prev[i]) / dt - rhs } else { -rhs };
            (lam, det, rhs, r)
        })
        .collect();
    let mut margin = (f64::INFINITY, 0);
    let mut sup = 0.0f64;
    let mut det = Vec::with_capacity(x.len());
    let mut rhs = Vec::with_capacity(x.len());
    let mut residual = Vec::with_capacity(x.len());
    for (i, &(lam, d, g, r)) in per_point.iter().enumerate() {
        if lam < margin.0 || lam.is_nan() {
            margin = (lam, i);
        }
        sup = if r.is_nan() { f64::INFINITY } else { sup.max(r.abs()) };
        det.push(d);
        rhs.push(g);
        residual.push(r);
    }
    Evaluation { hessian, det, rhs, residual, sup_residual: sup, margin }
}

/// `log det(θ_t + H(φ)) − log Ω − F(t, z, φ)`.
pub fn rhs(problem: &Problem, t: f64, phi: &ScalarField) -> Result<ScalarField> {
    problem.grid().check_same(phi.grid())?;
    let theta = problem.path.theta(t);
    let ev = evaluate(problem, &theta, t, 0.0, phi.values(), phi.values());
    if !(ev.margin.0 > 0.0) {
        return Err(not_kahler(problem.grid(), ev.margin.1, ev.margin.0));
    }
    ScalarField::new(*problem.grid(), ev.rhs)
}

/// `φ̇ − (log det(θ_t + H(φ)) − log Ω − F(t, z, φ))` for a candidate `(φ, φ̇)`.
pub fn pde_residual(
    problem: &Problem,
    t: f64,
    phi: &ScalarField,
    phidot: &ScalarField,
) -> Result<ScalarField> {
    rhs(problem, t, phi)?.zip_map(phidot, |g, d| d - g)
}

/// Round-off floor of the residual: errors of size `ε·osc·‖H‖` in the Hessian reach
/// `log det` amplified by `n / λ_min`.
fn residual_floor(problem: &Problem, x: &[f64], dt: f64, ev: &Evaluation) -> f64 {
    let eps = f64::EPSILON;
    let sup_abs = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let n = problem.grid().n() as f64;
    let qnorm = problem.diff.quarter_laplacian_norm();
    let rhs_scale = ev.rhs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let floor = 2.0 * eps * ((hi - lo) * qnorm * n / ev.margin.0.max(1e-300) + sup_abs / dt + rhs_scale);
    floor.min(MAX_RESIDUAL_FLOOR)
}

fn pulled_inside(problem: &Problem, theta: &Form, phi: &[f64], dt: f64) -> Vec<f64> {
    let hess = problem.diff.hessian_values(phi);
    let (margin, _) = crate::geometry::positivity_margin(theta, &hess);
    if margin > START_MARGIN {
        return phi.to_vec();
    }
    // θ + (1 − μ)H = μθ + (1 − μ)(θ + H) ≥ μθ for ω-psh input. Degenerate data open a
    // margin of order dt in one step; starting below it keeps Newton on the concave side of log.
    let mu = dt.clamp(1e-8, 0.05);
    let m = mean(phi);
    phi.iter().map(|v| (1.0 - mu) * v + mu * m).collect()
}

/// One backward-Euler step from `t_from` to `t_to`.
pub fn step(
    problem: &Problem,
    phi: &ScalarField,
    t_from: f64,
    t_to: f64,
    cfg: &FlowConfig,
) -> Result<StepOutcome> {
    step_predicted(problem, phi, None, t_from, t_to, cfg)
}

/// [`step`] with an optional explicit-Euler predictor `φ + dt·φ̇` as Newton's first guess; the
/// predictor is used only when it lies in the cone with a smaller residual than `φ`.
pub(crate) fn step_predicted(
    problem: &Problem,
    phi: &ScalarField,
    phidot: Option<&ScalarField>,
    t_from: f64,
    t_to: f64,
    cfg: &FlowConfig,
) -> Result<StepOutcome> {
    let grid = *problem.grid();
    grid.check_same(phi.grid())?;
    let dt = t_to - t_from;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step from {t_from} to {t_to} is not forward")));
    }
    let theta = problem.path.theta(t_to);
    let prev = phi.values();
    let mut x = pulled_inside(problem, &theta, prev, dt);
    let mut ev = evaluate(problem, &theta, t_to, dt, prev, &x);
    if let Some(d) = phidot {
        let guess: Vec<f64> = prev.iter().zip(d.values()).map(|(p, v)| p + dt * v).collect();
        let gev = evaluate(problem, &theta, t_to, dt, prev, &guess);
        if gev.margin.0 > START_MARGIN && gev.sup_residual < ev.sup_residual {
            x = guess;
            ev = gev;
        }
    }
    if !(ev.margin.0 > 0.0) {
        return Err(Error::ConeExit { time: t_to });
    }
    let n = grid.n();
    let mut linear_iters = 0;
    let mut accuracy = 0;
    for iter in 0..=cfg.max_newton {
        let tol = cfg.newton_tol.max(residual_floor(problem, &x, dt, &ev));
        if ev.sup_residual <= tol {
            return Ok(StepOutcome {
                phidot: ScalarField::new(grid, ev.rhs)?,
                phi: ScalarField::new(grid, x)?,
                hessian: ev.hessian,
                newton_iters: iter,
                linear_iters,
                residual: ev.sup_residual,
                residual_tol: tol,
                margin: ev.margin.0,
            });
        }
        if iter == cfg.max_newton {
            break;
        }

        // det(M)·J v = det(M)(1/dt + F_s) v − tr(adj(M) H(v)),  right side −det(M)·R
        let coeff: Vec<f64> = (0..x.len())
            .into_par_iter()
            .map(|i| ev.det[i] * (1.0 / dt + problem.driving.ds(t_to, i, x[i])))
            .collect();
        let adj: Vec<HermMat> = ev
            .hessian
            .par_iter()
            .enumerate()
            .map(|(i, h)| theta.at(i).add(h).adjugate())
            .collect();
        let b: Vec<f64> = ev.residual.par_iter().zip(&ev.det).map(|(r, d)| -d * r).collect();
        let a_bar = mean(&coeff);
        let k_bar = mean(&adj.iter().map(HermMat::trace).collect::<Vec<_>>()) / n as f64;
        let a_bar = if a_bar.abs() > 1e-300 { a_bar } else { 1.0 };
        let diff = &problem.diff;
        let apply = |v: &[f64]| -> Vec<f64> {
            if n == 1 {
                let lap = diff.quarter_laplacian(v);
                v.par_iter()
                    .zip(&coeff)
                    .zip(&lap)
                    .zip(&adj)
                    .map(|(((vi, c), l), a)| c * vi - a.a11 * l)
                    .collect()
            } else {
                let hv = diff.hessian_values(v);
                v.par_iter()
                    .zip(&coeff)
                    .zip(&hv)
                    .zip(&adj)
                    .map(|(((vi, c), h), a)| c * vi - a.trace_product(h))
                    .collect()
            }
        };
        let inv_symbol: Vec<f64> = diff
            .quarter_laplacian_half_symbol()
            .iter()
            .map(|q| 1.0 / (a_bar - k_bar * q))
            .collect();
        let precond = |v: &[f64]| -> Vec<f64> {
            diff.fft().apply_symbol(v, |i, _| Complex64::new(inv_symbol[i], 0.0))
        };
        // An inexact direction can fail to descend or point out of the cone near degenerate
        // data; solve more accurately before settling, and stay accurate for the rest of the step.
        let best = loop {
            let scale = LINEAR_RETRIES[accuracy];
            let tol = (cfg.linear_tol * scale).max(1e-12);
            let max_iter = cfg.gmres_max * (1 + 3 * accuracy);
            let (delta, out) = gmres(apply, precond, &b, tol, cfg.gmres_restart, max_iter);
            linear_iters += out.iterations;
            let last = accuracy + 1 == LINEAR_RETRIES.len();
            let found = line_search(problem, &theta, t_to, dt, prev, &x, &delta, &ev, !last);
            if found.is_some() || last {
                break found;
            }
            accuracy += 1;
        };
        match best {
            Some((trial, tev)) => {
                x = trial;
                ev = tev;
            }
            None => return Err(Error::ConeExit { time: t_to }),
        }
    }
    Err(Error::NewtonDiverged {
        time: t_to,
        iterations: cfg.max_newton,
        residual: ev.sup_residual,
    })
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Backtracking on `x + λ·δ`: the first in-cone trial satisfying the Armijo condition on the
/// RMS residual. Without `strict`, the best in-cone trial is taken once `λ` reaches the
/// descent floor even if it does not improve.
#[allow(clippy::too_many_arguments)]
fn line_search(
    problem: &Problem,
    theta: &Form,
    t_to: f64,
    dt: f64,
    prev: &[f64],
    x: &[f64],
    delta: &[f64],
    ev: &Evaluation,
    strict: bool,
) -> Option<(Vec<f64>, Evaluation)> {
    let merit = rms(&ev.residual);
    let mut lambda = 1.0;
    let mut best: Option<(Vec<f64>, Evaluation, f64)> = None;
    loop {
        let trial: Vec<f64> = x.par_iter().zip(delta).map(|(a, d)| a + lambda * d).collect();
        let tev = evaluate(problem, theta, t_to, dt, prev, &trial);
        if tev.margin.0 > 0.0 {
            let m = rms(&tev.residual);
            if m <= (1.0 - 1e-4 * lambda) * merit {
                return Some((trial, tev));
            }
            if !strict && best.as_ref().is_none_or(|b| m < b.2) {
                best = Some((trial, tev, m));
            }
            if !strict && lambda <= MIN_DESCENT_DAMPING {
                break;
            }
        } else if best.is_some() && lambda <= MIN_DESCENT_DAMPING {
            break;
        }
        lambda *= 0.5;
        if lambda < MIN_DAMPING {
            break;
        }
    }
    best.map(|(x, e, _)| (x, e))
}

fn diagnostics(
    problem: &Problem,
    theta: &Form,
    t: f64,
    dt: f64,
    initial: &ScalarField,
    out: &StepOutcome,
) -> Result<StepDiagnostics> {
    let n = problem.grid().n();
    let x = out.phi.values();
    let per_point: Vec<(f64, f64)> = out
        .hessian
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            let th = theta.at(i);
            let m = th.add(h);
            let e: f64 = (0..=n).map(|j| HermMat::mixed(&m, &th, j).expect("j ≤ n")).sum();
            (m.trace(), x[i] * e)
        })
        .collect();
    let sup_trace = per_point.iter().fold(f64::NEG_INFINITY, |a, p| a.max(p.0));
    let energy = mean(&per_point.iter().map(|p| p.1).collect::<Vec<_>>()) / (n + 1) as f64;
    let gap: Vec<f64> = x.iter().zip(initial.values()).map(|(a, b)| (a - b).abs()).collect();
    Ok(StepDiagnostics {
        t,
        dt,
        newton_iters: out.newton_iters,
        linear_iters: out.linear_iters,
        residual: out.residual,
        residual_tol: out.residual_tol,
        positivity_margin: out.margin,
        sup: out.phi.sup(),
        inf: out.phi.inf(),
        osc: out.phi.osc(),
        min_phidot: out.phidot.inf(),
        max_phidot: out.phidot.sup(),
        sup_trace,
        sup_grad_sq: problem.diff.gradient_sq(&out.phi)?.sup(),
        energy,
        l1_to_initial: mean(&gap),
        sup_to_initial: gap.iter().fold(0.0, |a: f64, b| a.max(*b)),
    })
}

/// Diagnostics of the initial field; derivative quantities are `NaN` outside the open cone.
fn initial_diagnostics(problem: &Problem, t0: f64, phi0: &ScalarField) -> Result<(StepDiagnostics, Option<ScalarField>)> {
    let theta = problem.path.theta(t0);
    let ev = evaluate(problem, &theta, t0, 0.0, phi0.values(), phi0.values());
    let inside = ev.margin.0 > 0.0;
    let phidot = if inside { Some(ScalarField::new(*problem.grid(), ev.rhs.clone())?) } else { None };
    let out = StepOutcome {
        phi: phi0.clone(),
        phidot: phidot.clone().unwrap_or_else(|| ScalarField::zeros(*problem.grid())),
        hessian: ev.hessian,
        newton_iters: 0,
        linear_iters: 0,
        residual: 0.0,
        residual_tol: 0.0,
        margin: ev.margin.0,
    };
    let mut d = diagnostics(problem, &theta, t0, 0.0, phi0, &out)?;
    if !inside {
        d.min_phidot = f64::NAN;
        d.max_phidot = f64::NAN;
        d.energy = f64::NAN;
    }
    Ok((d, phidot))
}

/// Runs the flow from `t = 0` over the configured schedule.
pub fn run(problem: &Problem, phi0: &ScalarField, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    run_from(problem, phi0, 0.0, cfg)
}

/// Runs the flow from `(t0, φ_{t0})` over the configured schedule's later times.
pub fn run_from(
    problem: &Problem,
    phi0: &ScalarField,
    t0: f64,
    cfg: &FlowConfig,
) -> Result<FlowTrajectory> {
    problem.grid().check_same(phi0.grid())?;
    if cfg.backend != problem.diff.backend() {
        return Err(Error::InvalidArgument(
            "flow config and problem use different backends".into(),
        ));
    }
    let mut schedule = cfg.schedule()?;
    if t0 > 0.0 {
        schedule = schedule.starting_at(t0)?;
    }
    let (d0, phidot0) = initial_diagnostics(problem, t0, phi0)?;
    let mut snapshots = vec![Snapshot { t: t0, phi: phi0.clone(), phidot: phidot0 }];
    let mut diags = vec![d0];
    let mut current = phi0.clone();
    let mut rate: Option<ScalarField> = None;
    let times = schedule.times().to_vec();
    for (k, w) in times.windows(2).enumerate() {
        let out = step_predicted(problem, &current, rate.as_ref(), w[0], w[1], cfg)?;
        let theta = problem.path.theta(w[1]);
        diags.push(diagnostics(problem, &theta, w[1], w[1] - w[0], phi0, &out)?);
        let last = k + 2 == times.len();
        if last || cfg.records(w[1]) {
            snapshots.push(Snapshot { t: w[1], phi: out.phi.clone(), phidot: Some(out.phidot.clone()) });
        }
        current = out.phi;
        rate = Some(out.phidot);
    }
    Ok(FlowTrajectory {
        grid: *problem.grid(),
        backend: problem.diff.backend(),
        schedule,
        snapshots,
        diagnostics: diags,
    })
}

use super::{check_compatible, comparison_tolerance, Location, MarginReport};
use crate::error::{Error, Result};
use crate::flow::{run, run_cascade, uniqueness_rescale, FlowConfig, FlowTrajectory, Problem};
use crate::psh::{RegularizationSchedule, RoughPotential};
use crate::torus::ScalarField;

const CONTRACTION: &str = "contraction: ‖φ_t − ψ_t‖_∞ ≤ ‖φ_0 − ψ_0‖_∞";

fn sup_distance(a: &ScalarField, b: &ScalarField) -> (f64, usize) {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .enumerate()
        .fold((0.0, 0), |best, (i, d)| if d > best.0 { (d, i) } else { best })
}

/// Sup-norm contraction between two trajectories of the same problem, over shared times.
pub fn check_contraction(phi: &FlowTrajectory, psi: &FlowTrajectory) -> Result<MarginReport> {
    check_compatible(phi, psi)?;
    let (d0, _) = sup_distance(phi.initial(), psi.initial());
    let tol = comparison_tolerance(&phi.grid, phi.backend, phi.initial().osc().max(psi.initial().osc()));
    let mut worst = (f64::INFINITY, 0.0, 0);
    for s in &phi.snapshots {
        let Some(o) = psi.snapshot_at(s.t) else { continue };
        let (d, i) = sup_distance(&s.phi, &o.phi);
        if d0 + tol - d < worst.0 {
            worst = (d0 + tol - d, s.t, i);
        }
    }
    Ok(MarginReport::new("contraction", CONTRACTION, worst.0, Location::at(&phi.grid, worst.1, worst.2))
        .with_constant("initial_distance", d0)
        .with_constant("tolerance", tol))
}

fn require_monotone(problem: &Problem, fields: &[&ScalarField]) -> Result<()> {
    let horizon = problem.path.horizon();
    if problem.driving.declared_defect(horizon) != Some(0.0) {
        return Err(Error::PreconditionFailed(
            "stability needs ∂F/∂s ≥ 0; apply the monotone reduction first".into(),
        ));
    }
    let lo = fields.iter().map(|f| f.inf()).fold(f64::INFINITY, f64::min);
    let hi = fields.iter().map(|f| f.sup()).fold(f64::NEG_INFINITY, f64::max);
    let cert = problem.driving.sample_bounds((0.0, horizon), (lo - 1.0, hi + 1.0));
    if cert.min_ds < -1e-12 {
        return Err(Error::CertificateFailed {
            inequality: "∂F/∂s ≥ 0".into(),
            time: 0.0,
            margin: cert.min_ds,
        });
    }
    Ok(())
}

/// Quantitative stability for two smooth starts: the `k = 0` contraction, monotone decay of
/// the λ-derivative along the homotopy `(1 − λ)φ_0 + λψ_0`, and the empirical `k = 2` ratio
/// `‖Δφ_ε − Δψ_ε‖_∞ / ‖φ_0 − ψ_0‖_∞`.
pub fn check_stability(
    problem: &Problem,
    phi0: &ScalarField,
    psi0: &ScalarField,
    cfg: &FlowConfig,
    homotopy_samples: usize,
    eps: f64,
) -> Result<Vec<MarginReport>> {
    require_monotone(problem, &[phi0, psi0])?;
    if homotopy_samples < 2 {
        return Err(Error::InvalidArgument("at least two homotopy samples required".into()));
    }
    let lambdas: Vec<f64> = (0..homotopy_samples)
        .map(|j| j as f64 / (homotopy_samples - 1) as f64)
        .collect();
    let family = lambdas
        .iter()
        .map(|&l| {
            let start = phi0.zip_map(psi0, |a, b| (1.0 - l) * a + l * b)?;
            run(problem, &start, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let (phi, psi) = (&family[0], &family[family.len() - 1]);
    let contraction = check_contraction(phi, psi)?;

    let grid = phi.grid;
    let (d0, _) = sup_distance(phi0, psi0);
    let dl = lambdas[1] - lambdas[0];
    let tol = comparison_tolerance(&grid, phi.backend, d0) / dl;
    let mut worst = (f64::INFINITY, 0.0, 0.0);
    for (j, pair) in family.windows(2).enumerate() {
        let mut prev: Option<f64> = None;
        for s in &pair[0].snapshots {
            let Some(o) = pair[1].snapshot_at(s.t) else { continue };
            let u = sup_distance(&s.phi, &o.phi).0 / dl;
            if let Some(p) = prev {
                if p + tol - u < worst.0 {
                    worst = (p + tol - u, s.t, lambdas[j]);
                }
            }
            prev = Some(u);
        }
    }
    let homotopy = MarginReport::new(
        "homotopy",
        "homotopy derivative: t ↦ ‖∂φ^λ_t/∂λ‖_∞ is non-increasing",
        worst.0,
        Location::time(worst.1),
    )
    .with_constant("lambda", worst.2)
    .with_constant("samples", homotopy_samples as f64)
    .with_constant("tolerance", tol);

    let at = phi
        .snapshots
        .iter()
        .find(|s| s.t >= eps * (1.0 - 1e-12))
        .ok_or_else(|| Error::MissingTimes(vec![(0.0, eps)]))?;
    let other = psi.snapshot_at(at.t).ok_or_else(|| Error::MissingTimes(vec![(0.0, at.t)]))?;
    let lap_a = problem.diff.quarter_laplacian(at.phi.values());
    let lap_b = problem.diff.quarter_laplacian(other.phi.values());
    // Δ = 4·(¼Δ)
    let num = lap_a
        .iter()
        .zip(&lap_b)
        .map(|(a, b)| 4.0 * (a - b).abs())
        .fold(0.0, f64::max);
    let ratio = if d0 > 0.0 { num / d0 } else { 0.0 };
    let second = MarginReport::new(
        "stability-second-order",
        "second-order stability: ‖Δφ_ε − Δψ_ε‖_∞ ≤ C(2, ε)·‖φ_0 − ψ_0‖_∞",
        0.0,
        Location::time(at.t),
    )
    .with_constant("C2", ratio)
    .with_constant("eps", at.t)
    .with_note("empirical ratio; reported, not judged");
    Ok(vec![contraction, homotopy, second])
}

/// Conditions under which a uniqueness certificate can be issued: `F` smooth in `s` with
/// `∂F/∂s ≥ 0` and a declared bound `C′` on `∂F/∂t`, which is returned.
pub fn uniqueness_preconditions(problem: &Problem) -> Result<f64> {
    let f = &problem.driving;
    if !f.is_smooth() {
        return Err(Error::PreconditionFailed(
            "uniqueness certificate withheld: F is not smooth in s".into(),
        ));
    }
    if f.declared_defect(problem.path.horizon()) != Some(0.0) {
        return Err(Error::PreconditionFailed(
            "uniqueness certificate withheld: ∂F/∂s ≥ 0 is not declared".into(),
        ));
    }
    f.declared_time_bound().ok_or_else(|| {
        Error::PreconditionFailed("uniqueness certificate withheld: no bound on ∂F/∂t".into())
    })
}

/// Runs two cascades under different regularization schedules and checks that their limits
/// agree within the sum of their own limit gaps.
///
/// Refuses unless `F` is smooth with `∂F/∂s ≥ 0` and a declared bound on `∂F/∂t`, and the
/// time rescaling with rate `A` (default midway between `C′` and `1/T`) certifies.
pub fn check_uniqueness(
    problem: &Problem,
    phi0: &RoughPotential,
    cfg: &FlowConfig,
    schedules: [&RegularizationSchedule; 2],
    rate: Option<f64>,
) -> Result<MarginReport> {
    let c_prime = uniqueness_preconditions(problem)?;
    let f = &problem.driving;
    let horizon = problem.path.horizon();
    let a = rate.unwrap_or(0.5 * (c_prime + 1.0 / horizon));
    let sample = phi0.sample(*problem.grid())?;
    let cert = uniqueness_rescale(f, &problem.path, a, (sample.inf() - 1.0, sample.sup() + 1.0))?;

    let rel = crate::flow::CASCADE_TOL;
    let first = run_cascade(problem, phi0, schedules[0], cfg, rel)?;
    let second = run_cascade(problem, phi0, schedules[1], cfg, rel)?;
    let tol = comparison_tolerance(problem.grid(), problem.diff.backend(), first.initial.osc());
    let mut worst = (f64::INFINITY, 0.0, 0, 0.0);
    for (k, &t) in first.times.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let Some((other, gap)) = second.limit_at(t) else { continue };
        let (d, i) = sup_distance(&first.limits[k], other);
        let m = first.limit_gaps[k] + gap + tol - d;
        if m < worst.0 {
            worst = (m, t, i, d);
        }
    }
    if !worst.0.is_finite() {
        return Err(Error::MissingTimes(first.times.iter().map(|t| (0.0, *t)).collect()));
    }
    Ok(MarginReport::new(
        "uniqueness",
        "uniqueness: limits under two regularization schedules agree within their combined gaps",
        worst.0,
        Location::at(problem.grid(), worst.1, worst.2),
    )
    .with_constant("rate_A", a)
    .with_constant("C_prime", cert.constant)
    .with_constant("sup_difference", worst.3)
    .with_constant("tolerance", tol))
}

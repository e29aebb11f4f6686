//! Exponential time rescalings `φ̃(t) = e^{rt} φ(τ(t))`, `τ(t) = (1 − e^{−rt})/r`.
//!
//! With `r = B < 0` the rescaled driving term becomes monotone in `s` when `−B e^{BT} ≥ C`;
//! with `r = A > 0` the rescaled metric path is non-decreasing and the remaining driving
//! term `H` is the one used by the uniqueness argument.

use super::{rhs, DrivingCertificate, DrivingTerm, FlowTrajectory, Problem};
use crate::error::{Error, Result};
use crate::geometry::{rescaled_time, MetricPath, PathKind};
use crate::torus::ScalarField;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeRescaling {
    pub rate: f64,
}

impl TimeRescaling {
    pub fn new(rate: f64) -> Result<Self> {
        if !rate.is_finite() || rate == 0.0 {
            return Err(Error::InvalidArgument(format!("rescaling rate must be finite and non-zero, got {rate}")));
        }
        Ok(Self { rate })
    }

    /// Original time `τ` reached at rescaled time `t`.
    pub fn tau(&self, t: f64) -> f64 {
        rescaled_time(self.rate, t)
    }

    /// Rescaled time `t` with `τ(t) = tau`; `None` when `τ` never reaches `tau`.
    pub fn time_of(&self, tau: f64) -> Option<f64> {
        let arg = -self.rate * tau;
        (arg > -1.0).then(|| -arg.ln_1p() / self.rate)
    }

    /// `φ̃(t) = e^{rt} φ(τ)`.
    pub fn forward(&self, t: f64, phi: &ScalarField) -> ScalarField {
        let f = (self.rate * t).exp();
        phi.map(|v| f * v)
    }

    /// `φ(τ(t)) = e^{−rt} φ̃(t)`.
    pub fn pull_back(&self, t: f64, phi: &ScalarField) -> ScalarField {
        let f = (-self.rate * t).exp();
        phi.map(|v| f * v)
    }

    /// Original-variable trajectory `(τ_k, φ(τ_k))` of a rescaled trajectory.
    pub fn pull_back_trajectory(&self, traj: &FlowTrajectory) -> Vec<(f64, ScalarField)> {
        traj.snapshots
            .iter()
            .map(|s| (self.tau(s.t), self.pull_back(s.t, &s.phi)))
            .collect()
    }

    /// Sup-norm of the original equation's residual along a pulled-back trajectory.
    ///
    /// The time derivative is the backward quotient
    /// `(φ̃_k − φ̃_{k−1})/Δt − r φ̃_k`, which is what backward Euler on the rescaled equation
    /// produces for `φ̇(τ_k)`; the residual therefore measures only the algebra of the
    /// transform plus the Newton tolerance. Every step must have been recorded.
    pub fn pulled_back_residual(&self, original: &Problem, traj: &FlowTrajectory) -> Result<f64> {
        let times = traj.schedule.times();
        if traj.snapshots.len() != times.len() {
            return Err(Error::InvalidArgument(
                "pull-back residual needs every step recorded".into(),
            ));
        }
        let mut worst = 0.0f64;
        for w in traj.snapshots.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            let dt = cur.t - prev.t;
            let tau = self.tau(cur.t);
            let phi = self.pull_back(cur.t, &cur.phi);
            let rate = self.rate;
            let quotient = cur.phi.zip_map(&prev.phi, |a, b| (a - b) / dt - rate * a)?;
            let r = rhs(original, tau, &phi)?;
            let res = quotient.zip_map(&r, |a, b| (a - b).abs())?;
            worst = worst.max(res.sup());
        }
        Ok(worst)
    }
}

/// A rescaled problem together with the certificate that justified it.
#[derive(Debug, Clone)]
pub struct Reduction {
    /// Full rescaled driving term `F̃`.
    pub driving: DrivingTerm,
    /// `F̃` without its `−r·s` part.
    pub reduced_term: DrivingTerm,
    pub path: MetricPath,
    pub transform: TimeRescaling,
    /// Rescaled horizon `T̃` with `τ(T̃) = T`.
    pub horizon: f64,
    pub certificate: DrivingCertificate,
    /// Monotonicity defect `C` (or time bound `C′`) of the original driving term.
    pub constant: f64,
}

impl Reduction {
    /// Same problem with the rescaled path and driving term.
    pub fn apply(&self, original: &Problem) -> Problem {
        original.with_path(self.path.clone()).with_driving(self.driving.clone())
    }
}

fn rescaled_path(path: &MetricPath, rate: f64, horizon: f64) -> Result<MetricPath> {
    MetricPath::new(
        PathKind::Rescaled { inner: Box::new(path.clone()), rate },
        horizon,
    )
}

fn monotone_defect(f: &DrivingTerm, horizon: f64, s_range: (f64, f64)) -> Result<f64> {
    let declared = f.declared_defect(horizon).ok_or_else(|| {
        Error::PreconditionFailed("driving term has no bounded monotonicity defect".into())
    })?;
    let sampled = f.certify((0.0, horizon), s_range)?.monotonicity_defect;
    Ok(declared.max(sampled))
}

/// Largest admissible defect for the monotone reduction on `[0, T]`: `e^{−1}/T`.
pub fn monotone_threshold(horizon: f64) -> f64 {
    (-1.0f64).exp() / horizon
}

/// Rescales with `B < 0` so the new driving term is non-decreasing in `s`.
///
/// `B` defaults to `−1/T`, the maximiser of `−B e^{BT}`. Fails with
/// [`Error::HorizonTooLong`] when `C > e^{−1}/T`, in which case no admissible `B` exists.
/// `s_range` bounds the values of `φ̃` the certificate is sampled over.
pub fn monotone_reduction(
    f: &DrivingTerm,
    path: &MetricPath,
    b: Option<f64>,
    s_range: (f64, f64),
) -> Result<Reduction> {
    let horizon = path.horizon();
    let c = monotone_defect(f, horizon, s_range)?;
    let threshold = monotone_threshold(horizon);
    if c > threshold {
        return Err(Error::HorizonTooLong { defect: c, horizon, threshold });
    }
    // the default B = −1/T attains the threshold itself; re-evaluating −B·e^{BT} could
    // differ from it in the last bit
    let b = match b {
        None => -1.0 / horizon,
        Some(b) => b,
    };
    if !(b < 0.0) || (b != -1.0 / horizon && -b * (b * horizon).exp() < c) {
        return Err(Error::PreconditionFailed(format!(
            "B = {b} violates −B·e^(BT) ≥ C = {c} at T = {horizon}"
        )));
    }
    let transform = TimeRescaling::new(b)?;
    let new_horizon = transform.time_of(horizon).expect("B < 0 reaches every τ");
    let n = path.n();
    let driving = DrivingTerm::Rescaled { inner: Box::new(f.clone()), rate: b, n, linear: true };
    let reduced_term =
        DrivingTerm::Rescaled { inner: Box::new(f.clone()), rate: b, n, linear: false };
    let cert = driving.sample_bounds((0.0, new_horizon), s_range);
    if cert.min_ds < -1e-12 {
        return Err(Error::CertificateFailed {
            inequality: "∂F̃/∂s ≥ 0".into(),
            time: new_horizon,
            margin: cert.min_ds,
        });
    }
    Ok(Reduction {
        driving,
        reduced_term,
        path: rescaled_path(path, b, new_horizon)?,
        transform,
        horizon: new_horizon,
        certificate: cert,
        constant: c,
    })
}

/// Rescales with `A > C′` so that `θ̃_t` is non-decreasing; `H` is `F̃ + A·s`.
///
/// Needs `A·T < 1` so that the rescaled clock reaches `T`.
pub fn uniqueness_rescale(
    f: &DrivingTerm,
    path: &MetricPath,
    a: f64,
    s_range: (f64, f64),
) -> Result<Reduction> {
    let horizon = path.horizon();
    let c_prime = f.declared_time_bound().ok_or_else(|| {
        Error::PreconditionFailed("driving term declares no bound on ∂F/∂t".into())
    })?;
    let sampled = f.certify((0.0, horizon), s_range)?.max_abs_dt;
    let c_prime = c_prime.max(sampled);
    if !(a > c_prime) {
        return Err(Error::PreconditionFailed(format!("A = {a} must exceed C′ = {c_prime}")));
    }
    let transform = TimeRescaling::new(a)?;
    let new_horizon = transform.time_of(horizon).ok_or(Error::HorizonTooLong {
        defect: a,
        horizon,
        threshold: 1.0 / horizon,
    })?;
    let new_path = rescaled_path(path, a, new_horizon)?;
    // θ̃ non-decreasing at sampled times
    for k in 0..=32 {
        let t = new_horizon * k as f64 / 32.0;
        let (m, i) = new_path.theta_dot(t).min_eig();
        if m < -1e-12 {
            return Err(Error::CertificateFailed {
                inequality: format!("dθ̃/dt ≥ 0 (point {i})"),
                time: t,
                margin: m,
            });
        }
    }
    let n = path.n();
    let driving = DrivingTerm::Rescaled { inner: Box::new(f.clone()), rate: a, n, linear: true };
    let reduced_term =
        DrivingTerm::Rescaled { inner: Box::new(f.clone()), rate: a, n, linear: false };
    let certificate = reduced_term.sample_bounds((0.0, new_horizon), s_range);
    Ok(Reduction {
        driving,
        reduced_term,
        path: new_path,
        transform,
        horizon: new_horizon,
        certificate,
        constant: c_prime,
    })
}

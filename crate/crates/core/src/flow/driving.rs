//! Driving terms `F(t, z, s)` and sampled certification of their declared bounds.

use crate::error::{Error, Result};
use crate::torus::{ScalarField, TorusGrid};
use serde::{Deserialize, Serialize};

/// Time change of the rescaling transforms, shared with [`crate::geometry::rescaled_time`].
use crate::geometry::rescaled_time;

#[derive(Debug, Clone, PartialEq)]
pub enum DrivingTerm {
    Zero,
    /// `F = a·s + b + c·t`.
    Affine { a: f64, b: f64, c: f64 },
    /// `F = g(z) + a·s`.
    Spatial { g: ScalarField, a: f64 },
    /// `F = amplitude · sin(frequency · s)`; `∂F/∂s ≥ −|amplitude · frequency|`.
    Sine { amplitude: f64, frequency: f64 },
    /// `F = −2 sign(s) √|s|`: admits both `φ ≡ 0` and `φ_t = t²` from zero data.
    Counterexample,
    /// `F̃(t, z, s) = −r·s·[linear] + r·n·t + F(τ(t), z, e^{−rt} s)` with `τ(t) = (1 − e^{−rt})/r`.
    Rescaled {
        inner: Box<DrivingTerm>,
        rate: f64,
        n: usize,
        /// Whether the `−r·s` term is part of this term.
        linear: bool,
    },
}

/// Sampled bounds of a driving term over a `(t, s)` box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingCertificate {
    pub min_ds: f64,
    /// `C = max(0, −min ∂F/∂s)`.
    pub monotonicity_defect: f64,
    pub max_abs_dt: f64,
    pub inf_at_zero: f64,
    pub t_range: (f64, f64),
    pub s_range: (f64, f64),
}

const CERT_SLACK: f64 = 1e-12;

impl DrivingTerm {
    pub fn zero() -> Self {
        Self::Zero
    }

    /// `F = s`.
    pub fn identity() -> Self {
        Self::Affine { a: 1.0, b: 0.0, c: 0.0 }
    }

    pub fn value(&self, t: f64, z: usize, s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Affine { a, b, c } => a * s + b + c * t,
            Self::Spatial { g, a } => g.values()[z] + a * s,
            Self::Sine { amplitude, frequency } => amplitude * (frequency * s).sin(),
            Self::Counterexample => -2.0 * s.signum() * s.abs().sqrt(),
            Self::Rescaled { inner, rate, n, linear } => {
                let decay = (-rate * t).exp();
                let lin = if *linear { -rate * s } else { 0.0 };
                lin + rate * *n as f64 * t + inner.value(rescaled_time(*rate, t), z, decay * s)
            }
        }
    }

    /// `∂F/∂s`.
    #[allow(clippy::only_used_in_recursion)]
    pub fn ds(&self, t: f64, z: usize, s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Affine { a, .. } | Self::Spatial { a, .. } => *a,
            Self::Sine { amplitude, frequency } => amplitude * frequency * (frequency * s).cos(),
            Self::Counterexample => {
                if s == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -1.0 / s.abs().sqrt()
                }
            }
            Self::Rescaled { inner, rate, linear, .. } => {
                let decay = (-rate * t).exp();
                let lin = if *linear { -rate } else { 0.0 };
                lin + decay * inner.ds(rescaled_time(*rate, t), z, decay * s)
            }
        }
    }

    /// `∂F/∂t`.
    pub fn dt_partial(&self, t: f64, z: usize, s: f64) -> f64 {
        match self {
            Self::Affine { c, .. } => *c,
            Self::Rescaled { inner, rate, n, .. } => {
                let decay = (-rate * t).exp();
                let tau = rescaled_time(*rate, t);
                let inner_s = decay * s;
                // d/dt F(τ(t), z, e^{−rt}s) = e^{−rt} F_t − r e^{−rt} s F_s
                rate * *n as f64
                    + decay * inner.dt_partial(tau, z, inner_s)
                    - rate * inner_s * inner.ds(tau, z, inner_s)
            }
            _ => 0.0,
        }
    }

    /// Whether `F` is smooth in `s`.
    pub fn is_smooth(&self) -> bool {
        match self {
            Self::Counterexample => false,
            Self::Rescaled { inner, .. } => inner.is_smooth(),
            _ => true,
        }
    }

    /// Declared `C` with `∂F/∂s ≥ −C`; `None` when unbounded.
    pub fn declared_defect(&self, horizon: f64) -> Option<f64> {
        match self {
            Self::Zero | Self::Spatial { .. } | Self::Affine { .. } => {
                Some(match self {
                    Self::Affine { a, .. } | Self::Spatial { a, .. } => (-a).max(0.0),
                    _ => 0.0,
                })
            }
            Self::Sine { amplitude, frequency } => Some((amplitude * frequency).abs()),
            Self::Counterexample => None,
            Self::Rescaled { inner, rate, linear, .. } => {
                let c = inner.declared_defect(rescaled_time(*rate, horizon))?;
                let lin = if *linear { *rate } else { 0.0 };
                // −F̃_s ≤ r + e^{−rt} C, largest at t = T when r < 0 and at t = 0 otherwise
                let worst = (lin + c).max(lin + (-rate * horizon).exp() * c);
                Some(worst.max(0.0))
            }
        }
    }

    /// Declared `C′` with `|∂F/∂t| ≤ C′`; `None` when not declared.
    pub fn declared_time_bound(&self) -> Option<f64> {
        match self {
            Self::Zero | Self::Spatial { .. } | Self::Sine { .. } | Self::Counterexample => Some(0.0),
            Self::Affine { c, .. } => Some(c.abs()),
            Self::Rescaled { .. } => None,
        }
    }

    pub fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        match self {
            Self::Spatial { g, .. } => g.grid().check_same(grid),
            Self::Rescaled { inner, .. } => inner.check_grid(grid),
            _ => Ok(()),
        }
    }

    fn spatial_points(&self) -> Vec<usize> {
        match self {
            Self::Spatial { g, .. } => {
                let len = g.len();
                let stride = len.div_ceil(64);
                (0..len).step_by(stride).collect()
            }
            Self::Rescaled { inner, .. } => inner.spatial_points(),
            _ => vec![0],
        }
    }

    /// Samples `∂F/∂s`, `∂F/∂t` and `F(·, ·, 0)` on a `17 × 33` grid of `[t0, t1] × [s0, s1]`.
    pub fn sample_bounds(&self, t_range: (f64, f64), s_range: (f64, f64)) -> DrivingCertificate {
        let mut min_ds = f64::INFINITY;
        let mut max_dt = 0.0f64;
        let mut inf0 = f64::INFINITY;
        let zs = self.spatial_points();
        for i in 0..17 {
            let t = t_range.0 + (t_range.1 - t_range.0) * i as f64 / 16.0;
            for &z in &zs {
                inf0 = inf0.min(self.value(t, z, 0.0));
                for j in 0..33 {
                    let s = s_range.0 + (s_range.1 - s_range.0) * j as f64 / 32.0;
                    min_ds = min_ds.min(self.ds(t, z, s));
                    max_dt = max_dt.max(self.dt_partial(t, z, s).abs());
                }
            }
        }
        DrivingCertificate {
            min_ds,
            monotonicity_defect: (-min_ds).max(0.0),
            max_abs_dt: max_dt,
            inf_at_zero: inf0,
            t_range,
            s_range,
        }
    }

    /// Samples the declared bounds over the run's range; a sampled violation is an error.
    pub fn certify(&self, t_range: (f64, f64), s_range: (f64, f64)) -> Result<DrivingCertificate> {
        let cert = self.sample_bounds(t_range, s_range);
        if let Some(c) = self.declared_defect(t_range.1) {
            if cert.min_ds < -c - CERT_SLACK {
                return Err(Error::CertificateFailed {
                    inequality: format!("∂F/∂s ≥ −{c}"),
                    time: t_range.1,
                    margin: cert.min_ds + c,
                });
            }
        }
        if let Some(c) = self.declared_time_bound() {
            if cert.max_abs_dt > c + CERT_SLACK {
                return Err(Error::CertificateFailed {
                    inequality: format!("|∂F/∂t| ≤ {c}"),
                    time: t_range.1,
                    margin: c - cert.max_abs_dt,
                });
            }
        }
        Ok(cert)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_admits_both_families() {
        let f = DrivingTerm::Counterexample;
        for t in [0.0, 1e-4, 0.3, 1.0] {
            // φ ≡ 0: φ̇ = 0 = log det I − F(0)
            assert_eq!(f.value(t, 0, 0.0), 0.0);
            // φ = t²: φ̇ = 2t = −F(t²)
            let r = 2.0 * t + f.value(t, 0, t * t);
            assert!(r.abs() <= 1e-15);
        }
        assert!(!f.is_smooth());
        assert_eq!(f.declared_defect(1.0), None);
    }

    #[test]
    fn rescaled_partials_match_finite_differences() {
        let inner = DrivingTerm::Sine { amplitude: 0.7, frequency: 1.3 };
        let f = DrivingTerm::Rescaled { inner: Box::new(inner), rate: -2.0, n: 2, linear: true };
        let (t, s, h) = (0.2, 0.4, 1e-6);
        let fd_s = (f.value(t, 0, s + h) - f.value(t, 0, s - h)) / (2.0 * h);
        let fd_t = (f.value(t + h, 0, s) - f.value(t - h, 0, s)) / (2.0 * h);
        assert!((fd_s - f.ds(t, 0, s)).abs() < 1e-8);
        assert!((fd_t - f.dt_partial(t, 0, s)).abs() < 1e-8);
    }

    #[test]
    fn certification_catches_wrong_sign() {
        let f = DrivingTerm::Affine { a: -0.5, b: 0.0, c: 0.0 };
        let cert = f.certify((0.0, 1.0), (-1.0, 1.0)).unwrap();
        assert_eq!(cert.monotonicity_defect, 0.5);
        let sine = DrivingTerm::Sine { amplitude: 1.0, frequency: 2.0 };
        let half = std::f64::consts::FRAC_PI_2;
        let d = sine.certify((0.0, 1.0), (-half, half)).unwrap().monotonicity_defect;
        assert!((d - 2.0).abs() < 1e-12);
    }
}

//! (1,1)-forms in the flat frame: metric paths `t ↦ θ_t`, volume forms, Monge-Ampère
//! and mixed densities, traces and the standing-assumption certificates.

mod path;

pub use path::{certify_metric_path, rescaled_time, MetricPath, PathCertificate, PathKind};

use crate::error::{Error, Result};
use crate::torus::{Differentiator, HermMat, HermitianField, ScalarField, TorusGrid};
use rayon::prelude::*;

/// A (1,1)-form at a fixed time: either constant in space or a full field.
#[derive(Debug, Clone, PartialEq)]
pub enum Form {
    Uniform(HermMat),
    Field(HermitianField),
}

impl Form {
    pub fn at(&self, i: usize) -> HermMat {
        match self {
            Form::Uniform(m) => *m,
            Form::Field(f) => *f.get(i),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Form::Uniform(m) => m.dim(),
            Form::Field(f) => f.grid().n(),
        }
    }

    pub fn to_field(&self, grid: TorusGrid) -> HermitianField {
        match self {
            Form::Uniform(m) => HermitianField::uniform(grid, *m),
            Form::Field(f) => f.clone(),
        }
    }

    /// Smallest eigenvalue over all points, with its location (0 for uniform forms).
    pub fn min_eig(&self) -> (f64, usize) {
        match self {
            Form::Uniform(m) => (m.min_eig(), 0),
            Form::Field(f) => f.min_eig(),
        }
    }
}

/// Strictly positive density of Ω relative to Lebesgue measure (`Ω ≡ 1` is `ωⁿ`).
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeForm {
    density: ScalarField,
    log_density: Vec<f64>,
}

impl VolumeForm {
    pub fn new(density: ScalarField) -> Result<Self> {
        let (min, at) = density
            .values()
            .iter()
            .enumerate()
            .fold((f64::INFINITY, 0), |acc, (i, &v)| if v < acc.0 { (v, i) } else { acc });
        if min <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "volume density must be positive, found {min} at point {at}"
            )));
        }
        let log_density = density.values().iter().map(|v| v.ln()).collect();
        Ok(Self {
            density,
            log_density,
        })
    }

    pub fn uniform(grid: TorusGrid, value: f64) -> Result<Self> {
        Self::new(ScalarField::constant(grid, value))
    }

    pub fn density(&self) -> &ScalarField {
        &self.density
    }

    pub fn log_density(&self) -> &[f64] {
        &self.log_density
    }

    pub fn grid(&self) -> &TorusGrid {
        self.density.grid()
    }
}

/// Minimum eigenvalue of `θ + H` over the grid and where it is attained.
pub fn positivity_margin(theta: &Form, hessian: &[HermMat]) -> (f64, usize) {
    hessian
        .par_iter()
        .enumerate()
        .map(|(i, h)| (theta.at(i).add(h).min_eig(), i))
        .reduce(
            || (f64::INFINITY, usize::MAX),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        )
}

pub(crate) fn not_kahler(grid: &TorusGrid, index: usize, min_eig: f64) -> Error {
    Error::NotKahler {
        index,
        coords: grid.point(index)[..grid.real_dim()].to_vec(),
        min_eig,
    }
}

/// Pointwise `det(θ + H(φ)) / Ω`.
pub fn ma_density(
    diff: &Differentiator,
    theta: &Form,
    phi: &ScalarField,
    omega: &VolumeForm,
) -> Result<ScalarField> {
    let grid = *phi.grid();
    grid.check_same(omega.grid())?;
    let hess = diff.hessian_values(phi.values());
    let (margin, at) = positivity_margin(theta, &hess);
    if !(margin > 0.0) {
        return Err(not_kahler(&grid, at, margin));
    }
    let vals = hess
        .iter()
        .enumerate()
        .map(|(i, h)| theta.at(i).add(h).det() / omega.density().values()[i])
        .collect();
    ScalarField::new(grid, vals)
}

/// Pointwise `tr(base⁻¹ · alpha)`.
pub fn trace_with_respect_to(base: &HermitianField, alpha: &HermitianField) -> Result<ScalarField> {
    let grid = *base.grid();
    grid.check_same(alpha.grid())?;
    let mut out = Vec::with_capacity(grid.len());
    for (i, (b, a)) in base.mats().iter().zip(alpha.mats()).enumerate() {
        if !(b.min_eig() > 0.0) {
            return Err(Error::SingularBase {
                index: i,
                coords: grid.point(i)[..grid.real_dim()].to_vec(),
            });
        }
        let inv = b.inverse().ok_or_else(|| Error::SingularBase {
            index: i,
            coords: grid.point(i)[..grid.real_dim()].to_vec(),
        })?;
        out.push(inv.trace_product(a));
    }
    ScalarField::new(grid, out)
}

/// Slack of the two trace inequalities between positive forms ω (base) and ω′:
/// `(ω′ⁿ/ωⁿ)^{1/n} ≤ (1/n) tr_ω ω′ ≤ (ω′ⁿ/ωⁿ) (tr_{ω′} ω)^{n−1}`.
///
/// Returns `(middle − left, right − middle)`.
pub fn trace_inequality_slack(omega: &HermMat, omega_prime: &HermMat) -> Option<(f64, f64)> {
    let n = omega.dim() as f64;
    let inv = omega.inverse()?;
    let inv_prime = omega_prime.inverse()?;
    if omega.min_eig() <= 0.0 || omega_prime.min_eig() <= 0.0 {
        return None;
    }
    let ratio = omega_prime.det() / omega.det();
    let middle = inv.trace_product(omega_prime) / n;
    let left = ratio.powf(1.0 / n);
    let right = ratio * inv_prime.trace_product(omega).powf(n - 1.0);
    Some((middle - left, right - middle))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceInequalityReport {
    pub lower_slack: f64,
    pub lower_at: usize,
    pub upper_slack: f64,
    pub upper_at: usize,
    pub passed: bool,
}

pub const TRACE_SLACK_TOL: f64 = 1e-10;

pub fn check_trace_inequality(
    omega1: &HermitianField,
    omega2: &HermitianField,
) -> Result<TraceInequalityReport> {
    let grid = *omega1.grid();
    grid.check_same(omega2.grid())?;
    let mut rep = TraceInequalityReport {
        lower_slack: f64::INFINITY,
        lower_at: 0,
        upper_slack: f64::INFINITY,
        upper_at: 0,
        passed: true,
    };
    for i in 0..grid.len() {
        let (a, b) = (omega1.get(i), omega2.get(i));
        for m in [a, b] {
            let e = m.min_eig();
            if !(e > 0.0) {
                return Err(not_kahler(&grid, i, e));
            }
        }
        let (lo, hi) = trace_inequality_slack(a, b).ok_or_else(|| not_kahler(&grid, i, 0.0))?;
        if lo < rep.lower_slack {
            rep.lower_slack = lo;
            rep.lower_at = i;
        }
        if hi < rep.upper_slack {
            rep.upper_slack = hi;
            rep.upper_at = i;
        }
    }
    rep.passed = rep.lower_slack >= -TRACE_SLACK_TOL && rep.upper_slack >= -TRACE_SLACK_TOL;
    Ok(rep)
}

/// Pointwise mixed determinant of two Hermitian fields.
pub fn mixed_density(a: &HermitianField, b: &HermitianField, j: usize) -> Result<ScalarField> {
    let grid = *a.grid();
    grid.check_same(b.grid())?;
    let vals = a
        .mats()
        .iter()
        .zip(b.mats())
        .map(|(x, y)| HermMat::mixed(x, y, j))
        .collect::<Result<Vec<_>>>()?;
    ScalarField::new(grid, vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::Backend;
    use std::f64::consts::PI;

    #[test]
    fn ma_density_examples() {
        let g = TorusGrid::new(1, 16).unwrap();
        let d = Differentiator::new(g, Backend::Spectral);
        let omega = VolumeForm::uniform(g, 1.0).unwrap();
        let id = Form::Uniform(HermMat::identity(1));
        let ones = ma_density(&d, &id, &ScalarField::constant(g, 2.0), &omega).unwrap();
        assert!(ones.values().iter().all(|v| (v - 1.0).abs() < 1e-14));

        let a = 0.05;
        let phi = ScalarField::from_fn(g, |p| a * (2.0 * PI * p[0]).cos()).unwrap();
        let dens = ma_density(&d, &id, &phi, &omega).unwrap();
        for i in 0..g.len() {
            let x = g.point(i)[0];
            assert!((dens.values()[i] - (1.0 - a * PI * PI * (2.0 * PI * x).cos())).abs() < 1e-12);
        }

        let g2 = TorusGrid::new(2, 8).unwrap();
        let d2 = Differentiator::new(g2, Backend::Spectral);
        let theta = Form::Uniform(HermMat::diag(&[2.0, 1.0]));
        let om2 = VolumeForm::uniform(g2, 1.0).unwrap();
        let dens = ma_density(&d2, &theta, &ScalarField::zeros(g2), &om2).unwrap();
        assert!(dens.values().iter().all(|v| (v - 2.0).abs() < 1e-14));
    }

    #[test]
    fn ma_density_reports_cone_exit() {
        let g = TorusGrid::new(1, 16).unwrap();
        let d = Differentiator::new(g, Backend::Spectral);
        let omega = VolumeForm::uniform(g, 1.0).unwrap();
        let phi = ScalarField::from_fn(g, |p| (2.0 / (PI * PI)) * (2.0 * PI * p[0]).cos()).unwrap();
        let err = ma_density(&d, &Form::Uniform(HermMat::identity(1)), &phi, &omega).unwrap_err();
        match err {
            Error::NotKahler { min_eig, coords, .. } => {
                assert!((min_eig + 1.0).abs() < 1e-10);
                assert_eq!(coords[0], 0.0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn trace_examples() {
        let g = TorusGrid::new(2, 8).unwrap();
        let id = HermitianField::uniform(g, HermMat::identity(2));
        let t = trace_with_respect_to(&id, &id).unwrap();
        assert!(t.values().iter().all(|&v| v == 2.0));
        let base = HermitianField::uniform(g, HermMat::diag(&[2.0, 1.0]));
        let alpha = HermitianField::uniform(g, HermMat::diag(&[4.0, 3.0]));
        let t = trace_with_respect_to(&base, &alpha).unwrap();
        assert!(t.values().iter().all(|&v| (v - 5.0).abs() < 1e-15));
        let singular = HermitianField::uniform(g, HermMat::diag(&[1.0, 0.0]));
        assert!(matches!(
            trace_with_respect_to(&singular, &alpha),
            Err(Error::SingularBase { .. })
        ));

        let g1 = TorusGrid::new(1, 16).unwrap();
        let d = Differentiator::new(g1, Backend::Spectral);
        let phi = ScalarField::from_fn(g1, |p| (2.0 * PI * p[0]).cos()).unwrap();
        let h = d.complex_hessian(&phi).unwrap();
        let t = trace_with_respect_to(&HermitianField::uniform(g1, HermMat::identity(1)), &h).unwrap();
        for i in 0..g1.len() {
            let x = g1.point(i)[0];
            assert!((t.values()[i] + PI * PI * (2.0 * PI * x).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_inequality_examples() {
        let g1 = TorusGrid::new(1, 8).unwrap();
        let id1 = HermitianField::uniform(g1, HermMat::identity(1));
        let r = check_trace_inequality(&id1, &id1).unwrap();
        assert!(r.lower_slack.abs() < 1e-15 && r.upper_slack.abs() < 1e-15 && r.passed);
        // in n = 2 the right-hand side at identical forms is tr_ω ω = 2, so only the left is tight
        let g = TorusGrid::new(2, 8).unwrap();
        let id = HermitianField::uniform(g, HermMat::identity(2));
        let r = check_trace_inequality(&id, &id).unwrap();
        assert!(r.lower_slack.abs() < 1e-15 && (r.upper_slack - 1.0).abs() < 1e-15 && r.passed);
        let w = HermitianField::uniform(g, HermMat::diag(&[4.0, 1.0]));
        let r = check_trace_inequality(&id, &w).unwrap();
        assert!((r.lower_slack - 0.5).abs() < 1e-14);
        assert!((r.upper_slack - 2.5).abs() < 1e-14);
    }

    #[test]
    fn mixed_density_of_equal_arguments_is_det() {
        let g = TorusGrid::new(2, 8).unwrap();
        let m = HermMat::new2(2.0, 3.0, num_complex::Complex64::new(0.5, -1.0));
        let a = HermitianField::uniform(g, m);
        for j in 0..=2 {
            let v = mixed_density(&a, &a, j).unwrap();
            assert!(v.values().iter().all(|x| (x - m.det()).abs() < 1e-14));
        }
        assert!(mixed_density(&a, &a, 3).is_err());
    }
}

use super::{Form, VolumeForm};
use crate::error::{Error, Result};
use crate::torus::{HermMat, HermitianField};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum PathKind {
    /// `θ_t = θ`.
    Constant(HermMat),
    /// `θ_t = base + t·slope`.
    Affine { base: HermMat, slope: HermMat },
    /// `θ_t = θ_0 + (t + shift)·ω` with `θ_0` semi-positive.
    Nef { theta0: HermMat, shift: f64 },
    /// Piecewise-linear interpolation of space-dependent forms.
    Table {
        times: Vec<f64>,
        forms: Vec<HermitianField>,
    },
    /// `θ̃_t = e^{rt} θ_{τ(t)}` with `τ(t) = (1 − e^{−rt})/r`.
    Rescaled { inner: Box<MetricPath>, rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricPath {
    kind: PathKind,
    horizon: f64,
    n: usize,
}

/// `τ(t) = (1 − e^{−rt})/r`, the time change used by the rescaling transforms.
pub fn rescaled_time(rate: f64, t: f64) -> f64 {
    if rate == 0.0 {
        t
    } else {
        -(-rate * t).exp_m1() / rate
    }
}

impl MetricPath {
    pub fn new(kind: PathKind, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let n = match &kind {
            PathKind::Constant(m) => m.dim(),
            PathKind::Affine { base, slope } => {
                if base.dim() != slope.dim() {
                    return Err(Error::InvalidArgument("affine path dimension mismatch".into()));
                }
                base.dim()
            }
            PathKind::Nef { theta0, .. } => {
                if theta0.min_eig() < -1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "nef start must be semi-positive, minimum eigenvalue {}",
                        theta0.min_eig()
                    )));
                }
                theta0.dim()
            }
            PathKind::Table { times, forms } => {
                if times.len() < 2 || times.len() != forms.len() {
                    return Err(Error::InvalidArgument(
                        "table path needs at least two (time, form) entries".into(),
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidArgument("table times must increase".into()));
                }
                if times[0] > 0.0 || *times.last().unwrap() < horizon {
                    return Err(Error::InvalidArgument(
                        "table times must cover [0, T]".into(),
                    ));
                }
                let g = *forms[0].grid();
                for f in forms {
                    g.check_same(f.grid())?;
                }
                g.n()
            }
            PathKind::Rescaled { inner, .. } => inner.n,
        };
        Ok(Self { kind, horizon, n })
    }

    pub fn constant(theta: HermMat, horizon: f64) -> Result<Self> {
        Self::new(PathKind::Constant(theta), horizon)
    }

    /// `θ_t = ω`.
    pub fn flat(n: usize, horizon: f64) -> Result<Self> {
        Self::constant(HermMat::identity(n), horizon)
    }

    pub fn kind(&self) -> &PathKind {
        &self.kind
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_nef(&self) -> bool {
        matches!(self.kind, PathKind::Nef { .. })
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.kind.clone(), horizon)
    }

    /// Space-independent paths evaluate to [`Form::Uniform`].
    pub fn is_uniform(&self) -> bool {
        match &self.kind {
            PathKind::Table { .. } => false,
            PathKind::Rescaled { inner, .. } => inner.is_uniform(),
            _ => true,
        }
    }

    pub fn theta(&self, t: f64) -> Form {
        match &self.kind {
            PathKind::Constant(m) => Form::Uniform(*m),
            PathKind::Affine { base, slope } => Form::Uniform(base.add(&slope.scale(t))),
            PathKind::Nef { theta0, shift } => {
                Form::Uniform(theta0.add(&HermMat::identity(theta0.dim()).scale(t + shift)))
            }
            PathKind::Table { times, forms } => {
                let (k, w) = locate(times, t);
                Form::Field(
                    forms[k]
                        .scale(1.0 - w)
                        .add(&forms[k + 1].scale(w))
                        .expect("table grids checked at construction"),
                )
            }
            PathKind::Rescaled { inner, rate } => {
                let tau = rescaled_time(*rate, t);
                scale_form(inner.theta(tau), (rate * t).exp())
            }
        }
    }

    pub fn theta_dot(&self, t: f64) -> Form {
        match &self.kind {
            PathKind::Constant(m) => Form::Uniform(HermMat::zero(m.dim())),
            PathKind::Affine { slope, .. } => Form::Uniform(*slope),
            PathKind::Nef { theta0, .. } => Form::Uniform(HermMat::identity(theta0.dim())),
            PathKind::Table { times, forms } => {
                let (k, _) = locate(times, t);
                let dt = times[k + 1] - times[k];
                Form::Field(
                    forms[k + 1]
                        .add(&forms[k].scale(-1.0))
                        .expect("table grids checked at construction")
                        .scale(1.0 / dt),
                )
            }
            PathKind::Rescaled { inner, rate } => {
                // d/dt e^{rt} θ_τ = r e^{rt} θ_τ + θ̇_τ   (τ' = e^{−rt})
                let tau = rescaled_time(*rate, t);
                let a = scale_form(inner.theta(tau), rate * (rate * t).exp());
                add_forms(a, inner.theta_dot(tau))
            }
        }
    }
}

fn locate(times: &[f64], t: f64) -> (usize, f64) {
    let last = times.len() - 2;
    let k = times
        .windows(2)
        .position(|w| t <= w[1])
        .unwrap_or(last)
        .min(last);
    let w = ((t - times[k]) / (times[k + 1] - times[k])).clamp(0.0, 1.0);
    (k, w)
}

fn scale_form(f: Form, s: f64) -> Form {
    match f {
        Form::Uniform(m) => Form::Uniform(m.scale(s)),
        Form::Field(h) => Form::Field(h.scale(s)),
    }
}

fn add_forms(a: Form, b: Form) -> Form {
    match (a, b) {
        (Form::Uniform(x), Form::Uniform(y)) => Form::Uniform(x.add(&y)),
        (Form::Field(x), Form::Uniform(y)) | (Form::Uniform(y), Form::Field(x)) => {
            Form::Field(x.add_uniform(&y))
        }
        (Form::Field(x), Form::Field(y)) => Form::Field(x.add(&y).expect("same grid")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCertificate {
    /// Sampled `min(λ_min(θ_t) − ½, 2 − λ_max(θ_t))`; the lower half is skipped for nef paths.
    pub sandwich_margin: f64,
    /// Sandwich margin minus the Lipschitz allowance `sup‖θ̇‖ · Δt / 2`.
    pub sandwich_certified: f64,
    /// Sampled `λ_min(θ_t − tθ̇_t)`.
    pub monotonicity_margin: f64,
    pub monotonicity_certified: f64,
    /// Smallest δ with `δ⁻¹Ω ≤ θ_tⁿ ≤ δΩ` over the samples; `None` when `θ_tⁿ` vanishes.
    pub delta: Option<f64>,
    /// Minimum eigenvalue of `θ_0` for nef paths.
    pub nef_floor: Option<f64>,
    pub samples: usize,
}

/// Samples both standing inequalities at `samples` equispaced times in `[0, T]`.
pub fn certify_metric_path(
    path: &MetricPath,
    samples: usize,
    omega: Option<&VolumeForm>,
) -> Result<PathCertificate> {
    if samples < 2 {
        return Err(Error::InvalidArgument("at least two samples required".into()));
    }
    let nef = path.is_nef();
    let dt = path.horizon / (samples - 1) as f64;
    let mut sandwich = (f64::INFINITY, 0.0);
    let mut mono = (f64::INFINITY, 0.0);
    let mut dot_norm = 0.0f64;
    let mut mono_lip = 0.0f64;
    let mut prev_mono: Option<f64> = None;
    let mut delta: Option<f64> = Some(1.0);

    for k in 0..samples {
        let t = dt * k as f64;
        let theta = path.theta(t);
        let dot = path.theta_dot(t);
        let points = match &theta {
            Form::Uniform(_) => 1,
            Form::Field(f) => f.grid().len(),
        };
        let mut mono_here = f64::INFINITY;
        for i in 0..points {
            let th = theta.at(i);
            let td = dot.at(i);
            let [lo, _] = th.eigenvalues();
            let hi = th.max_eig();
            let s = if nef { 2.0 - hi } else { (lo - 0.5).min(2.0 - hi) };
            if s < sandwich.0 {
                sandwich = (s, t);
            }
            let m = th.sub(&td.scale(t)).min_eig();
            mono_here = mono_here.min(m);
            dot_norm = dot_norm.max(td.min_eig().abs()).max(td.max_eig().abs());

            let det = th.det();
            delta = match delta {
                Some(d) if det > 0.0 => {
                    let ratio = |w: f64| (det / w).max(w / det);
                    let worst = match omega {
                        None => ratio(1.0),
                        Some(om) => om
                            .density()
                            .values()
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| points == 1 || *j == i)
                            .map(|(_, &w)| ratio(w))
                            .fold(0.0, f64::max),
                    };
                    Some(d.max(worst))
                }
                _ => None,
            };
        }
        if mono_here < mono.0 {
            mono = (mono_here, t);
        }
        if let Some(p) = prev_mono {
            mono_lip = mono_lip.max((mono_here - p).abs() / dt);
        }
        prev_mono = Some(mono_here);
    }

    let nef_floor = nef.then(|| path.theta(0.0).min_eig().0);
    let cert = PathCertificate {
        sandwich_margin: sandwich.0,
        sandwich_certified: sandwich.0 - dot_norm * dt / 2.0,
        monotonicity_margin: mono.0,
        monotonicity_certified: mono.0 - mono_lip * dt / 2.0,
        delta,
        nef_floor,
        samples,
    };
    if cert.sandwich_certified < 0.0 {
        return Err(Error::CertificateFailed {
            inequality: if nef {
                "θ_t ≤ 2ω".into()
            } else {
                "ω/2 ≤ θ_t ≤ 2ω".into()
            },
            time: sandwich.1,
            margin: cert.sandwich_certified,
        });
    }
    if cert.monotonicity_certified < 0.0 {
        return Err(Error::CertificateFailed {
            inequality: "θ_t − tθ̇_t ≥ 0".into(),
            time: mono.1,
            margin: cert.monotonicity_certified,
        });
    }
    if nef {
        let eps = dt.min(path.horizon) * 1e-3;
        let floor_after = path.theta(eps).min_eig().0;
        if !(floor_after > 0.0) {
            return Err(Error::CertificateFailed {
                inequality: "θ_t > 0 for t > 0".into(),
                time: eps,
                margin: floor_after,
            });
        }
    }
    Ok(cert)
}

//! Scenario configuration: one JSON document per run, validated before anything is computed.

use anyhow::{bail, ensure, Context, Result};
use cmaf_core::flow::{DrivingTerm, FlowConfig, Problem, CASCADE_TOL};
use cmaf_core::geometry::{MetricPath, PathKind, VolumeForm};
use cmaf_core::psh::{Formula, Regularity, RegularizationSchedule, RoughPotential};
use cmaf_core::torus::{read_snapshot, HermMat, HermitianField, TorusGrid};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub label: String,
    pub grid: GridDecl,
    #[serde(default)]
    pub metric: MetricDecl,
    #[serde(default)]
    pub volume: VolumeDecl,
    #[serde(default)]
    pub driving: DrivingDecl,
    pub initial: InitialDecl,
    #[serde(default)]
    pub flow: FlowConfig,
    /// Mollification radii; when present the run is a cascade.
    #[serde(default)]
    pub cascade: Option<CascadeDecl>,
    /// Shift family for nef starts.
    #[serde(default)]
    pub nef: Option<NefDecl>,
    #[serde(default)]
    pub reduction: Option<ReductionDecl>,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub check_options: CheckOptions,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDecl {
    pub n: usize,
    pub resolution: usize,
}

/// A Hermitian matrix as nested rows; entries are reals or `[re, im]` pairs.
pub type Matrix = Vec<Vec<Entry>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

fn to_herm(m: &Matrix) -> Result<HermMat> {
    let rows: Vec<Vec<(f64, f64)>> = m
        .iter()
        .map(|r| {
            r.iter()
                .map(|e| match e {
                    Entry::Real(x) => (*x, 0.0),
                    Entry::Complex([re, im]) => (*re, *im),
                })
                .collect()
        })
        .collect();
    Ok(HermMat::from_rows(&rows)?)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricDecl {
    /// `θ_t = ω`.
    #[default]
    Flat,
    Constant { theta: Matrix },
    /// `θ_t = base + t·slope`.
    Affine { base: Matrix, slope: Matrix },
    /// `θ_t = θ_0 + (t + shift)·ω`.
    Nef {
        theta0: Matrix,
        #[serde(default)]
        shift: f64,
    },
    /// Piecewise-linear in time between constant matrices.
    Table { times: Vec<f64>, matrices: Vec<Matrix> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VolumeDecl {
    Uniform { value: f64 },
    Snapshot { path: PathBuf },
}

impl Default for VolumeDecl {
    fn default() -> Self {
        Self::Uniform { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DrivingDecl {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `F = a·s + b + c·t`.
    Affine {
        a: f64,
        #[serde(default)]
        b: f64,
        #[serde(default)]
        c: f64,
    },
    Sine { amplitude: f64, frequency: f64 },
    /// `F = −2 sign(s) √|s|`.
    Counterexample,
    /// `F = g(z) + a·s` with `g` from the potential catalog.
    Spatial {
        g: Formula,
        #[serde(default)]
        a: f64,
    },
}

/// Initial data: a catalog formula (`{"kind": "max-kink", ...}`) or a snapshot file
/// (`{"snapshot": "path", "regularity": "bounded"}`). Either form takes an optional `floor`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDecl {
    Formula { formula: Formula, floor: Option<f64> },
    Snapshot { path: PathBuf, regularity: Regularity, floor: Option<f64> },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotRepr {
    snapshot: PathBuf,
    regularity: Regularity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    floor: Option<f64>,
}

impl<'de> Deserialize<'de> for InitialDecl {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let mut v = serde_json::Value::deserialize(d)?;
        let obj = v.as_object_mut().ok_or_else(|| D::Error::custom("initial data must be an object"))?;
        if obj.contains_key("snapshot") {
            let r: SnapshotRepr = serde_json::from_value(v).map_err(D::Error::custom)?;
            return Ok(Self::Snapshot { path: r.snapshot, regularity: r.regularity, floor: r.floor });
        }
        let floor = match obj.remove("floor") {
            None => None,
            Some(f) => Some(f.as_f64().ok_or_else(|| D::Error::custom("floor must be a number"))?),
        };
        let formula = serde_json::from_value(v).map_err(D::Error::custom)?;
        Ok(Self::Formula { formula, floor })
    }
}

impl Serialize for InitialDecl {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error;
        match self {
            Self::Snapshot { path, regularity, floor } => SnapshotRepr {
                snapshot: path.clone(),
                regularity: *regularity,
                floor: *floor,
            }
            .serialize(s),
            Self::Formula { formula, floor } => {
                let mut v = serde_json::to_value(formula).map_err(S::Error::custom)?;
                if let (Some(f), Some(obj)) = (floor, v.as_object_mut()) {
                    obj.insert("floor".into(), serde_json::json!(f));
                }
                v.serialize(s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeDecl {
    pub radii: Vec<f64>,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NefDecl {
    pub eps: Vec<f64>,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_rel_tol() -> f64 {
    CASCADE_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReductionDecl {
    /// Rescale so that `∂F/∂s ≥ 0`; `b` defaults to `−1/T`.
    Monotone {
        #[serde(default)]
        b: Option<f64>,
    },
    /// Rescale with rate `a > C′` so that `θ̃_t` is non-decreasing.
    Uniqueness { a: f64 },
}

/// Parameters of the individual checks; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckOptions {
    /// Semi-monotonicity constant of the comparison bound.
    pub lambda: f64,
    /// `ε` of the time-derivative bound; defaults to the first step.
    pub eps: Option<f64>,
    /// Fit window of `min φ̇` against `log t`.
    pub window: Option<(f64, f64)>,
    pub homotopy_samples: usize,
    /// Time of the second-order stability ratio; defaults to the first step.
    pub stability_eps: Option<f64>,
    /// Top of the ladder `t_m = t0·2^{−m}`.
    pub t0: f64,
    pub m_max: usize,
    /// Final L¹ (and smooth sup) distance allowed, relative to `Osc φ_0`.
    pub rel_tol: f64,
    /// Radii of the second cascade for the uniqueness check.
    pub second_radii: Option<Vec<f64>>,
    /// Rescaling rate of the uniqueness certificate.
    pub rate: Option<f64>,
    /// Second initial datum for comparison, contraction and stability.
    pub partner: Option<InitialDecl>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            eps: None,
            window: None,
            homotopy_samples: 3,
            stability_eps: None,
            t0: 0.1,
            m_max: 7,
            rel_tol: 1e-2,
            second_radii: None,
            rate: None,
            partner: None,
        }
    }
}

/// Names accepted by `checks` and `--check`.
pub const CHECKS: &[&str] = &[
    "apriori",
    "time-derivative",
    "gradient-laplacian",
    "energy",
    "residual",
    "convergence",
    "comparison",
    "contraction",
    "stability",
    "uniqueness",
];

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes snapshot paths relative to the config file absolute.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let VolumeDecl::Snapshot { path } = &mut self.volume {
            fix(path);
        }
        if let InitialDecl::Snapshot { path, .. } = &mut self.initial {
            fix(path);
        }
        if let Some(InitialDecl::Snapshot { path, .. }) = &mut self.check_options.partner {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        TorusGrid::new(self.grid.n, self.grid.resolution)?;
        self.flow.schedule()?;
        for c in &self.checks {
            ensure!(CHECKS.contains(&c.as_str()), "unknown check {c:?}; expected one of {CHECKS:?}");
        }
        if let Some(c) = &self.cascade {
            RegularizationSchedule::new(c.radii.clone())?;
        }
        if let Some(r) = &self.check_options.second_radii {
            RegularizationSchedule::new(r.clone())?;
        }
        if let Some(nef) = &self.nef {
            ensure!(
                matches!(self.metric, MetricDecl::Nef { .. }),
                "a shift family needs a nef metric"
            );
            ensure!(!nef.eps.is_empty(), "empty shift family");
        }
        ensure!(
            !(self.nef.is_some() && self.cascade.is_some()),
            "nef families and cascades cannot be combined"
        );
        ensure!(
            self.reduction.is_none() || (self.nef.is_none() && self.cascade.is_none()),
            "reductions apply to single runs only"
        );
        self.problem()?;
        self.initial_potential()?;
        Ok(())
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn torus(&self) -> TorusGrid {
        TorusGrid::new(self.grid.n, self.grid.resolution).expect("validated")
    }

    pub fn path(&self) -> Result<MetricPath> {
        let n = self.grid.n;
        let t = self.flow.horizon;
        let path = match &self.metric {
            MetricDecl::Flat => MetricPath::flat(n, t)?,
            MetricDecl::Constant { theta } => MetricPath::constant(to_herm(theta)?, t)?,
            MetricDecl::Affine { base, slope } => MetricPath::new(
                PathKind::Affine { base: to_herm(base)?, slope: to_herm(slope)? },
                t,
            )?,
            MetricDecl::Nef { theta0, shift } => {
                MetricPath::new(PathKind::Nef { theta0: to_herm(theta0)?, shift: *shift }, t)?
            }
            MetricDecl::Table { times, matrices } => {
                ensure!(times.len() == matrices.len(), "table needs one matrix per time");
                let grid = self.torus();
                let forms = matrices
                    .iter()
                    .map(|m| Ok(HermitianField::uniform(grid, to_herm(m)?)))
                    .collect::<Result<Vec<_>>>()?;
                MetricPath::new(PathKind::Table { times: times.clone(), forms }, t)?
            }
        };
        ensure!(path.n() == n, "metric has dimension {}, grid {n}", path.n());
        Ok(path)
    }

    pub fn volume_form(&self) -> Result<VolumeForm> {
        let grid = self.torus();
        Ok(match &self.volume {
            VolumeDecl::Uniform { value } => VolumeForm::uniform(grid, *value)?,
            VolumeDecl::Snapshot { path } => {
                let (field, _) = read_snapshot(path)?;
                grid.check_same(field.grid())?;
                VolumeForm::new(field)?
            }
        })
    }

    pub fn driving_term(&self) -> Result<DrivingTerm> {
        Ok(match &self.driving {
            DrivingDecl::Zero => DrivingTerm::Zero,
            DrivingDecl::Constant { value } => DrivingTerm::Affine { a: 0.0, b: *value, c: 0.0 },
            DrivingDecl::Affine { a, b, c } => DrivingTerm::Affine { a: *a, b: *b, c: *c },
            DrivingDecl::Sine { amplitude, frequency } => {
                DrivingTerm::Sine { amplitude: *amplitude, frequency: *frequency }
            }
            DrivingDecl::Counterexample => DrivingTerm::Counterexample,
            DrivingDecl::Spatial { g, a } => {
                let g = RoughPotential::formula(g.clone(), self.grid.n)?.sample(self.torus())?;
                DrivingTerm::Spatial { g, a: *a }
            }
        })
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem::new(
            self.torus(),
            self.flow.backend,
            self.path()?,
            self.driving_term()?,
            self.volume_form()?,
        )?)
    }

    pub fn initial_potential(&self) -> Result<RoughPotential> {
        potential(&self.initial, self.grid.n)
    }

    pub fn partner_potential(&self) -> Result<RoughPotential> {
        match &self.check_options.partner {
            Some(p) => potential(p, self.grid.n),
            None => bail!("this check needs check_options.partner"),
        }
    }
}

pub fn potential(decl: &InitialDecl, n: usize) -> Result<RoughPotential> {
    let (p, floor) = match decl {
        InitialDecl::Formula { formula, floor } => (RoughPotential::formula(formula.clone(), n)?, *floor),
        InitialDecl::Snapshot { path, regularity, floor } => {
            let (field, _) = read_snapshot(path).with_context(|| format!("reading {}", path.display()))?;
            ensure!(field.grid().n() == n, "snapshot lives in dimension {}", field.grid().n());
            (RoughPotential::sampled(field, *regularity), *floor)
        }
    };
    Ok(match floor {
        Some(f) => p.with_floor(f),
        None => p,
    })
}

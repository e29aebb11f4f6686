//! Catalog of initial potentials, from smooth to singular.

use crate::error::{Error, Result};
use crate::torus::{Point, ScalarField, TorusGrid, MAX_AXES};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default clamp level for unbounded potentials.
pub const DEFAULT_FLOOR: f64 = -40.0;

/// Inner radius of the pole profiles; the profile is continued to a constant on `[¼, ½]`.
const POLE_RADIUS: f64 = 0.25;
const POLE_OUTER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularity {
    Smooth,
    Lipschitz,
    Bounded,
    UnboundedZeroLelong,
    /// Logarithmic poles; only meaningful for Lelong estimation, not as initial data.
    UnboundedPositiveLelong,
}

impl Regularity {
    pub fn is_bounded(self) -> bool {
        matches!(self, Self::Smooth | Self::Lipschitz | Self::Bounded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    /// Integer wavevector over the `2n` real axes.
    pub wavevector: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

type Profile<'a> = Box<dyn Fn(f64) -> f64 + 'a>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Formula {
    Constant {
        value: f64,
    },
    /// `Σ a cos(2π k·x + phase)`.
    FourierSum {
        modes: Vec<FourierMode>,
    },
    /// `max(a cos 2πx₁, b)`.
    MaxKink {
        amplitude: f64,
        #[serde(default)]
        level: f64,
    },
    /// `−2s({x₁} − ½)²`: a convex kink on `x₁ = 0` with `1 + H = 1 − s` elsewhere, so `s = 1`
    /// sits on the boundary of the cone.
    DegenerateKink {
        saturation: f64,
    },
    /// `γ log|z₁ − c|` near `c`.
    LogPole {
        gamma: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `−s (−log|z₁ − c|)^{1/2}` near `c`: unbounded with zero Lelong number.
    SqrtLogPole {
        scale: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `γ log max(|z₁ − c|, r₀)`: bounded.
    TruncatedLogPole {
        gamma: f64,
        cutoff: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
}

impl Formula {
    pub fn regularity(&self) -> Regularity {
        match self {
            Self::Constant { .. } | Self::FourierSum { .. } => Regularity::Smooth,
            Self::MaxKink { .. } | Self::DegenerateKink { .. } => Regularity::Lipschitz,
            Self::TruncatedLogPole { .. } => Regularity::Bounded,
            Self::SqrtLogPole { .. } => Regularity::UnboundedZeroLelong,
            Self::LogPole { .. } => Regularity::UnboundedPositiveLelong,
        }
    }

    fn center(&self) -> Option<&Option<Vec<f64>>> {
        match self {
            Self::LogPole { center, .. }
            | Self::SqrtLogPole { center, .. }
            | Self::TruncatedLogPole { center, .. } => Some(center),
            _ => None,
        }
    }

    /// `(p(R), R p′(R))` of the inner pole profile at `R = ¼`, and the profile itself.
    fn pole(&self) -> Option<(f64, f64, Profile<'_>)> {
        let r = POLE_RADIUS;
        match *self {
            Self::LogPole { gamma, .. } => {
                Some((gamma * r.ln(), gamma, Box::new(move |d: f64| gamma * d.ln())))
            }
            Self::SqrtLogPole { scale, .. } => Some((
                -scale * (-r.ln()).sqrt(),
                scale / (2.0 * (-r.ln()).sqrt()),
                Box::new(move |d: f64| -scale * (-d.ln()).sqrt()),
            )),
            Self::TruncatedLogPole { gamma, cutoff, .. } => Some((
                gamma * r.ln(),
                gamma,
                Box::new(move |d: f64| gamma * d.max(cutoff).ln()),
            )),
            _ => None,
        }
    }
}

/// Curvature of the annulus continuation; `1 − κ/4` is the cone margin there.
fn annulus_kappa(r_dp: f64) -> f64 {
    2.0 * r_dp / (POLE_OUTER * POLE_OUTER - POLE_RADIUS * POLE_RADIUS)
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Formula(Formula),
    Sampled(ScalarField),
}

/// An initial potential given in closed form or as samples, with its clamp floor.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughPotential {
    source: Source,
    regularity: Regularity,
    n: usize,
    floor: f64,
    center: Point,
}

impl RoughPotential {
    pub fn formula(formula: Formula, n: usize) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::InvalidArgument(format!("unsupported dimension {n}")));
        }
        let dim = 2 * n;
        let mut center = [0.5; MAX_AXES];
        if let Some(c) = formula.center() {
            if let Some(c) = c {
                if c.len() != dim {
                    return Err(Error::InvalidArgument(format!(
                        "pole center needs {dim} coordinates, got {}",
                        c.len()
                    )));
                }
                center[..dim].copy_from_slice(c);
            }
            let (_, r_dp, _) = formula.pole().expect("pole formula");
            let kappa = annulus_kappa(r_dp);
            if !(r_dp >= 0.0) || kappa > 4.0 {
                return Err(Error::InvalidArgument(format!(
                    "pole strength leaves the cone in the annulus (curvature {kappa} > 4)"
                )));
            }
        }
        match &formula {
            Formula::FourierSum { modes } => {
                if let Some(m) = modes.iter().find(|m| m.wavevector.len() != dim) {
                    return Err(Error::InvalidArgument(format!(
                        "wavevector {:?} needs {dim} entries",
                        m.wavevector
                    )));
                }
            }
            Formula::DegenerateKink { saturation } if !(0.0..=1.0).contains(saturation) => {
                return Err(Error::InvalidArgument(format!(
                    "saturation must lie in [0, 1], got {saturation}"
                )));
            }
            Formula::TruncatedLogPole { cutoff, .. } if !(*cutoff > 0.0 && *cutoff < POLE_RADIUS) => {
                return Err(Error::InvalidArgument(format!(
                    "cutoff must lie in (0, ¼), got {cutoff}"
                )));
            }
            _ => {}
        }
        Ok(Self {
            regularity: formula.regularity(),
            source: Source::Formula(formula),
            n,
            floor: DEFAULT_FLOOR,
            center,
        })
    }

    pub fn sampled(field: ScalarField, regularity: Regularity) -> Self {
        let n = field.grid().n();
        Self {
            source: Source::Sampled(field),
            regularity,
            n,
            floor: DEFAULT_FLOOR,
            center: [0.5; MAX_AXES],
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_formula(&self) -> Option<&Formula> {
        match &self.source {
            Source::Formula(f) => Some(f),
            Source::Sampled(_) => None,
        }
    }

    pub fn as_sampled(&self) -> Option<&ScalarField> {
        match &self.source {
            Source::Sampled(f) => Some(f),
            Source::Formula(_) => None,
        }
    }

    /// Declared singular points (pole centers).
    pub fn singular_points(&self) -> Vec<Point> {
        match self.regularity {
            Regularity::UnboundedZeroLelong | Regularity::UnboundedPositiveLelong => {
                vec![self.center]
            }
            _ => Vec::new(),
        }
    }

    /// Pole center for pole formulas.
    pub fn center(&self) -> Point {
        self.center
    }

    /// Value at an arbitrary point, clamped at the floor. Sampled potentials are interpolated
    /// multilinearly.
    pub fn value(&self, p: &Point) -> f64 {
        let v = match &self.source {
            Source::Formula(f) => self.formula_value(f, p),
            Source::Sampled(field) => interpolate(field, p),
        };
        if v.is_nan() {
            self.floor
        } else {
            v.max(self.floor)
        }
    }

    /// Whether `value(p)` was cut off by the floor.
    pub fn is_clamped(&self, p: &Point) -> bool {
        let raw = match &self.source {
            Source::Formula(f) => self.formula_value(f, p),
            Source::Sampled(field) => interpolate(field, p),
        };
        !(raw > self.floor)
    }

    pub fn sample(&self, grid: TorusGrid) -> Result<ScalarField> {
        if grid.n() != self.n {
            return Err(Error::GridMismatch(format!(
                "potential lives in dimension {}, grid in {}",
                self.n,
                grid.n()
            )));
        }
        match &self.source {
            Source::Sampled(field) if field.grid() == &grid => {
                Ok(field.map(|v| v.max(self.floor)))
            }
            Source::Sampled(field) if grid.is_restriction_of(field.grid()) => {
                Ok(field.restrict(grid)?.map(|v| v.max(self.floor)))
            }
            Source::Sampled(field) => Err(Error::GridMismatch(format!(
                "sampled potential on resolution {} cannot be resampled to {}",
                field.grid().resolution(),
                grid.resolution()
            ))),
            Source::Formula(_) => {
                let h = grid.spacing();
                let singular = self.singular_points();
                ScalarField::from_fn(grid, |p| {
                    let near = singular.iter().any(|c| {
                        crate::torus::torus_distance(&p[..2], &c[..2]) < 1.5 * h
                    });
                    if near {
                        self.cell_average(p, h)
                    } else {
                        self.value(p)
                    }
                })
            }
        }
    }

    /// Midpoint-rule average over the `h × h` cell of the `z₁` plane centred at `p`; used for
    /// nodes next to a pole, where a point sample would not represent the cell.
    fn cell_average(&self, p: &Point, h: f64) -> f64 {
        const SUB: usize = 16;
        let mut acc = 0.0;
        for a in 0..SUB {
            for b in 0..SUB {
                let mut q = *p;
                q[0] += h * ((a as f64 + 0.5) / SUB as f64 - 0.5);
                q[1] += h * ((b as f64 + 0.5) / SUB as f64 - 0.5);
                acc += self.value(&q);
            }
        }
        acc / (SUB * SUB) as f64
    }

    fn formula_value(&self, f: &Formula, p: &Point) -> f64 {
        let dim = 2 * self.n;
        match f {
            Formula::Constant { value } => *value,
            Formula::FourierSum { modes } => modes
                .iter()
                .map(|m| {
                    let arg: f64 = m
                        .wavevector
                        .iter()
                        .zip(&p[..dim])
                        .map(|(&k, &x)| k as f64 * x)
                        .sum();
                    m.amplitude * (2.0 * PI * arg + m.phase).cos()
                })
                .sum(),
            Formula::MaxKink { amplitude, level } => {
                (amplitude * (2.0 * PI * p[0]).cos()).max(*level)
            }
            Formula::DegenerateKink { saturation } => {
                let x = p[0] - p[0].floor() - 0.5;
                -2.0 * saturation * x * x
            }
            _ => {
                let c = &self.center;
                let d = crate::torus::torus_distance(&p[..2], &c[..2]);
                let (p_r, r_dp, profile) = f.pole().expect("pole formula");
                radial_profile(d, p_r, r_dp, &*profile)
            }
        }
    }
}

fn radial_profile(d: f64, p_r: f64, r_dp: f64, inner: &dyn Fn(f64) -> f64) -> f64 {
    let r = POLE_RADIUS;
    if d <= r {
        return inner(d);
    }
    let kappa = annulus_kappa(r_dp);
    let d = d.min(POLE_OUTER);
    let l = (d / r).ln();
    p_r + r_dp * l - 0.5 * kappa * (0.5 * (d * d - r * r) - r * r * l)
}

/// Multilinear interpolation of periodic samples.
fn interpolate(field: &ScalarField, p: &Point) -> f64 {
    let g = field.grid();
    let dim = g.real_dim();
    let n = g.resolution() as f64;
    let mut base = [0usize; MAX_AXES];
    let mut frac = [0.0; MAX_AXES];
    for a in 0..dim {
        let s = (p[a] - p[a].floor()) * n;
        let i = s.floor();
        base[a] = (i as usize) % g.resolution();
        frac[a] = s - i;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << dim) {
        let mut w = 1.0;
        let mut idx = [0usize; MAX_AXES];
        for a in 0..dim {
            let up = (corner >> a) & 1 == 1;
            w *= if up { frac[a] } else { 1.0 - frac[a] };
            idx[a] = if up { (base[a] + 1) % g.resolution() } else { base[a] };
        }
        if w != 0.0 {
            acc += w * field.values()[g.flat_index(&idx[..dim])];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(x: f64, y: f64) -> Point {
        [x, y, 0.0, 0.0]
    }

    #[test]
    fn regularity_tags() {
        let f = |f: Formula| RoughPotential::formula(f, 1).unwrap().regularity();
        assert_eq!(f(Formula::Constant { value: 1.0 }), Regularity::Smooth);
        assert_eq!(
            f(Formula::MaxKink { amplitude: 0.05, level: 0.0 }),
            Regularity::Lipschitz
        );
        assert_eq!(
            f(Formula::SqrtLogPole { scale: 0.5, center: None }),
            Regularity::UnboundedZeroLelong
        );
    }

    #[test]
    fn pole_profiles_are_continuous_and_flat_outside() {
        let pot = RoughPotential::formula(
            Formula::LogPole { gamma: 0.3, center: None },
            1,
        )
        .unwrap();
        let c = 0.5;
        for d in [POLE_RADIUS, POLE_OUTER] {
            let below = pot.value(&at(c + d - 1e-9, c));
            let above = pot.value(&at(c + d + 1e-9, c));
            assert!((below - above).abs() < 1e-7, "jump at {d}");
        }
        let inside = pot.value(&at(c + 0.1, c));
        assert!((inside - 0.3 * 0.1f64.ln()).abs() < 1e-14);
        assert_eq!(pot.value(&at(0.0, 0.0)), pot.value(&at(c + 0.5, c)));
        assert_eq!(pot.value(&at(c, c)), DEFAULT_FLOOR);
        assert!(pot.is_clamped(&at(c, c)));
    }

    #[test]
    fn annulus_curvature_is_bounded() {
        // γ = 3/8 puts the annulus exactly on the cone boundary
        assert!(RoughPotential::formula(Formula::LogPole { gamma: 0.375, center: None }, 1).is_ok());
        assert!(RoughPotential::formula(Formula::LogPole { gamma: 0.4, center: None }, 1).is_err());
    }

    #[test]
    fn degenerate_kink_values() {
        let pot = RoughPotential::formula(Formula::DegenerateKink { saturation: 1.0 }, 1).unwrap();
        assert_eq!(pot.value(&at(0.5, 0.3)), 0.0);
        assert_eq!(pot.value(&at(0.0, 0.3)), -0.5);
        assert_eq!(pot.value(&at(1.25, 0.0)), pot.value(&at(0.25, 0.0)));
    }

    #[test]
    fn interpolation_reproduces_nodes_and_linear_data() {
        let g = TorusGrid::new(1, 8).unwrap();
        let f = ScalarField::from_fn(g, |p| p[0] + 2.0 * p[1]).unwrap();
        let pot = RoughPotential::sampled(f.clone(), Regularity::Smooth);
        for i in [0, 9, 27] {
            assert!((pot.value(&g.point(i)) - f.values()[i]).abs() < 1e-15);
        }
        // interior of a cell, away from the periodic seam
        assert!((pot.value(&at(0.3, 0.2)) - 0.7).abs() < 1e-14);
    }
}

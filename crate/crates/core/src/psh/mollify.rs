//! Decreasing smooth approximation of rough potentials by periodized Gaussian mollification.

use super::{psh_margin, RoughPotential, TOL_PSH};
use crate::error::{Error, Result};
use crate::torus::{Fft, ScalarField, TorusGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest oversampled grid used when mollifying closed-form potentials.
const MAX_FINE_POINTS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationSchedule {
    radii: Vec<f64>,
}

impl RegularizationSchedule {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::InvalidArgument("empty regularization schedule".into()));
        }
        if radii.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument("radii must be positive".into()));
        }
        if radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument("radii must strictly decrease".into()));
        }
        Ok(Self { radii })
    }

    /// `δ_j = first · ratio^j` for `j < count`.
    pub fn geometric(first: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidArgument(format!("ratio must lie in (0, 1), got {ratio}")));
        }
        Self::new((0..count).map(|j| first * ratio.powi(j as i32)).collect())
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// The finest kernel must span at least two grid spacings.
    pub fn check_resolved(&self, grid: &TorusGrid) -> Result<()> {
        let last = *self.radii.last().expect("non-empty");
        if last < 2.0 * grid.spacing() {
            return Err(Error::InvalidArgument(format!(
                "finest radius {last} is below two grid spacings ({})",
                2.0 * grid.spacing()
            )));
        }
        Ok(())
    }
}

/// Second-moment correction `m(δ) = nδ²` of the kernel `∝ exp(−|y|²/δ²)` on `ℝ^{2n}`.
pub fn moment_correction(n: usize, delta: f64) -> f64 {
    n as f64 * delta * delta
}

#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedLadder {
    pub levels: Vec<ScalarField>,
    pub radii: Vec<f64>,
    /// `m(δ_j)` added to each level.
    pub corrections: Vec<f64>,
    /// Constant added to each level to restore pointwise monotonicity.
    pub shifts: Vec<f64>,
    /// `psh_margin` of each level.
    pub margins: Vec<f64>,
    /// Each level at the grid point nearest to the declared singular points.
    pub singular_values: Vec<Vec<f64>>,
    pub floor: f64,
    /// Oversampling factor applied before convolving closed-form inputs.
    pub oversampling: usize,
}

fn oversampling_for(phi0: &RoughPotential, grid: &TorusGrid) -> usize {
    if phi0.as_formula().is_none() {
        return 1;
    }
    [4usize, 2]
        .into_iter()
        .find(|f| {
            TorusGrid::new(grid.n(), grid.resolution() * f)
                .map(|g| g.len() <= MAX_FINE_POINTS)
                .unwrap_or(false)
        })
        .unwrap_or(1)
}

/// `φ_{0,j} = φ_0 ∗ ρ_{δ_j} + m(δ_j)`, repaired to be pointwise non-increasing in `j`.
pub fn mollify_decreasing(
    phi0: &RoughPotential,
    schedule: &RegularizationSchedule,
    grid: TorusGrid,
) -> Result<MollifiedLadder> {
    schedule.check_resolved(&grid)?;
    let factor = oversampling_for(phi0, &grid);
    let fine = TorusGrid::new(grid.n(), grid.resolution() * factor)?;
    let fft = Fft::new(fine);
    let spectrum = fft.forward_real(phi0.sample(fine)?.values());
    let dim = fine.real_dim();
    let k2: Vec<f64> = (0..fine.len())
        .into_par_iter()
        .map(|i| {
            let m = fine.multi_index(i);
            (0..dim)
                .map(|a| (2.0 * PI * fft.wavenumber(m[a]) as f64).powi(2))
                .sum()
        })
        .collect();

    let n = grid.n();
    let mut levels = Vec::with_capacity(schedule.len());
    let mut corrections = Vec::with_capacity(schedule.len());
    for &delta in schedule.radii() {
        let s = 0.25 * delta * delta;
        let filtered: Vec<_> = spectrum
            .par_iter()
            .zip(&k2)
            .map(|(v, k)| v * (-s * k).exp())
            .collect();
        let smooth = ScalarField::new(fine, fft.inverse_real(filtered))?;
        let m = moment_correction(n, delta);
        levels.push(smooth.restrict(grid)?.add_scalar(m));
        corrections.push(m);
    }

    let mut shifts = vec![0.0; levels.len()];
    for j in (0..levels.len().saturating_sub(1)).rev() {
        let gap = levels[j + 1]
            .values()
            .par_iter()
            .zip(levels[j].values())
            .map(|(next, cur)| next - cur)
            .reduce(|| f64::NEG_INFINITY, f64::max);
        if gap > 0.0 {
            let limit = 10.0 * corrections[j];
            if gap > limit {
                return Err(Error::RepairTooLarge {
                    level: j,
                    shift: gap,
                    limit,
                });
            }
            levels[j] = levels[j].add_scalar(gap);
            shifts[j] = gap;
        }
    }

    let margins: Vec<f64> = levels.iter().map(psh_margin).collect();
    if let Some((j, m)) = margins.iter().enumerate().find(|(_, m)| **m < -TOL_PSH) {
        return Err(Error::PreconditionFailed(format!(
            "mollified level {j} (δ = {}) leaves the cone: margin {m}",
            schedule.radii()[j]
        )));
    }
    let singular_values = phi0
        .singular_points()
        .iter()
        .map(|p| {
            let i = grid.nearest_index(p);
            levels.iter().map(|l| l.values()[i]).collect()
        })
        .collect();
    Ok(MollifiedLadder {
        levels,
        radii: schedule.radii().to_vec(),
        corrections,
        shifts,
        margins,
        singular_values,
        floor: phi0.floor(),
        oversampling: factor,
    })
}

#[cfg(test)]
mod tests {
    use super::super::Formula;
    use super::*;

    #[test]
    fn schedule_validation() {
        assert!(RegularizationSchedule::new(vec![0.1, 0.1]).is_err());
        assert!(RegularizationSchedule::new(vec![0.1, -0.05]).is_err());
        let s = RegularizationSchedule::geometric(0.2, 0.5, 4).unwrap();
        assert_eq!(s.radii(), &[0.2, 0.1, 0.05, 0.025]);
        let g = TorusGrid::new(1, 32).unwrap();
        assert!(s.check_resolved(&g).is_err());
        assert!(s.check_resolved(&TorusGrid::new(1, 128).unwrap()).is_ok());
    }

    #[test]
    fn constant_input_gives_moment_corrections() {
        let g = TorusGrid::new(2, 16).unwrap();
        let pot = RoughPotential::formula(Formula::Constant { value: 0.0 }, 2).unwrap();
        let s = RegularizationSchedule::geometric(0.5, 0.5, 3).unwrap();
        let ladder = mollify_decreasing(&pot, &s, g).unwrap();
        for (lvl, d) in ladder.levels.iter().zip(s.radii()) {
            let m = 2.0 * d * d;
            assert!(lvl.values().iter().all(|v| (v - m).abs() < 1e-14));
        }
        assert!(ladder.shifts.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn kink_ladder_is_decreasing_psh_and_converges() {
        let g = TorusGrid::new(1, 512).unwrap();
        let a = 1.0 / (2.0 * PI * PI);
        let pot = RoughPotential::formula(Formula::MaxKink { amplitude: a, level: 0.0 }, 1).unwrap();
        let s = RegularizationSchedule::geometric(0.1, 0.5, 5).unwrap();
        let ladder = mollify_decreasing(&pot, &s, g).unwrap();
        let exact = pot.sample(g).unwrap();
        let mut prev_err = f64::INFINITY;
        for j in 0..ladder.levels.len() {
            assert!(ladder.margins[j] >= -TOL_PSH);
            if j > 0 {
                let lo = &ladder.levels[j];
                let hi = &ladder.levels[j - 1];
                assert!(lo.values().iter().zip(hi.values()).all(|(a, b)| a <= b));
            }
            let err = ladder.levels[j]
                .zip_map(&exact, |x, y| x - y)
                .unwrap();
            assert!(err.inf() >= -1e-12, "level {j} dips below φ_0");
            assert!(err.sup() < prev_err);
            prev_err = err.sup();
        }
        // O(δ) near the kink: the last radius is 0.00625
        assert!(prev_err < 0.01, "{prev_err}");
    }

    #[test]
    fn singular_input_is_bounded_and_monitored() {
        let g = TorusGrid::new(1, 256).unwrap();
        let pot = RoughPotential::formula(Formula::SqrtLogPole { scale: 0.5, center: None }, 1)
            .unwrap();
        let s = RegularizationSchedule::geometric(0.1, 0.5, 4).unwrap();
        let ladder = mollify_decreasing(&pot, &s, g).unwrap();
        assert_eq!(ladder.singular_values.len(), 1);
        let at_pole = &ladder.singular_values[0];
        assert!(at_pole.windows(2).all(|w| w[1] < w[0]));
        assert!(ladder.levels.iter().all(|l| l.sup().is_finite() && l.inf() > pot.floor()));
    }
}

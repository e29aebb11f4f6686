//! ω-plurisubharmonic functions: cone membership, Lelong numbers, regularization, capacity
//! and the Aubin-Yau energy.

mod capacity;
mod mollify;
mod rough;

pub use capacity::{capacity_lower_bound, CapacityDictionary};
pub use mollify::{mollify_decreasing, MollifiedLadder, RegularizationSchedule};
pub use rough::{FourierMode, Formula, Regularity, RoughPotential, DEFAULT_FLOOR};

use crate::error::{Error, Result};
use crate::geometry::{not_kahler, Form};
use crate::torus::{Backend, Differentiator, HermMat, Point, ScalarField, TorusGrid};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Tolerance below which a negative cone margin still counts as ω-psh.
pub const TOL_PSH: f64 = 1e-8;

/// `min_x λ_min(I + H(φ))` with the spectral Hessian.
pub fn psh_margin(phi: &ScalarField) -> f64 {
    psh_margin_with(&Differentiator::new(*phi.grid(), Backend::Spectral), phi)
}

pub fn psh_margin_with(diff: &Differentiator, phi: &ScalarField) -> f64 {
    let id = HermMat::identity(phi.grid().n());
    diff.hessian_values(phi.values())
        .par_iter()
        .map(|h| id.add(h).min_eig())
        .reduce(|| f64::INFINITY, f64::min)
}

pub fn is_psh(phi: &ScalarField) -> bool {
    psh_margin(phi) >= -TOL_PSH
}

/// Ten radii spaced geometrically over `[8h, 80h]`, largest first.
pub fn default_lelong_radii(grid: &TorusGrid) -> Vec<f64> {
    let h = grid.spacing();
    (0..10)
        .map(|k| 80.0 * h * 10f64.powf(-(k as f64) / 9.0))
        .collect()
}

/// Unit directions used for the maximum over a sphere.
fn sphere_directions(n: usize) -> Vec<Point> {
    if n == 1 {
        (0..64)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 64.0;
                [a.cos(), a.sin(), 0.0, 0.0]
            })
            .collect()
    } else {
        let mut dirs = Vec::with_capacity(9 * 16 * 16);
        for e in 0..=8 {
            let eta = 0.5 * PI * e as f64 / 8.0;
            for i in 0..16 {
                let a = 2.0 * PI * i as f64 / 16.0;
                for j in 0..16 {
                    let b = 2.0 * PI * j as f64 / 16.0;
                    dirs.push([
                        eta.cos() * a.cos(),
                        eta.cos() * a.sin(),
                        eta.sin() * b.cos(),
                        eta.sin() * b.sin(),
                    ]);
                }
            }
        }
        dirs
    }
}

/// Least-squares slope of `max_{|z−x|=r} φ` against `log r`, clamped below at zero.
pub fn lelong_estimate(phi: &RoughPotential, x: &Point, radii: &[f64]) -> Result<f64> {
    if radii.len() < 2 {
        return Err(Error::InvalidArgument("at least two radii required".into()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be positive and decreasing".into()));
    }
    if let Some(f) = phi.as_sampled() {
        let h = f.grid().spacing();
        if *radii.last().unwrap() < 2.0 * h {
            return Err(Error::InvalidArgument(format!(
                "smallest radius {} is below two grid spacings",
                radii.last().unwrap()
            )));
        }
    }
    let dirs = sphere_directions(phi.n());
    let dim = 2 * phi.n();
    let mut xs = Vec::with_capacity(radii.len());
    let mut ys = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut best = f64::NEG_INFINITY;
        let mut all_clamped = true;
        for d in &dirs {
            let mut p = *x;
            for a in 0..dim {
                p[a] += r * d[a];
            }
            best = best.max(phi.value(&p));
            all_clamped &= phi.is_clamped(&p);
        }
        if all_clamped {
            return Err(Error::Unresolvable { floor: phi.floor() });
        }
        xs.push(r.ln());
        ys.push(best);
    }
    Ok(least_squares_slope(&xs, &ys).max(0.0))
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `E(φ) = (1/(n+1)) Σ_j ∫ φ (θ + dd^c φ)^j ∧ θ^{n−j}` with unit total volume.
pub fn energy(diff: &Differentiator, theta: &Form, phi: &ScalarField) -> Result<f64> {
    let grid = *diff.grid();
    grid.check_same(phi.grid())?;
    let n = grid.n();
    let hess = diff.hessian_values(phi.values());
    let terms: Vec<std::result::Result<f64, (usize, f64)>> = hess
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            let t = theta.at(i);
            let w = t.add(h);
            let m = w.min_eig();
            if m < -TOL_PSH {
                return Err((i, m));
            }
            let sum: f64 = (0..=n)
                .map(|j| HermMat::mixed(&w, &t, j).expect("j ≤ n"))
                .sum();
            Ok(phi.values()[i] * sum)
        })
        .collect();
    let mut vals = Vec::with_capacity(terms.len());
    for t in terms {
        match t {
            Ok(v) => vals.push(v),
            Err((i, m)) => return Err(not_kahler(&grid, i, m)),
        }
    }
    Ok(crate::torus::mean(&vals) / (n + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_examples() {
        let g = TorusGrid::new(1, 32).unwrap();
        assert_eq!(psh_margin(&ScalarField::zeros(g)), 1.0);
        let a = 0.05;
        let phi = ScalarField::from_fn(g, |p| a * (2.0 * PI * p[0]).cos()).unwrap();
        assert!((psh_margin(&phi) - (1.0 - a * PI * PI)).abs() < 1e-12);
        let phi = ScalarField::from_fn(g, |p| 2.0 / (PI * PI) * (2.0 * PI * p[0]).cos()).unwrap();
        assert!((psh_margin(&phi) + 1.0).abs() < 1e-12);
        assert!(!is_psh(&phi));
    }

    #[test]
    fn energy_examples() {
        let g = TorusGrid::new(2, 8).unwrap();
        let d = Differentiator::new(g, Backend::Spectral);
        let id = Form::Uniform(HermMat::identity(2));
        let e = energy(&d, &id, &ScalarField::constant(g, 0.7)).unwrap();
        assert!((e - 0.7).abs() < 1e-14);

        let g = TorusGrid::new(1, 32).unwrap();
        let d = Differentiator::new(g, Backend::Spectral);
        let id = Form::Uniform(HermMat::identity(1));
        let a = 0.08;
        let phi = ScalarField::from_fn(g, |p| a * (2.0 * PI * p[0]).cos()).unwrap();
        let e = energy(&d, &id, &phi).unwrap();
        // ½ ∫ φ (2 + ¼Δφ) = ½ · (−π² a²) · ½
        assert!((e + a * a * PI * PI / 4.0).abs() < 1e-14);
    }

    #[test]
    fn energy_rejects_cone_exit() {
        let g = TorusGrid::new(1, 16).unwrap();
        let d = Differentiator::new(g, Backend::Spectral);
        let id = Form::Uniform(HermMat::identity(1));
        let phi = ScalarField::from_fn(g, |p| 0.3 * (2.0 * PI * p[0]).cos()).unwrap();
        assert!(matches!(energy(&d, &id, &phi), Err(Error::NotKahler { .. })));
    }

    #[test]
    fn lelong_of_smooth_and_pole() {
        let g = TorusGrid::new(1, 512).unwrap();
        let radii = default_lelong_radii(&g);
        let smooth = RoughPotential::formula(
            Formula::FourierSum {
                modes: vec![FourierMode { wavevector: vec![1, 2], amplitude: 0.02, phase: 0.3 }],
            },
            1,
        )
        .unwrap();
        let x = [0.3, 0.6, 0.0, 0.0];
        assert!(lelong_estimate(&smooth, &x, &radii).unwrap() < 0.05);

        let gamma = 0.3;
        let pole = RoughPotential::formula(Formula::LogPole { gamma, center: None }, 1).unwrap();
        let est = lelong_estimate(&pole, &pole.center(), &radii).unwrap();
        assert!((est - gamma).abs() < 0.05 * gamma, "{est}");

    }

    #[test]
    fn lelong_of_sqrt_log_pole_decays_like_its_model() {
        // the slope of −(−log r)^{1/2} against log r is 1/(2√(−log r)): zero Lelong number,
        // but only logarithmically slowly visible
        let scale = 0.8;
        let sqrt = RoughPotential::formula(Formula::SqrtLogPole { scale, center: None }, 1)
            .unwrap();
        let mut prev = f64::INFINITY;
        for top in [1e-1f64, 1e-3, 1e-5, 1e-8] {
            let radii: Vec<f64> = (0..10).map(|k| top * 10f64.powf(-(k as f64) / 9.0)).collect();
            let est = lelong_estimate(&sqrt, &sqrt.center(), &radii).unwrap();
            let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
            let ys: Vec<f64> = radii.iter().map(|r| -scale * (-r.ln()).sqrt()).collect();
            assert!((est - least_squares_slope(&xs, &ys)).abs() < 1e-6);
            assert!(est < prev);
            prev = est;
        }
        assert!(prev < 0.1);
    }

    #[test]
    fn lelong_unresolvable_at_floor() {
        let pole = RoughPotential::formula(Formula::LogPole { gamma: 0.3, center: None }, 1)
            .unwrap()
            .with_floor(-0.1);
        let radii = [1e-2, 1e-3];
        assert!(matches!(
            lelong_estimate(&pole, &pole.center(), &radii),
            Err(Error::Unresolvable { .. })
        ));
    }
}

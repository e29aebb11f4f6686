//! Certified lower bounds for the Monge-Ampère capacity
//! `Cap_ω(K) = sup{∫_K (ω + dd^c ψ)ⁿ : ψ ω-psh, 0 ≤ ψ ≤ 1}`.

use super::{psh_margin_with, TOL_PSH};
use crate::error::{Error, Result};
use crate::torus::{mean, Backend, Differentiator, HermMat, ScalarField, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Keeps candidates strictly inside the cone after scaling to its boundary.
const SAFETY: f64 = 1.0 - 1e-12;

/// A deterministic family of certified test functions and their Monge-Ampère densities.
///
/// Candidate 0 is the constant `½`; odd candidates are scaled Fourier modes and even ones
/// scaled smooth periodic bumps. The list for a smaller size is always a prefix of the list
/// for a larger one, so bounds are monotone in the dictionary size.
#[derive(Debug, Clone)]
pub struct CapacityDictionary {
    grid: TorusGrid,
    seed: u64,
    densities: Vec<ScalarField>,
}

impl CapacityDictionary {
    pub fn new(grid: TorusGrid, size: usize, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("dictionary must not be empty".into()));
        }
        let diff = Differentiator::new(grid, Backend::Spectral);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut densities = vec![ScalarField::constant(grid, 1.0)];
        let dim = grid.real_dim();
        let h = grid.spacing();
        while densities.len() < size {
            let raw = if densities.len() % 2 == 1 {
                let mut k = [0i64; 4];
                while k[..dim].iter().all(|&v| v == 0) {
                    for v in k[..dim].iter_mut() {
                        *v = rng.gen_range(-2..=2);
                    }
                }
                let shift: f64 = rng.gen();
                ScalarField::from_fn(grid, |p| {
                    let arg: f64 = (0..dim).map(|a| k[a] as f64 * p[a]).sum();
                    (2.0 * PI * (arg - shift)).cos()
                })?
            } else {
                let mut c = [0.0; 4];
                for v in c[..dim].iter_mut() {
                    *v = rng.gen();
                }
                let w = rng.gen_range((3.0 * h).max(0.02)..0.2);
                let scale = 1.0 / (2.0 * PI * PI * w * w);
                ScalarField::from_fn(grid, |p| {
                    let e: f64 = (0..dim)
                        .map(|a| (2.0 * PI * (p[a] - c[a])).cos() - 1.0)
                        .sum();
                    -(scale * e).exp()
                })?
            };
            let hess = diff.hessian_values(raw.values());
            let lowest = hess
                .par_iter()
                .map(HermMat::min_eig)
                .reduce(|| f64::INFINITY, f64::min);
            let span = raw.osc();
            let mut s = if span > 0.0 { 1.0 / span } else { 1.0 };
            if lowest < 0.0 {
                s = s.min(-1.0 / lowest);
            }
            s *= SAFETY;
            let lo = raw.inf();
            let psi = raw.map(|v| s * (v - lo));
            if psh_margin_with(&diff, &psi) < -TOL_PSH || psi.sup() > 1.0 || psi.inf() < 0.0 {
                continue;
            }
            let id = HermMat::identity(grid.n());
            let dens: Vec<f64> = hess
                .par_iter()
                .map(|m| id.add(&m.scale(s)).det().max(0.0))
                .collect();
            densities.push(ScalarField::new(grid, dens)?);
        }
        Ok(Self { grid, seed, densities })
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `max_ψ ∫_K (ω + dd^c ψ)ⁿ` over the first `size` candidates.
    pub fn bound(&self, indicator: &ScalarField, size: usize) -> Result<f64> {
        self.grid.check_same(indicator.grid())?;
        if let Some(v) = indicator.values().iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "indicator takes the value {v}, expected 0 or 1"
            )));
        }
        Ok(self.densities[..size.min(self.len())]
            .iter()
            .map(|d| {
                let masked: Vec<f64> = d
                    .values()
                    .iter()
                    .zip(indicator.values())
                    .map(|(x, k)| x * k)
                    .collect();
                mean(&masked)
            })
            .fold(0.0, f64::max))
    }
}

/// Certified lower bound of `Cap_ω(K)` from a seeded dictionary of `dictionary_size` candidates.
pub fn capacity_lower_bound(indicator: &ScalarField, dictionary_size: usize, seed: u64) -> Result<f64> {
    CapacityDictionary::new(*indicator.grid(), dictionary_size, seed)?
        .bound(indicator, dictionary_size)
}

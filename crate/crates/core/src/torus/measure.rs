use super::{mean, torus_distance, ScalarField};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldNorms {
    pub sup: f64,
    pub inf: f64,
    /// `∫ |φ|` over the unit-volume torus.
    pub l1: f64,
    pub osc: f64,
}

pub fn norms(phi: &ScalarField) -> FieldNorms {
    let sup = phi.sup();
    let inf = phi.inf();
    let abs: Vec<f64> = phi.values().iter().map(|v| v.abs()).collect();
    FieldNorms {
        sup,
        inf,
        l1: mean(&abs),
        osc: sup - inf,
    }
}

/// Discrete parabolic Hölder seminorm `max |f(X) − f(Y)| / ρ(X, Y)^α` with
/// `ρ((x,t),(x',t')) = |x − x'| + |t − t'|^{1/2}` (torus distance in space).
///
/// Points are subsampled with a fixed stride so that each snapshot contributes at most
/// `points_per_snapshot` samples; identical space-time points are skipped.
pub fn parabolic_holder_seminorm(
    snapshots: &[(f64, &ScalarField)],
    alpha: f64,
    points_per_snapshot: usize,
) -> Result<f64> {
    if snapshots.len() < 2 {
        return Err(Error::InvalidArgument(
            "at least two snapshots are required".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let grid = *snapshots[0].1.grid();
    for (_, f) in snapshots {
        grid.check_same(f.grid())?;
    }
    let stride = grid.len().div_ceil(points_per_snapshot.max(1));
    let samples: Vec<(f64, [f64; 4], f64)> = snapshots
        .iter()
        .flat_map(|&(t, f)| {
            (0..grid.len())
                .step_by(stride)
                .map(move |i| (t, grid.point(i), f.values()[i]))
        })
        .collect();
    let dim = grid.real_dim();
    let mut best = 0.0f64;
    for (a, sa) in samples.iter().enumerate() {
        for sb in &samples[a + 1..] {
            let rho = torus_distance(&sa.1[..dim], &sb.1[..dim]) + (sa.0 - sb.0).abs().sqrt();
            if rho == 0.0 {
                continue;
            }
            best = best.max((sa.2 - sb.2).abs() / rho.powf(alpha));
        }
    }
    Ok(best)
}

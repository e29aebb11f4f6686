use super::{comparison_tolerance, Location, MarginReport};
use crate::error::{Error, Result};
use crate::flow::{CascadeResult, FlowTrajectory, Problem};
use crate::psh::{energy, CapacityDictionary, Regularity};
use crate::torus::ScalarField;

const CAPACITY_DICTIONARY: usize = 32;
/// Default seed of the capacity dictionary.
pub const CAPACITY_SEED: u64 = 0x5eed;
/// Level of the sets `{|φ_t − φ_0| > ε}` whose capacity is tracked, relative to `Osc φ_0`.
const CAPACITY_LEVEL: f64 = 0.05;

/// Fields approximating the limit flow at a set of times, with the data they started from.
#[derive(Debug, Clone)]
pub struct ConvergenceInput {
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
    pub initial: ScalarField,
    pub regularity: Regularity,
    /// Seed of the capacity dictionary.
    pub seed: u64,
}

impl ConvergenceInput {
    pub fn from_cascade(cascade: &CascadeResult, regularity: Regularity) -> Self {
        Self {
            times: cascade.times.clone(),
            fields: cascade.limits.clone(),
            initial: cascade.initial.clone(),
            regularity,
            seed: CAPACITY_SEED,
        }
    }

    pub fn from_trajectory(traj: &FlowTrajectory, initial: ScalarField, regularity: Regularity) -> Self {
        Self {
            times: traj.times(),
            fields: traj.snapshots.iter().map(|s| s.phi.clone()).collect(),
            initial,
            regularity,
            seed: CAPACITY_SEED,
        }
    }

    fn at(&self, t: f64) -> Option<&ScalarField> {
        self.times
            .iter()
            .position(|s| (s - t).abs() <= 1e-12 * t.abs().max(1e-300))
            .map(|k| &self.fields[k])
    }
}

/// Largest increase `d_{m+1} − d_m − tol` over the second half of the ladder (the smallest
/// times); `≤ 0` means the sequence is eventually non-increasing.
fn eventual_increase(d: &[f64], tol: f64) -> (f64, usize) {
    let start = d.len() / 2;
    let mut worst = (f64::NEG_INFINITY, start);
    for m in start..d.len().saturating_sub(1) {
        let v = d[m + 1] - d[m] - tol;
        if v > worst.0 {
            worst = (v, m + 1);
        }
    }
    worst
}

fn ladder_report(
    check: &str,
    anchor: &str,
    ts: &[f64],
    d: &[f64],
    tol: f64,
    final_cap: Option<f64>,
) -> MarginReport {
    let (v, m) = eventual_increase(d, tol);
    let last = d.len() - 1;
    let mut margin = 0.0 - v.max(0.0);
    let mut at = m;
    if let Some(cap) = final_cap {
        if cap - d[last] < margin {
            margin = cap - d[last];
            at = last;
        }
    }
    let mut r = MarginReport::new(check, anchor, margin, Location::time(ts[at]))
        .with_constant("final", d[last])
        .with_constant("tolerance", tol);
    if let Some(cap) = final_cap {
        r = r.with_constant("final_bound", cap);
    }
    for (k, (t, x)) in ts.iter().zip(d).enumerate() {
        r = r.with_constant(&format!("t_{k}"), *t).with_constant(&format!("d_{k}"), *x);
    }
    r
}

/// Distances of the limit flow to its initial data along `t_m = t0·2^{−m}`, `m = 0..=m_max`,
/// in every mode the regularity of `φ_0` supports.
///
/// L¹ must end below `rel_tol·Osc φ_0`; all modes must be eventually non-increasing. The
/// energy mode is skipped when `φ_0` is not θ_0-psh on the grid.
pub fn check_convergence_modes(
    input: &ConvergenceInput,
    problem: &Problem,
    t0: f64,
    m_max: usize,
    rel_tol: f64,
) -> Result<Vec<MarginReport>> {
    let grid = *problem.grid();
    grid.check_same(input.initial.grid())?;
    let ts: Vec<f64> = (0..=m_max).map(|m| t0 * 0.5f64.powi(m as i32)).collect();
    let missing: Vec<(f64, f64)> = ts.iter().filter(|t| input.at(**t).is_none()).map(|t| (0.0, *t)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingTimes(missing));
    }
    let fields: Vec<&ScalarField> = ts.iter().map(|t| input.at(*t).expect("checked")).collect();
    let phi0 = &input.initial;
    let osc = phi0.osc();
    let tol = comparison_tolerance(&grid, problem.diff.backend(), osc);
    let diffs: Vec<Vec<f64>> = fields
        .iter()
        .map(|f| f.values().iter().zip(phi0.values()).map(|(a, b)| (a - b).abs()).collect())
        .collect();

    let mut out = Vec::new();
    let l1: Vec<f64> = diffs.iter().map(|d| crate::torus::mean(d)).collect();
    out.push(ladder_report(
        "convergence-l1",
        "L¹ convergence: ‖φ_t − φ_0‖_{L¹} decreases to 0 as t → 0",
        &ts,
        &l1,
        tol,
        Some(rel_tol * osc),
    ));

    if matches!(input.regularity, Regularity::Smooth | Regularity::Lipschitz) {
        let sup: Vec<f64> = diffs.iter().map(|d| d.iter().copied().fold(0.0, f64::max)).collect();
        let cap = (input.regularity == Regularity::Smooth).then_some(rel_tol * osc);
        out.push(ladder_report(
            "convergence-sup",
            "uniform convergence: sup|φ_t − φ_0| decreases to 0 as t → 0",
            &ts,
            &sup,
            tol,
            cap,
        ));
    }

    if input.regularity == Regularity::Bounded {
        let dict = CapacityDictionary::new(grid, CAPACITY_DICTIONARY, input.seed)?;
        let level = CAPACITY_LEVEL * osc;
        let caps = diffs
            .iter()
            .map(|d| {
                let ind = ScalarField::new(grid, d.iter().map(|x| if *x > level { 1.0 } else { 0.0 }).collect())?;
                dict.bound(&ind, CAPACITY_DICTIONARY)
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(
            ladder_report(
                "convergence-capacity",
                "convergence in capacity: Cap{|φ_t − φ_0| > ε} decreases to 0 as t → 0",
                &ts,
                &caps,
                1e-12,
                None,
            )
            .with_constant("level", level)
            .with_note("capacities are certified lower bounds from a seeded dictionary"),
        );
    }

    if let Ok(e0) = energy(&problem.diff, &problem.path.theta(0.0), phi0) {
        let es = ts
            .iter()
            .zip(&fields)
            .map(|(t, f)| Ok((energy(&problem.diff, &problem.path.theta(*t), f)? - e0).abs()))
            .collect::<Result<Vec<f64>>>()?;
        out.push(
            ladder_report(
                "convergence-energy",
                "convergence in energy: |E(φ_t) − E(φ_0)| decreases to 0 as t → 0",
                &ts,
                &es,
                1e-12,
                None,
            )
            .with_constant("E0", e0),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run, DrivingTerm, FlowConfig};
    use crate::torus::{Backend, TorusGrid};
    use std::f64::consts::PI;

    #[test]
    fn single_mode_converges_in_every_mode() {
        let g = TorusGrid::new(1, 16).unwrap();
        let p = Problem::flat(g, Backend::Spectral, DrivingTerm::Zero, 0.1).unwrap();
        let a = 1e-2;
        let phi0 = ScalarField::from_fn(g, |x| a * (2.0 * PI * x[0]).cos()).unwrap();
        let cfg = FlowConfig {
            horizon: 0.1,
            t_min: 0.1 / 128.0,
            ratio: 2f64.sqrt(),
            backend: Backend::Spectral,
            ..FlowConfig::default()
        };
        let t = run(&p, &phi0, &cfg).unwrap();
        let input = ConvergenceInput::from_trajectory(&t, phi0.clone(), Regularity::Smooth);
        let r = check_convergence_modes(&input, &p, 0.1, 7, 1e-1).unwrap();
        let names: Vec<&str> = r.iter().map(|m| m.check.as_str()).collect();
        assert_eq!(names, ["convergence-l1", "convergence-sup", "convergence-energy"]);
        assert!(r.iter().all(|m| m.passed), "{r:#?}");
        // |E(φ_t) − E(φ_0)| ≈ a²π²(1 − e^{−2π²t})/8 in the linear regime
        let e = &r[2];
        let t0 = e.constant("t_0").unwrap();
        let want = a * a * PI * PI * (1.0 - (-2.0 * PI * PI * t0).exp()) / 8.0;
        assert!((e.constant("d_0").unwrap() - want).abs() < 0.05 * want);
        assert!(matches!(
            check_convergence_modes(&input, &p, 0.1, 9, 1e-1),
            Err(Error::MissingTimes(_))
        ));
    }
}

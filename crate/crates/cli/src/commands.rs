//! The subcommands, as library functions so tests can drive them without a process.

use crate::config::{ReductionDecl, RunConfig};
use crate::report;
use anyhow::{anyhow, bail, Context, Result};
use cmaf_core::archive::{add_member, read_archive, write_archive, write_manifest, Archive, ArchiveInfo, Manifest};
use cmaf_core::flow::{
    monotone_reduction, run, run_cascade, CascadeResult, run_nef, uniqueness_rescale, FlowConfig, FlowTrajectory,
    Problem, Reduction,
};
use cmaf_core::geometry::{MetricPath, PathKind};
use cmaf_core::psh::{mollify_decreasing, RegularizationSchedule, RoughPotential};
use cmaf_core::torus::{write_snapshot, ScalarField};
use cmaf_core::verify::{self, ConvergenceInput, MarginReport};
use serde_json::json;
use std::path::{Path, PathBuf};

pub const NO_UNIQUENESS: &str = "NO-UNIQUENESS-CERTIFICATE: the driving term is not smooth in s, \
     so solutions from these data need not be unique and this trajectory is one of several";

/// The equation actually integrated: the configured one, or its rescaling when a reduction is
/// declared.
pub struct Setup {
    pub original: Problem,
    pub problem: Problem,
    pub flow: FlowConfig,
    pub reduction: Option<Reduction>,
    pub potential: RoughPotential,
    pub initial: ScalarField,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let original = cfg.problem()?;
        let potential = cfg.initial_potential()?;
        let initial = potential.sample(cfg.torus())?;
        let s_range = (initial.inf() - 1.0, initial.sup() + 1.0);
        let reduction = match &cfg.reduction {
            None => None,
            Some(ReductionDecl::Monotone { b }) => {
                Some(monotone_reduction(&original.driving, &original.path, *b, s_range)?)
            }
            Some(ReductionDecl::Uniqueness { a }) => {
                Some(uniqueness_rescale(&original.driving, &original.path, *a, s_range)?)
            }
        };
        let (problem, mut flow) = match &reduction {
            None => (original.clone(), cfg.flow.clone()),
            Some(r) => (r.apply(&original), FlowConfig { horizon: r.horizon, ..cfg.flow.clone() }),
        };
        if cfg.checks.iter().any(|c| c == "convergence") {
            let o = &cfg.check_options;
            let ladder = (0..=o.m_max).map(|m| o.t0 * 0.5f64.powi(m as i32));
            flow.probe_times.extend(ladder.filter(|t| *t <= flow.horizon));
        }
        Ok(Self { original, problem, flow, reduction, potential, initial })
    }
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub reports: Vec<MarginReport>,
}

impl RunOutput {
    pub fn failed(&self) -> usize {
        self.reports.iter().filter(|r| !r.passed).count()
    }
}

fn member_info(hash: &str, label: String) -> ArchiveInfo {
    ArchiveInfo { config_hash: hash.to_string(), label, ..ArchiveInfo::default() }
}

/// Integrates the configured scenario, writes its archive into `out` and runs the configured
/// checks.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<RunOutput> {
    let hash = cfg.hash();
    let setup = Setup::new(cfg)?;
    let mut notices = Vec::new();
    if !setup.original.driving.is_smooth() {
        notices.push(NO_UNIQUENESS.to_string());
    }
    let mut extra = json!({ "config": cfg });
    let mut members: Vec<(String, FlowTrajectory)> = Vec::new();
    let mut initial_potential = None;
    let mut cascade = None;
    let mut checked_problem = setup.problem.clone();

    let main = if let Some(nef) = &cfg.nef {
        let PathKind::Nef { theta0, .. } = setup.problem.path.kind() else {
            bail!("a shift family needs a nef metric");
        };
        let result = run_nef(&setup.problem, *theta0, &nef.eps, &setup.initial, &setup.flow, nef.rel_tol)?;
        extra["nef"] = json!({
            "eps": result.eps,
            "monotonicity": result.monotonicity,
            "limit_gap": result.limit_gap,
            "witness_margin": result.witness_margin,
        });
        for (k, t) in result.trajectories.iter().enumerate() {
            members.push((format!("eps_{k:02}"), t.clone()));
        }
        if let Some(w) = &result.witness {
            members.push(("witness".into(), w.clone()));
        }
        let last = *nef.eps.last().expect("validated non-empty");
        let path = MetricPath::new(PathKind::Nef { theta0: *theta0, shift: last }, setup.flow.horizon)?;
        checked_problem = setup.problem.with_path(path);
        result.trajectories.last().expect("non-empty family").clone()
    } else if let Some(c) = &cfg.cascade {
        let schedule = RegularizationSchedule::new(c.radii.clone())?;
        let result = run_cascade(&setup.problem, &setup.potential, &schedule, &setup.flow, c.rel_tol)?;
        extra["cascade"] = json!({
            "radii": result.ladder.radii,
            "corrections": result.ladder.corrections,
            "shifts": result.ladder.shifts,
            "times": result.times,
            "limit_gaps": result.limit_gaps,
            "monotonicity": result.monotonicity,
        });
        initial_potential = Some(result.initial.clone());
        for (k, t) in result.levels.iter().enumerate() {
            members.push((format!("level_{k:02}"), t.clone()));
        }
        let last = result.levels.last().expect("non-empty ladder").clone();
        cascade = Some(result);
        last
    } else {
        if !setup.potential.regularity().is_bounded() {
            bail!("unbounded initial data needs a cascade declaration");
        }
        let traj = run(&setup.problem, &setup.initial, &setup.flow)?;
        if let Some(r) = &setup.reduction {
            let residual = if setup.flow.record_times.is_none() {
                Some(r.transform.pulled_back_residual(&setup.original, &traj)?)
            } else {
                None
            };
            extra["reduction"] = json!({
                "rate": r.transform.rate,
                "horizon": r.horizon,
                "constant": r.constant,
                "certificate": r.certificate,
                "pulled_back_residual": residual,
            });
        }
        traj
    };

    let info = ArchiveInfo {
        config_hash: hash.clone(),
        label: cfg.label.clone(),
        initial_potential: initial_potential.clone(),
        notices: notices.clone(),
        extra,
    };
    write_archive(out, &main, &info)?;
    for (name, traj) in &members {
        add_member(out, name, traj, &member_info(&hash, format!("{} {name}", cfg.label)))?;
    }

    let initial = initial_potential.unwrap_or_else(|| main.initial().clone());
    let partner = if cfg.checks.iter().any(|c| c == "comparison" || c == "contraction") {
        let p = cfg.partner_potential()?.sample(cfg.torus())?;
        let t = run(&setup.problem, &p, &setup.flow)?;
        add_member(out, "partner", &t, &member_info(&hash, format!("{} partner", cfg.label)))?;
        Some(t)
    } else {
        None
    };
    let ctx = CheckContext {
        cfg,
        setup: &setup,
        problem: &checked_problem,
        traj: &main,
        cascade: cascade.as_ref(),
        initial: &initial,
        partner: partner.as_ref(),
    };
    let reports = run_checks(&ctx, &cfg.checks)?;
    if !reports.is_empty() {
        report::write_reports(out, &hash, &reports)?;
    }
    let mut manifest = cmaf_core::archive::read_manifest(out)?;
    if !reports.is_empty() {
        manifest.extra["reports"] = json!({ "passed": reports.iter().all(|r| r.passed), "count": reports.len() });
        write_manifest(out, &manifest)?;
    }
    Ok(RunOutput { dir: out.to_path_buf(), manifest, reports })
}

pub struct CheckContext<'a> {
    pub cfg: &'a RunConfig,
    pub setup: &'a Setup,
    /// The equation `traj` solves; differs from `setup.problem` for members of a shift family.
    pub problem: &'a Problem,
    pub traj: &'a FlowTrajectory,
    /// Cascade limits, when the run was a cascade; convergence is judged on them.
    pub cascade: Option<&'a CascadeResult>,
    /// The data the trajectory approximates (the rough sample for cascades).
    pub initial: &'a ScalarField,
    pub partner: Option<&'a FlowTrajectory>,
}

fn first_step(traj: &FlowTrajectory) -> f64 {
    traj.schedule.times().get(1).copied().unwrap_or(traj.schedule.end())
}

pub fn run_checks(ctx: &CheckContext, names: &[String]) -> Result<Vec<MarginReport>> {
    let opts = &ctx.cfg.check_options;
    let problem = ctx.problem;
    let traj = ctx.traj;
    let partner = || ctx.partner.ok_or_else(|| anyhow!("this check needs a second trajectory"));
    let mut out = Vec::new();
    for name in names {
        let reports = match name.as_str() {
            "apriori" => verify::check_apriori_bounds(traj, ctx.initial, &problem.driving, &problem.path, &problem.omega)?,
            "time-derivative" => {
                verify::check_time_derivative(traj, opts.eps.unwrap_or_else(|| first_step(traj)), opts.window)?
            }
            "gradient-laplacian" => verify::check_gradient_laplacian(traj)?,
            "energy" => vec![verify::check_energy_monotonicity(traj)?],
            "residual" => vec![verify::check_residuals(problem, traj)?],
            "convergence" => {
                let regularity = ctx.setup.potential.regularity();
                let mut input = match ctx.cascade {
                    Some(c) => ConvergenceInput::from_cascade(c, regularity),
                    None => ConvergenceInput::from_trajectory(traj, ctx.initial.clone(), regularity),
                };
                input.seed = ctx.cfg.seed;
                verify::check_convergence_modes(&input, problem, opts.t0, opts.m_max, opts.rel_tol)?
            }
            "comparison" => vec![verify::check_comparison(traj, partner()?, opts.lambda)?],
            "contraction" => vec![verify::check_contraction(traj, partner()?)?],
            "stability" => {
                let other = match ctx.partner {
                    Some(p) => p.initial().clone(),
                    None => ctx.cfg.partner_potential()?.sample(ctx.cfg.torus())?,
                };
                traj.grid.check_same(other.grid())?;
                verify::check_stability(
                    problem,
                    traj.initial(),
                    &other,
                    &ctx.setup.flow,
                    opts.homotopy_samples,
                    opts.stability_eps.unwrap_or_else(|| first_step(traj)),
                )?
            }
            "uniqueness" => {
                verify::uniqueness_preconditions(problem)?;
                let first = ctx
                    .cfg
                    .cascade
                    .as_ref()
                    .map(|c| c.radii.clone())
                    .ok_or_else(|| anyhow!("uniqueness needs a cascade declaration"))?;
                let second = opts
                    .second_radii
                    .clone()
                    .ok_or_else(|| anyhow!("uniqueness needs check_options.second_radii"))?;
                let a = RegularizationSchedule::new(first)?;
                let b = RegularizationSchedule::new(second)?;
                vec![verify::check_uniqueness(problem, &ctx.setup.potential, &ctx.setup.flow, [&a, &b], opts.rate)?]
            }
            other => bail!("unknown check {other:?}"),
        };
        out.extend(reports);
    }
    Ok(out)
}

fn archive_config(archive: &Archive) -> Result<RunConfig> {
    let v = archive
        .manifest
        .extra
        .get("config")
        .ok_or_else(|| anyhow!("{}: archive carries no configuration; pass --config", archive.dir.display()))?;
    Ok(serde_json::from_value(v.clone())?)
}

/// Runs `checks` over stored archives. Pair checks use the second archive as partner.
pub fn cmd_verify(
    archives: &[PathBuf],
    checks: &[String],
    config: Option<&RunConfig>,
    out: Option<&Path>,
) -> Result<(Vec<MarginReport>, PathBuf)> {
    let first = archives.first().ok_or_else(|| anyhow!("no archive given"))?;
    let loaded = archives
        .iter()
        .map(|p| read_archive(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let cfg = match config {
        Some(c) => c.clone(),
        None => archive_config(&loaded[0])?,
    };
    for c in checks {
        if !crate::config::CHECKS.contains(&c.as_str()) {
            bail!("unknown check {c:?}; expected one of {:?}", crate::config::CHECKS);
        }
    }
    let setup = Setup::new(&cfg)?;
    let main = &loaded[0];
    let partner = loaded.get(1).map(|a| &a.trajectory);
    let ctx = CheckContext {
        cfg: &cfg,
        setup: &setup,
        problem: &setup.problem,
        traj: &main.trajectory,
        cascade: None,
        initial: main.initial(),
        partner,
    };
    let reports = run_checks(&ctx, checks)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| first.join("reports"));
    report::write_reports(&dir, &main.manifest.config_hash, &reports)?;
    Ok((reports, dir))
}

/// Quantities `cmd_series` can extract.
pub const QUANTITIES: &[&str] = &[
    "sup", "inf", "osc", "min-phidot", "max-phidot", "sup-trace", "sup-grad-sq", "energy", "l1",
    "sup-distance", "residual", "positivity", "newton-iters",
];

/// `(t, value)` per recorded step.
pub fn series(archive: &Archive, quantity: &str) -> Result<Vec<(f64, f64)>> {
    let pick: fn(&cmaf_core::flow::StepDiagnostics) -> f64 = match quantity {
        "sup" => |d| d.sup,
        "inf" => |d| d.inf,
        "osc" => |d| d.osc,
        "min-phidot" => |d| d.min_phidot,
        "max-phidot" => |d| d.max_phidot,
        "sup-trace" => |d| d.sup_trace,
        "sup-grad-sq" => |d| d.sup_grad_sq,
        "energy" => |d| d.energy,
        "l1" => |d| d.l1_to_initial,
        "sup-distance" => |d| d.sup_to_initial,
        "residual" => |d| d.residual,
        "positivity" => |d| d.positivity_margin,
        "newton-iters" => |d| d.newton_iters as f64,
        other => bail!("unknown quantity {other:?}; expected one of {QUANTITIES:?}"),
    };
    Ok(archive.trajectory.diagnostics.iter().map(|d| (d.t, pick(d))).collect())
}

pub fn cmd_series(dir: &Path, member: Option<&str>, quantity: &str, out: &mut dyn std::io::Write) -> Result<()> {
    let mut archive = read_archive(dir)?;
    if let Some(m) = member {
        archive = archive.member(m)?;
    }
    let rows = series(&archive, quantity)?;
    report::write_series(out, &rows)
}

/// Writes the mollification ladder of the configured initial data.
pub fn cmd_regularize(cfg: &RunConfig, out: &Path) -> Result<serde_json::Value> {
    let c = cfg
        .cascade
        .as_ref()
        .ok_or_else(|| anyhow!("regularize needs a cascade declaration"))?;
    let schedule = RegularizationSchedule::new(c.radii.clone())?;
    let ladder = mollify_decreasing(&cfg.initial_potential()?, &schedule, cfg.torus())?;
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for (k, level) in ladder.levels.iter().enumerate() {
        let name = format!("level_{k:02}.f64");
        write_snapshot(&out.join(&name), level, 0.0, &format!("level {k}"))?;
        files.push(name);
    }
    let summary = json!({
        "config_hash": cfg.hash(),
        "radii": ladder.radii,
        "corrections": ladder.corrections,
        "shifts": ladder.shifts,
        "psh_margins": ladder.margins,
        "floor": ladder.floor,
        "oversampling": ladder.oversampling,
        "levels": files,
    });
    std::fs::write(out.join("ladder.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}

/// Default output directory: the config's `out`, else `out/<label>`.
pub fn default_out(cfg: &RunConfig, config_path: &Path) -> PathBuf {
    if let Some(o) = &cfg.out {
        return o.clone();
    }
    let stem = if cfg.label.is_empty() {
        config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string()
    } else {
        cfg.label.clone()
    };
    PathBuf::from("out").join(stem)
}

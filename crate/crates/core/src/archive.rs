//! Trajectory archives: one directory holding binary snapshot files and a JSON manifest with
//! the configuration hash, the schedule and the per-step diagnostics.
//!
//! Related trajectories (cascade levels, ε-families) are stored as member archives in
//! subdirectories and listed in the parent manifest.

use crate::error::{Error, Result};
use crate::flow::{FlowTrajectory, Snapshot, StepDiagnostics, StepSchedule};
use crate::torus::{read_snapshot, write_snapshot, Backend, ScalarField, TorusGrid};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    #[serde(with = "crate::serde_float")]
    pub t: f64,
    pub phi: String,
    pub phidot: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub name: String,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub label: String,
    pub n: usize,
    pub resolution: usize,
    pub backend: Backend,
    pub schedule: StepSchedule,
    pub snapshots: Vec<SnapshotEntry>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Sampled initial potential when it differs from the first snapshot (rough starts).
    pub initial_potential: Option<String>,
    pub members: Vec<MemberEntry>,
    /// Human-readable notices, e.g. a withheld uniqueness certificate.
    pub notices: Vec<String>,
    /// Free-form reports attached by the caller (cascade or ε-family summaries, the config).
    pub extra: serde_json::Value,
}

/// Everything besides the trajectory itself that goes into a manifest.
#[derive(Debug, Clone, Default)]
pub struct ArchiveInfo {
    pub config_hash: String,
    pub label: String,
    pub initial_potential: Option<ScalarField>,
    pub notices: Vec<String>,
    pub extra: serde_json::Value,
}

fn snapshot_name(kind: &str, k: usize) -> String {
    format!("{kind}_{k:05}.f64")
}

/// Writes `traj` into `dir` (created if missing) and returns the manifest.
pub fn write_archive(dir: &Path, traj: &FlowTrajectory, info: &ArchiveInfo) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(traj.snapshots.len());
    for (k, s) in traj.snapshots.iter().enumerate() {
        let phi = snapshot_name("phi", k);
        write_snapshot(&dir.join(&phi), &s.phi, s.t, "phi")?;
        let phidot = match &s.phidot {
            Some(d) => {
                let name = snapshot_name("phidot", k);
                write_snapshot(&dir.join(&name), d, s.t, "phidot")?;
                Some(name)
            }
            None => None,
        };
        entries.push(SnapshotEntry { t: s.t, phi, phidot });
    }
    let initial_potential = match &info.initial_potential {
        Some(f) => {
            let name = "initial_potential.f64".to_string();
            write_snapshot(&dir.join(&name), f, 0.0, "initial-potential")?;
            Some(name)
        }
        None => None,
    };
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config_hash: info.config_hash.clone(),
        label: info.label.clone(),
        n: traj.grid.n(),
        resolution: traj.grid.resolution(),
        backend: traj.backend,
        schedule: traj.schedule.clone(),
        snapshots: entries,
        diagnostics: traj.diagnostics.clone(),
        initial_potential,
        members: Vec::new(),
        notices: info.notices.clone(),
        extra: info.extra.clone(),
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::InvalidArgument(format!(
            "{}: archive format {} is not supported",
            dir.display(),
            manifest.format_version
        )));
    }
    Ok(manifest)
}

/// Writes a member archive into `dir/members/<name>` and records it in the parent manifest.
pub fn add_member(
    dir: &Path,
    name: &str,
    traj: &FlowTrajectory,
    info: &ArchiveInfo,
) -> Result<Manifest> {
    let rel = format!("members/{name}");
    write_archive(&dir.join(&rel), traj, info)?;
    let mut parent = read_manifest(dir)?;
    parent.members.retain(|m| m.name != name);
    parent.members.push(MemberEntry { name: name.to_string(), dir: rel });
    write_manifest(dir, &parent)?;
    Ok(parent)
}

/// A loaded archive.
#[derive(Debug, Clone)]
pub struct Archive {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub trajectory: FlowTrajectory,
    pub initial_potential: Option<ScalarField>,
}

impl Archive {
    /// The rough initial potential if stored, else the first snapshot.
    pub fn initial(&self) -> &ScalarField {
        self.initial_potential.as_ref().unwrap_or_else(|| self.trajectory.initial())
    }

    pub fn member(&self, name: &str) -> Result<Archive> {
        let m = self
            .manifest
            .members
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("archive has no member {name}")))?;
        read_archive(&self.dir.join(&m.dir))
    }

    pub fn members(&self) -> Result<Vec<Archive>> {
        self.manifest
            .members
            .iter()
            .map(|m| read_archive(&self.dir.join(&m.dir)))
            .collect()
    }
}

fn load_field(dir: &Path, name: &str, grid: &TorusGrid) -> Result<ScalarField> {
    let (field, _) = read_snapshot(&dir.join(name))?;
    grid.check_same(field.grid())?;
    Ok(field)
}

pub fn read_archive(dir: &Path) -> Result<Archive> {
    let manifest = read_manifest(dir)?;
    let grid = TorusGrid::new(manifest.n, manifest.resolution)?;
    let snapshots = manifest
        .snapshots
        .iter()
        .map(|e| {
            Ok(Snapshot {
                t: e.t,
                phi: load_field(dir, &e.phi, &grid)?,
                phidot: e.phidot.as_ref().map(|p| load_field(dir, p, &grid)).transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: archive has no snapshots", dir.display())));
    }
    let initial_potential = manifest
        .initial_potential
        .as_ref()
        .map(|p| load_field(dir, p, &grid))
        .transpose()?;
    let trajectory = FlowTrajectory {
        grid,
        backend: manifest.backend,
        schedule: manifest.schedule.clone(),
        snapshots,
        diagnostics: manifest.diagnostics.clone(),
    };
    Ok(Archive { dir: dir.to_path_buf(), manifest, trajectory, initial_potential })
}

//! Diagnostics CSV and run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nlch_core::analysis::energy_ledger;
use nlch_core::Trajectory;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::snapshot;

pub const CSV_COLUMNS: [&str; 12] = [
    "step",
    "t",
    "dt_used",
    "energy",
    "dissipation_increment",
    "cumulative_dissipation",
    "identity_residual",
    "mass",
    "phi_min",
    "phi_max",
    "newton_iters",
    "dphi_vprime",
];

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const SNAPSHOT_DIR: &str = "snapshots";

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

/// One header row, a `step = 0` row for the initial state, then one row per step.
pub fn diagnostics_csv(traj: &Trajectory) -> String {
    let ledger = energy_ledger(traj);
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    let first = &traj.snapshots[0];
    let _ = writeln!(
        out,
        "0,{},0,{},0,0,{},{},{},{},0,0",
        num(first.t),
        num(ledger.energy[0]),
        num(ledger.identity_residual[0]),
        num(traj.initial_mass),
        num(first.phi.min()),
        num(first.phi.max()),
    );
    for (i, d) in traj.ledger.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            d.step,
            num(d.t),
            num(d.dt_used),
            num(ledger.energy[i + 1]),
            num(d.dissipation_increment),
            num(ledger.cumulative_dissipation[i + 1]),
            num(ledger.identity_residual[i + 1]),
            num(d.mass),
            num(d.phi_min),
            num(d.phi_max),
            d.newton_iters,
            num(d.dphi_vprime),
        );
    }
    out
}

/// Parses a diagnostics CSV back into rows of numbers (`nan` allowed).
pub fn read_diagnostics(text: &str) -> std::result::Result<Vec<[f64; 12]>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if header != CSV_COLUMNS.join(",") {
        return Err(format!("unexpected header `{header}`"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 12 {
                return Err(format!("row {} has {} columns", i + 2, cells.len()));
            }
            let mut row = [0.0; 12];
            for (slot, c) in row.iter_mut().zip(cells) {
                *slot = c.parse().map_err(|_| format!("row {}: bad number `{c}`", i + 2))?;
            }
            Ok(row)
        })
        .collect()
}

pub fn snapshot_name(step: usize) -> String {
    format!("snap_{step:08}.nlch")
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes CSV, snapshots and manifest for a finished or failed run.
pub fn write_run(dir: &Path, cfg: &RunConfig, traj: &Trajectory, note: Option<&str>) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    write_file(&dir.join(DIAGNOSTICS_FILE), &diagnostics_csv(traj))?;
    let mut written = Vec::new();
    if cfg.write_snapshots {
        let snap_dir = dir.join(SNAPSHOT_DIR);
        create_dir(&snap_dir)?;
        for s in &traj.snapshots {
            let path = snap_dir.join(snapshot_name(s.step));
            snapshot::write(&path, &s.phi, s.t)?;
            written.push(path);
        }
    }
    let last = traj.final_snapshot();
    let mut summary = format!(
        "status = {}\nsteps = {}\nfinal_t = {}\nsnapshots = {}\n",
        traj.status.as_str(),
        last.step,
        last.t,
        traj.snapshots.len()
    );
    if let Some(n) = note {
        let _ = writeln!(summary, "message = {n}");
    }
    write_manifest(dir, "run", cfg, &summary)?;
    Ok(written)
}

pub fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, summary: &str) -> Result<()> {
    let text = format!(
        "# nlch {} {}\n[config]\n{}\n[result]\n{}",
        env!("CARGO_PKG_VERSION"),
        command,
        cfg.resolved_text(),
        summary
    );
    write_file(&dir.join(MANIFEST_FILE), &text)
}

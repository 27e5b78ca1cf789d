use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nlch_core::analysis::{energy_identity_residual, separation, vprime_contraction};
use nlch_core::potentials::check_hypotheses;
use nlch_core::stationary::solve_with;
use nlch_core::{init_state, pde_residual, reference, run, ChemicalPotentialForm, Field, SimState, StationaryResult, Trajectory, Variant};
use rayon::prelude::*;

use crate::config::{noise_field, InitSpec, RunConfig, STRUCTURAL_KEYS};
use crate::error::{CliError, Result};
use crate::output::{self, create_dir, write_file, write_manifest};
use crate::snapshot;

/// Outcome of a simulation: the final state and its trajectory, or the error
/// together with whatever was recorded before it.
pub enum Simulation {
    Finished(Box<SimState>, Trajectory),
    Failed(CliError, Option<Trajectory>),
}

pub fn simulate_from(cfg: &RunConfig, phi0: Field) -> Simulation {
    let prepared = cfg
        .build_kernel()
        .and_then(|k| init_state(cfg.model.clone(), k, cfg.potential.clone(), phi0).map_err(CliError::from));
    let mut state = match prepared {
        Ok(s) => s,
        Err(e) => return Simulation::Failed(e, None),
    };
    match run(&mut state, cfg.model.t_end) {
        Ok(traj) => Simulation::Finished(Box::new(state), traj),
        Err(f) => Simulation::Failed(f.error.into(), Some(*f.partial)),
    }
}

pub fn simulate(cfg: &RunConfig) -> Simulation {
    match cfg.initial_field() {
        Ok(phi0) => simulate_from(cfg, phi0),
        Err(e) => Simulation::Failed(e, None),
    }
}

fn finished(sim: Simulation) -> Result<(SimState, Trajectory)> {
    match sim {
        Simulation::Finished(s, t) => Ok((*s, t)),
        Simulation::Failed(e, _) => Err(e),
    }
}

/// `run`: simulate and write CSV, snapshots and manifest into `out`.
pub fn run_command(cfg: &RunConfig, out: &Path) -> Result<Trajectory> {
    create_dir(out)?;
    match simulate(cfg) {
        Simulation::Finished(_, traj) => {
            output::write_run(out, cfg, &traj, None)?;
            Ok(traj)
        }
        Simulation::Failed(e, partial) => {
            match partial {
                Some(traj) => {
                    output::write_run(out, cfg, &traj, Some(&e.to_string()))?;
                }
                None => write_manifest(out, "run", cfg, &format!("status = failed\nmessage = {e}\n"))?,
            }
            Err(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            pass,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub preset: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "{}", c.line());
        }
        out
    }
}

pub const PRESETS: [&str; 6] = ["energy-identity", "separation", "contraction", "convergence", "kernel-oracle", "hypotheses"];

/// `verify`: runs one verification preset against the configured model.
pub fn verify(cfg: &RunConfig, preset: &str) -> Result<Report> {
    let checks = match preset {
        "energy-identity" => verify_energy_identity(cfg)?,
        "separation" => verify_separation(cfg)?,
        "contraction" => verify_contraction(cfg)?,
        "convergence" => verify_convergence(cfg)?,
        "kernel-oracle" => verify_kernel_oracle(cfg)?,
        "hypotheses" => verify_hypotheses(cfg)?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(Report {
        preset: preset.into(),
        checks,
    })
}

fn with_dt(cfg: &RunConfig, dt: f64) -> RunConfig {
    let mut c = cfg.clone();
    c.model.dt = dt;
    c
}

fn verify_energy_identity(cfg: &RunConfig) -> Result<Vec<Check>> {
    if !cfg.model.variant.is_gradient_flow() {
        return Err(CliError::Usage(format!(
            "energy-identity applies to variants A and B, not {}",
            cfg.model.variant
        )));
    }
    let dt = cfg.model.dt;
    let runs: Vec<Trajectory> = [dt, dt / 2.0, dt / 4.0]
        .par_iter()
        .map(|&h| finished(simulate(&with_dt(cfg, h))).map(|(_, t)| t))
        .collect::<Result<_>>()?;
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_drift: f64 = 0.0;
    let mut law = true;
    let mut residuals = Vec::new();
    for traj in &runs {
        let e0 = traj.initial_energy.unwrap_or(0.0);
        let slack = 1e-12 * e0.abs().max(1.0);
        for d in &traj.ledger {
            let rise = d.energy_after.unwrap() - d.energy_before.unwrap();
            worst_rise = worst_rise.max(rise);
            law &= rise <= slack;
            worst_drift = worst_drift.max((d.mass - traj.initial_mass).abs());
        }
        residuals.push(energy_identity_residual(traj)?.max_residual());
    }
    let ratios = [residuals[0] / residuals[1], residuals[1] / residuals[2]];
    Ok(vec![
        Check::new("energy-law", law, format!("largest per-step energy change {worst_rise:e}")),
        Check::new(
            "identity-richardson",
            ratios.iter().all(|r| (1.7..=2.3).contains(r)),
            format!(
                "max residuals {:e}, {:e}, {:e}; ratios {:.4}, {:.4}",
                residuals[0], residuals[1], residuals[2], ratios[0], ratios[1]
            ),
        ),
        Check::new("mass", worst_drift <= 1e-12, format!("max drift {worst_drift:e}")),
    ])
}

fn verify_separation(cfg: &RunConfig) -> Result<Vec<Check>> {
    if !cfg.model.variant.has_separation() || !cfg.potential.is_singular() {
        return Err(CliError::Usage(format!(
            "separation applies to variants B and C with a singular potential, not variant {}",
            cfg.model.variant
        )));
    }
    let inits: Vec<InitSpec> = match cfg.init {
        InitSpec::Noise { mean, amplitude, seed } => (0..5u64)
            .map(|k| InitSpec::Noise {
                mean,
                amplitude: amplitude * (1.0 - 0.15 * k as f64),
                seed: seed + k,
            })
            .collect(),
        ref other => vec![other.clone()],
    };
    let reports = inits
        .par_iter()
        .map(|init| {
            let mut c = cfg.clone();
            c.init = init.clone();
            let (_, traj) = finished(simulate(&c))?;
            let t_final = traj.final_snapshot().t;
            Ok(separation(&traj, [0.5 * t_final, t_final])?)
        })
        .collect::<Result<Vec<_>>>()?;
    let deltas: Vec<f64> = reports.iter().map(|r| r.delta).collect();
    let spreads: Vec<f64> = reports.iter().map(|r| r.relative_spread).collect();
    let (lo, hi) = deltas.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
    let worst_spread = spreads.iter().copied().fold(0.0, f64::max);
    Ok(vec![
        Check::new("separated", lo > 0.0, format!("trailing-window deltas {deltas:.6?}")),
        Check::new("stable-tail", worst_spread <= 0.1, format!("largest relative spread {worst_spread:.4}")),
        Check::new("amplitude-independence", hi <= 2.0 * lo, format!("delta range [{lo:.6}, {hi:.6}]")),
    ])
}

fn verify_contraction(cfg: &RunConfig) -> Result<Vec<Check>> {
    let base = cfg.initial_field()?;
    let seed = match cfg.init {
        InitSpec::Noise { seed, .. } => seed + 1,
        _ => 1,
    };
    let pert = noise_field(cfg.grid, 0.0, 1.0, seed);
    let eps = cfg.perturbation;
    let runs = [0.0, 0.0, eps, 2.0 * eps]
        .par_iter()
        .map(|&s| finished(simulate_from(cfg, base.add(&pert.scale(s)))).map(|(_, t)| t))
        .collect::<Result<Vec<_>>>()?;
    let same = vprime_contraction(&runs[0], &runs[1])?;
    let one = vprime_contraction(&runs[0], &runs[2])?;
    let two = vprime_contraction(&runs[0], &runs[3])?;
    let zero = same.distances.iter().copied().fold(0.0, f64::max);
    let d0 = one.distances[0];
    let bound = one
        .times
        .iter()
        .zip(&one.distances)
        .all(|(&t, &d)| d <= d0 * (one.kappa * (t - one.times[0]) / 2.0).exp() * (1.0 + 1e-12));
    let ratios: Vec<f64> = one
        .distances
        .iter()
        .zip(&two.distances)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| b / a)
        .collect();
    let worst = ratios.iter().map(|r| (r - 2.0).abs()).fold(0.0, f64::max);
    Ok(vec![
        Check::new("uniqueness", zero == 0.0, format!("max distance between identical runs {zero:e}")),
        Check::new(
            "lipschitz-bound",
            one.kappa.is_finite() && bound,
            format!("fitted kappa {:.6}, d(0) = {d0:e}", one.kappa),
        ),
        Check::new(
            "linear-response",
            !ratios.is_empty() && worst <= 0.1,
            format!("d(2ε)/d(ε) within 2 ± {worst:.4} over {} snapshots", ratios.len()),
        ),
    ])
}

fn stationary_form(variant: Variant) -> ChemicalPotentialForm {
    if variant == Variant::C {
        ChemicalPotentialForm::Degenerate
    } else {
        ChemicalPotentialForm::Standard
    }
}

fn verify_convergence(cfg: &RunConfig) -> Result<Vec<Check>> {
    if cfg.model.variant == Variant::D {
        return Err(CliError::Usage("convergence applies to variants A, B and C".into()));
    }
    let (state, traj) = finished(simulate(cfg))?;
    let last_rate = traj.ledger.last().map_or(f64::NAN, |d| d.dphi_vprime);
    let residual = pde_residual(&state);
    let tol = cfg.stationary.tol;
    let kernel = state.kernel().clone();
    let r = solve_with(
        &kernel,
        &cfg.potential,
        state.phi().mean(),
        state.phi(),
        stationary_form(cfg.model.variant),
        cfg.stationary,
    )?;
    let dist = r.phi_star.sub(state.phi()).norm();
    Ok(vec![
        Check::new(
            "equilibrated",
            traj.status == nlch_core::RunStatus::Equilibrated && last_rate < 1e-8,
            format!("status {}, last V′ rate {last_rate:e} at t = {}", traj.status.as_str(), state.t()),
        ),
        Check::new("pde-residual", residual < 1e-6, format!("{residual:e}")),
        Check::new(
            "stationary-warm-start",
            r.converged && r.iterations <= 10 && dist <= 10.0 * tol,
            format!(
                "converged {}, {} iterations, residual {:e}, distance {dist:e}",
                r.converged, r.iterations, r.residual
            ),
        ),
    ])
}

fn verify_kernel_oracle(cfg: &RunConfig) -> Result<Vec<Check>> {
    let k = cfg.build_kernel()?;
    let seed = match cfg.init {
        InitSpec::Noise { seed, .. } => seed,
        _ => 0,
    };
    let f = noise_field(cfg.grid, 0.0, 1.0, seed);
    let fast = k.convolve(&f)?;
    let slow = reference::direct_convolve(&k, &f);
    let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dev = fast.values().iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    let unit = k.convolve(&Field::constant(cfg.grid, 1.0))?.sub(k.ambient()).sup_norm();
    let lo = k.ambient().min();
    Ok(vec![
        Check::new("convolution", dev <= 1e-10, format!("max relative deviation {dev:e}")),
        Check::new("ambient", unit <= 1e-13, format!("|J*1 - a| = {unit:e}")),
        Check::new("ambient-sign", lo >= -1e-12, format!("min a = {lo:e}")),
    ])
}

fn verify_hypotheses(cfg: &RunConfig) -> Result<Vec<Check>> {
    let k = cfg.build_kernel()?;
    let r = check_hypotheses(&cfg.potential, &k, cfg.model.alpha);
    let s = r.satisfied;
    let mut checks = vec![
        Check::new("H1", s.h1, format!("min a = {:e}, ‖J‖₁ = {}", k.ambient().min(), k.l1_norm())),
        Check::new("H2", s.h2, format!("inf F″ = {}, c0 = {}", r.inf_f2, r.c0)),
        Check::new("H3", s.h3, format!("c1 = {}, c2 = {}, margin c1 - ‖J‖₁/2 = {}", r.c1, r.c2, r.c1_margin)),
        Check::new("H4", s.h4, format!("p = {:?}", r.h4_p)),
    ];
    if let Some(ok) = s.h5 {
        checks.push(Check::new("H5", ok, format!("q = {:?}", r.h5_q)));
    }
    if let Some(ok) = s.h10 {
        checks.push(Check::new("H10", ok, format!("margin {}", r.h10_margin.unwrap_or(f64::NAN))));
    }
    if let Some(ok) = s.h11 {
        checks.push(Check::new("H11", ok, "F′ diverges at the endpoints".into()));
    }
    if let Some(ok) = s.viscosity {
        checks.push(Check::new("viscosity", ok, format!("alpha = {}", r.viscosity)));
    }
    Ok(checks)
}

/// `equilibrate`: solves the stationary problem from the configured initial data.
pub fn equilibrate(cfg: &RunConfig, out: &Path) -> Result<StationaryResult> {
    let k = cfg.build_kernel()?;
    let init = cfg.initial_field()?;
    let mass = init.mean();
    let r = solve_with(&k, &cfg.potential, mass, &init, stationary_form(cfg.model.variant), cfg.stationary)?;
    create_dir(out)?;
    snapshot::write(&out.join("equilibrium.nlch"), &r.phi_star, 0.0)?;
    let summary = format!(
        "mass = {mass}\nmu_star = {}\nresidual = {:e}\niterations = {}\nconverged = {}\n",
        r.mu_star, r.residual, r.iterations, r.converged
    );
    write_manifest(out, "equilibrate", cfg, &summary)?;
    Ok(r)
}

/// Splits `key=v1,v2,...`.
pub fn parse_axis(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("axis `{spec}` must look like key=v1,v2,...")))?;
    let key = key.trim().to_string();
    if STRUCTURAL_KEYS.contains(&key.as_str()) {
        return Err(CliError::Usage(format!("`{key}` is structural and cannot be swept")));
    }
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(CliError::Usage(format!("axis `{key}` has an empty value list")));
    }
    Ok((key, values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobSummary {
    pub index: usize,
    pub value: String,
    pub dir: PathBuf,
    pub status: String,
    pub steps: usize,
    pub final_t: f64,
    pub final_energy: f64,
    pub message: Option<String>,
}

pub const INDEX_FILE: &str = "index.csv";

/// `sweep`: one independent run per axis value, executed on `threads` workers.
pub fn sweep(cfg: &RunConfig, key: &str, values: &[String], out: &Path, threads: Option<usize>) -> Result<Vec<JobSummary>> {
    if values.is_empty() {
        return Err(CliError::Usage(format!("axis `{key}` has an empty value list")));
    }
    if STRUCTURAL_KEYS.contains(&key) {
        return Err(CliError::Usage(format!("`{key}` is structural and cannot be swept")));
    }
    let jobs = values
        .iter()
        .map(|v| cfg.with_override(key, v))
        .collect::<Result<Vec<_>>>()?;
    create_dir(out)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let summaries: Vec<JobSummary> = pool.install(|| {
        jobs.par_iter()
            .enumerate()
            .map(|(i, job)| {
                let dir = out.join(format!("job_{i:03}"));
                let (status, traj, message) = match run_command(job, &dir) {
                    Ok(t) => (t.status.as_str().to_string(), Some(t), None),
                    Err(e) => ("failed".to_string(), None, Some(e.to_string())),
                };
                let (steps, final_t, final_energy) = traj.as_ref().map_or((0, f64::NAN, f64::NAN), |t| {
                    let last = t.final_snapshot();
                    let e = t.ledger.last().and_then(|d| d.energy_after).or(t.initial_energy).unwrap_or(f64::NAN);
                    (last.step, last.t, e)
                });
                JobSummary {
                    index: i,
                    value: values[i].clone(),
                    dir,
                    status,
                    steps,
                    final_t,
                    final_energy,
                    message,
                }
            })
            .collect()
    });
    let mut index = format!("job,{key},dir,status,steps,final_t,final_energy\n");
    for s in &summaries {
        let _ = writeln!(
            index,
            "{},{},{},{},{},{},{}",
            s.index,
            s.value,
            s.dir.file_name().unwrap().to_string_lossy(),
            s.status,
            s.steps,
            s.final_t,
            s.final_energy
        );
    }
    write_file(&out.join(INDEX_FILE), &index)?;
    Ok(summaries)
}

/// `export`: dumps a snapshot as `x[,y],value` CSV rows.
pub fn export(input: &Path, output_path: &Path) -> Result<()> {
    let (field, t) = snapshot::read(input)?;
    let g = *field.grid();
    let mut out = String::new();
    let _ = writeln!(out, "# t = {t}");
    out.push_str(if g.dim() == 1 { "x,value\n" } else { "x,y,value\n" });
    for (i, v) in field.values().iter().enumerate() {
        let c = g.center(i);
        if g.dim() == 1 {
            let _ = writeln!(out, "{},{v}", c[0]);
        } else {
            let _ = writeln!(out, "{},{},{v}", c[0], c[1]);
        }
    }
    write_file(output_path, &out)
}

/// `--threads`, falling back to `NLCH_THREADS`.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("NLCH_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("NLCH_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

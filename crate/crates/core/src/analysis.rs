//! Post-processing of trajectories: energy, dissipation, boundedness,
//! separation, contraction and convergence diagnostics.

use std::sync::Arc;

use crate::dynamics::{ModelConfig, StepDiagnostics};
use crate::error::{Error, Result};
use crate::grid::{vprime_norm_with, Field, Grid};
use crate::kernels::Kernel;
use crate::potentials::Potential;
use crate::spectral::NeumannSpectral;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub phi: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Running,
    /// Reached `t_end`.
    Completed,
    Equilibrated,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::Completed => "completed",
            RunStatus::Equilibrated => "equilibrated",
            RunStatus::Failed => "failed",
        }
    }
}

/// Snapshots plus the per-step ledger of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: ModelConfig,
    pub kernel: Arc<Kernel>,
    pub potential: Potential,
    pub initial_energy: Option<f64>,
    pub initial_mass: f64,
    pub snapshots: Vec<Snapshot>,
    pub ledger: Vec<StepDiagnostics>,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid {
        self.kernel.grid()
    }

    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectories always hold the initial snapshot")
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
}

pub(crate) fn standard_energy_raw(grid: &Grid, a: &[f64], conv: &[f64], p: &Potential, phi: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..phi.len() {
        acc += 0.5 * (a[i] * phi[i] - conv[i]) * phi[i] + p.f(phi[i]);
    }
    acc * grid.cell_volume()
}

pub(crate) fn degenerate_energy_raw(grid: &Grid, a: &[f64], conv: &[f64], p: &Potential, phi: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..phi.len() {
        acc += (a[i] - conv[i]) * phi[i] + p.f(phi[i]);
    }
    acc * grid.cell_volume()
}

fn check_phi(phi: &Field, k: &Kernel, p: &Potential) -> Result<()> {
    if phi.grid() != k.grid() {
        return Err(Error::Usage("field and kernel live on different grids".into()));
    }
    for &s in phi.values() {
        p.eval(s)?;
    }
    Ok(())
}

/// `¼∫∫J(x-y)(φ(x)-φ(y))² + ∫F(φ)`, via `½(⟨aφ,φ⟩ - ⟨J*φ,φ⟩)`.
pub fn energy(phi: &Field, k: &Kernel, p: &Potential) -> Result<f64> {
    check_phi(phi, k, p)?;
    let conv = k.convolve_raw(phi.values());
    Ok(standard_energy_raw(k.grid(), k.ambient().values(), &conv, p, phi.values()))
}

/// `⟨φ, J*(1-φ)⟩ + ∫F(φ)`, the free energy of the degenerate model.
pub fn degenerate_energy(phi: &Field, k: &Kernel, p: &Potential) -> Result<f64> {
    check_phi(phi, k, p)?;
    let conv = k.convolve_raw(phi.values());
    Ok(degenerate_energy_raw(k.grid(), k.ambient().values(), &conv, p, phi.values()))
}

/// Energy balance series, one entry for `t = 0` and one per step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    /// NaN where the variant tracks no energy.
    pub energy: Vec<f64>,
    pub cumulative_dissipation: Vec<f64>,
    /// `|E(t) + D(t) - E(0)|`.
    pub identity_residual: Vec<f64>,
}

impl EnergyLedger {
    pub fn max_residual(&self) -> f64 {
        self.identity_residual.iter().copied().fold(0.0, f64::max)
    }
}

/// Accumulates the ledger for any variant without checks.
pub fn energy_ledger(traj: &Trajectory) -> EnergyLedger {
    let n = traj.ledger.len() + 1;
    let e0 = traj.initial_energy.unwrap_or(f64::NAN);
    let t0 = traj.snapshots.first().map_or(0.0, |s| s.t);
    let mut out = EnergyLedger {
        times: Vec::with_capacity(n),
        energy: Vec::with_capacity(n),
        cumulative_dissipation: Vec::with_capacity(n),
        identity_residual: Vec::with_capacity(n),
    };
    out.times.push(t0);
    out.energy.push(e0);
    out.cumulative_dissipation.push(0.0);
    out.identity_residual.push(if e0.is_nan() { f64::NAN } else { 0.0 });
    let mut cum = 0.0;
    for d in &traj.ledger {
        cum += d.dissipation_increment;
        let e = d.energy_after.unwrap_or(f64::NAN);
        out.times.push(d.t);
        out.energy.push(e);
        out.cumulative_dissipation.push(cum);
        out.identity_residual.push((e + cum - e0).abs());
    }
    out
}

/// Energy-identity residual of a gradient-flow (variant A or B) trajectory.
pub fn energy_identity_residual(traj: &Trajectory) -> Result<EnergyLedger> {
    if !traj.config.variant.is_gradient_flow() {
        return Err(Error::Usage(format!(
            "the energy identity applies to variants A and B, not {}",
            traj.config.variant
        )));
    }
    Ok(energy_ledger(traj))
}

/// Parameters of `E(t) ≤ E(0) e^{-kt} + C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativeFit {
    pub k: f64,
    pub c: f64,
    /// `k` hit [`DissipativeFit::K_CAP`] because no sample constrains it.
    pub k_capped: bool,
}

impl DissipativeFit {
    pub const K_CAP: f64 = 1e6;

    /// Whether the bound holds at every ledger sample.
    pub fn holds(&self, ledger: &EnergyLedger) -> bool {
        let e0 = ledger.energy[0];
        ledger
            .times
            .iter()
            .zip(&ledger.energy)
            .all(|(&t, &e)| e <= e0 * (-self.k * (t - ledger.times[0])).exp() + self.c + 1e-12 * (1.0 + e0.abs()))
    }
}

/// Fits the dissipative bound on a trajectory's energy series.
///
/// `C` is the smallest non-negative level dominating the trailing half of the
/// series; `k` is then the largest rate keeping the bound valid at every
/// sample. `mass_bound` must dominate the trajectory's mean.
pub fn dissipative_fit(traj: &Trajectory, mass_bound: f64) -> Result<DissipativeFit> {
    if traj.ledger.len() < 50 {
        return Err(Error::Usage(format!(
            "dissipative fit needs at least 50 ledger entries, got {}",
            traj.ledger.len()
        )));
    }
    if traj.initial_mass.abs() > mass_bound {
        return Err(Error::Usage(format!(
            "trajectory mean {} exceeds the mass bound {mass_bound}",
            traj.initial_mass
        )));
    }
    let ledger = energy_ledger(traj);
    if ledger.energy.iter().any(|e| !e.is_finite()) {
        return Err(Error::Usage("trajectory carries no energy series".into()));
    }
    let n = ledger.energy.len();
    let c = ledger.energy[n / 2..].iter().copied().fold(0.0f64, f64::max);
    let e0 = ledger.energy[0];
    let t0 = ledger.times[0];
    let mut k = DissipativeFit::K_CAP;
    for (&t, &e) in ledger.times.iter().zip(&ledger.energy).skip(1) {
        let excess = e - c;
        if excess <= 0.0 || t <= t0 {
            continue;
        }
        // e0 e^{-k(t - t0)} ≥ excess > 0 forces e0 > 0.
        let bound = if e0 > 0.0 { (e0 / excess).ln() / (t - t0) } else { 0.0 };
        k = k.min(bound.max(0.0));
    }
    let fit = DissipativeFit {
        k,
        c,
        k_capped: k >= DissipativeFit::K_CAP,
    };
    if fit.holds(&ledger) {
        Ok(fit)
    } else {
        // k = 0 always works once C dominates the whole series.
        let c_all = ledger.energy.iter().map(|e| e - e0).fold(0.0f64, f64::max);
        Ok(DissipativeFit {
            k: 0.0,
            c: c_all.max(c),
            k_capped: false,
        })
    }
}

/// `sup_{t ≥ 2τ} ‖φ(t)‖_∞` over the snapshots.
pub fn linf_track(traj: &Trajectory, tau: f64) -> Result<f64> {
    let t0 = traj.snapshots.first().map_or(0.0, |s| s.t);
    let mut sup: Option<f64> = None;
    for s in traj.snapshots.iter().filter(|s| s.t - t0 >= 2.0 * tau) {
        let v = s.phi.sup_norm();
        sup = Some(sup.map_or(v, |m| m.max(v)));
    }
    sup.ok_or_else(|| Error::Usage(format!("no snapshots at or after 2τ = {}", 2.0 * tau)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    pub window: [f64; 2],
    /// Minimal distance to the admissible endpoints over the window.
    pub delta: f64,
    /// Per-snapshot distances inside the window.
    pub series: Vec<(f64, f64)>,
    /// Minimal distances over the four consecutive quarters of the window.
    pub quarter_deltas: Vec<f64>,
    /// Quarter minima are non-decreasing.
    pub monotone_tail: bool,
    /// `(max - min) / max` of the per-snapshot distances.
    pub relative_spread: f64,
}

impl SeparationReport {
    pub fn separated(&self) -> bool {
        self.delta > 0.0
    }
}

/// Distance of the trajectory to the singular endpoints over `window`.
pub fn separation(traj: &Trajectory, window: [f64; 2]) -> Result<SeparationReport> {
    if !traj.config.variant.has_separation() || !traj.potential.is_singular() {
        return Err(Error::Usage(format!(
            "separation applies to variants B and C with a singular potential, not variant {}",
            traj.config.variant
        )));
    }
    let iv = traj.potential.admissible();
    let series: Vec<(f64, f64)> = traj
        .snapshots
        .iter()
        .filter(|s| s.t >= window[0] && s.t <= window[1])
        .map(|s| {
            let d = s.phi.values().iter().map(|&v| (v - iv.lo).min(iv.hi - v)).fold(f64::INFINITY, f64::min);
            (s.t, d)
        })
        .collect();
    if series.is_empty() {
        return Err(Error::Usage(format!("no snapshots inside window [{}, {}]", window[0], window[1])));
    }
    let delta = series.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let max = series.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let quarter = (window[1] - window[0]) / 4.0;
    let quarter_deltas: Vec<f64> = (0..4)
        .filter_map(|q| {
            let (lo, hi) = (window[0] + q as f64 * quarter, window[0] + (q + 1) as f64 * quarter);
            series
                .iter()
                .filter(|(t, _)| *t >= lo && (*t < hi || q == 3))
                .map(|x| x.1)
                .reduce(f64::min)
        })
        .collect();
    let monotone_tail = quarter_deltas.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    Ok(SeparationReport {
        window,
        delta,
        series,
        quarter_deltas,
        monotone_tail,
        relative_spread: if max > 0.0 { (max - delta) / max } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    /// `d(t) = sqrt(‖δφ‖²_{V′} + α‖δφ‖²_H)`.
    pub distances: Vec<f64>,
    /// Least `κ` with `d(t) ≤ d(0) e^{κt/2}` at every snapshot.
    pub kappa: f64,
}

/// V′ distance between two runs with identical settings and equal means.
pub fn vprime_contraction(a: &Trajectory, b: &Trajectory) -> Result<ContractionReport> {
    if a.config != b.config || a.potential != b.potential || a.grid() != b.grid() || a.kernel.spec() != b.kernel.spec() {
        return Err(Error::Usage("trajectories differ in grid, kernel, potential or model settings".into()));
    }
    if a.snapshots.len() != b.snapshots.len()
        || a.snapshots.iter().zip(&b.snapshots).any(|(x, y)| (x.t - y.t).abs() > 1e-12 * (1.0 + x.t.abs()))
    {
        return Err(Error::Usage("trajectories have different snapshot times".into()));
    }
    if (a.initial_mass - b.initial_mass).abs() > 1e-12 {
        return Err(Error::Usage(format!(
            "unequal means {} and {}; the mean-mismatch estimate is not supported",
            a.initial_mass, b.initial_mass
        )));
    }
    let spectral = NeumannSpectral::new(*a.grid());
    let alpha = a.config.alpha;
    let mut times = Vec::with_capacity(a.snapshots.len());
    let mut distances = Vec::with_capacity(a.snapshots.len());
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        let d = x.phi.sub(&y.phi);
        let v = vprime_norm_with(&spectral, &d);
        let h = d.norm();
        times.push(x.t);
        distances.push((v * v + alpha * h * h).sqrt());
    }
    let (t0, d0) = (times[0], distances[0]);
    let mut kappa = f64::NEG_INFINITY;
    for (&t, &d) in times.iter().zip(&distances).skip(1) {
        if t <= t0 {
            continue;
        }
        let k = if d0 > 0.0 {
            if d > 0.0 {
                2.0 * (d / d0).ln() / (t - t0)
            } else {
                f64::NEG_INFINITY
            }
        } else if d > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        kappa = kappa.max(k);
    }
    if d0 == 0.0 && kappa == f64::NEG_INFINITY {
        kappa = 0.0;
    }
    Ok(ContractionReport { times, distances, kappa })
}

/// Least-squares line fit returning `(slope, intercept, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, my - slope * mx, r2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    pub distance_h: Vec<f64>,
    pub distance_linf: Vec<f64>,
    /// `ρ` of `‖φ(t) - φ*‖_H ~ (1+t)^{-1/ρ}` on the trailing half.
    pub rho: Option<f64>,
    pub power_r2: Option<f64>,
    /// Rate `r` of `‖φ(t) - φ*‖_H ~ e^{-rt}` on the trailing half.
    pub exp_rate: Option<f64>,
    pub exp_r2: Option<f64>,
}

/// Distances of an equilibrated trajectory to `phi_star`, with rate fits.
pub fn convergence_report(traj: &Trajectory, phi_star: &Field) -> Result<ConvergenceReport> {
    if traj.status != RunStatus::Equilibrated {
        let last = traj.ledger.last().map_or(f64::NAN, |d| d.dphi_vprime);
        return Err(Error::Usage(format!(
            "trajectory is {} (last V′ rate {last:e}); convergence needs an equilibrated run",
            traj.status.as_str()
        )));
    }
    if phi_star.grid() != traj.grid() {
        return Err(Error::Usage("phi_star lives on a different grid".into()));
    }
    let mut times = Vec::new();
    let mut distance_h = Vec::new();
    let mut distance_linf = Vec::new();
    for s in &traj.snapshots {
        let d = s.phi.sub(phi_star);
        times.push(s.t);
        distance_h.push(d.norm());
        distance_linf.push(d.sup_norm());
    }
    let start = times.len() / 2;
    let (mut lx, mut ly, mut tx) = (Vec::new(), Vec::new(), Vec::new());
    for i in start..times.len() {
        if distance_h[i] > 0.0 {
            lx.push((1.0 + times[i]).ln());
            ly.push(distance_h[i].ln());
            tx.push(times[i]);
        }
    }
    let (mut rho, mut power_r2, mut exp_rate, mut exp_r2) = (None, None, None, None);
    if ly.len() >= 3 {
        if let Some((slope, _, r2)) = linear_fit(&lx, &ly) {
            power_r2 = Some(r2);
            rho = (slope < 0.0).then(|| -1.0 / slope);
        }
        if let Some((slope, _, r2)) = linear_fit(&tx, &ly) {
            exp_r2 = Some(r2);
            exp_rate = Some(-slope);
        }
    }
    Ok(ConvergenceReport {
        times,
        distance_h,
        distance_linf,
        rho,
        power_r2,
        exp_rate,
        exp_r2,
    })
}

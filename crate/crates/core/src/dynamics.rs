//! Time integration of the four model variants.
//!
//! * `A`: nonviscous, regular potential. Convex splitting with a Newton solve.
//! * `B`: viscous (`α > 0`), typically with the logarithmic potential. Same
//!   scheme, with the viscous term treated implicitly.
//! * `C`: degenerate mobility `b₀ φ(1-φ)` with the entropy potential. Implicit
//!   diffusion, explicit nonlocal advection, flux form.
//! * `D`: Kawasaki dynamics `∂ₜφ = Δ(φ - tanh(β J*φ))`. Implicit `Δφ`,
//!   explicit `Δ tanh`.
//!
//! All schemes conserve the mean up to rounding. Failed steps are retried with
//! halved time steps.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::analysis::{self, RunStatus, Snapshot, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{dot, face_average_raw, grad_raw, div_raw, mean, vprime_norm_with, Field, FieldTag};
use crate::kernels::Kernel;
use crate::linalg::{pcg, project_zero_mean};
use crate::potentials::Potential;
use crate::spectral::NeumannSpectral;

/// Smallest admissible value of the degenerate mobility prefactor `b₀`.
pub const MOBILITY_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    A,
    B,
    C,
    D,
}

impl Variant {
    /// Variants with a discrete energy law.
    pub fn is_gradient_flow(self) -> bool {
        matches!(self, Variant::A | Variant::B)
    }

    /// Variants whose order parameter is confined to a singular interval.
    pub fn has_separation(self) -> bool {
        matches!(self, Variant::B | Variant::C)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::A => "A",
            Variant::B => "B",
            Variant::C => "C",
            Variant::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Variant::A),
            "B" | "b" => Ok(Variant::B),
            "C" | "c" => Ok(Variant::C),
            "D" | "d" => Ok(Variant::D),
            other => Err(Error::Config(format!("unknown variant '{other}' (expected A, B, C or D)"))),
        }
    }
}

/// Mobility prefactor `b₀` of variant C.
#[derive(Debug, Clone, PartialEq)]
pub enum Mobility {
    Constant(f64),
    Field(Field),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Viscosity `α`.
    pub alpha: f64,
    /// Kawasaki coupling `β`.
    pub beta: f64,
    pub mobility: Mobility,
    pub dt: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Minimal distance of every iterate to a singular endpoint.
    pub interior_margin: f64,
    pub snapshot_every: usize,
    pub max_halvings: usize,
    /// Consecutive quiet steps required to declare equilibrium.
    pub equilibrium_window: usize,
}

impl ModelConfig {
    /// Defaults for `variant` with time step `dt`.
    pub fn new(variant: Variant, dt: f64) -> Self {
        ModelConfig {
            variant,
            alpha: if variant == Variant::B { 0.1 } else { 0.0 },
            beta: 0.5,
            mobility: Mobility::Constant(1.0),
            dt,
            t_end: 1.0,
            newton_tol: 1e-10,
            newton_max: 50,
            interior_margin: 1e-9,
            snapshot_every: 10,
            max_halvings: 8,
            equilibrium_window: 100,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn with_snapshot_every(mut self, every: usize) -> Self {
        self.snapshot_every = every;
        self
    }

    pub fn validate(&self, potential: &Potential) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("newton_tol", self.newton_tol)?;
        positive("interior_margin", self.interior_margin)?;
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::Config(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !self.beta.is_finite() {
            return Err(Error::Config("beta must be finite".into()));
        }
        if self.newton_max == 0 || self.snapshot_every == 0 || self.equilibrium_window == 0 {
            return Err(Error::Config(
                "newton_max, snapshot_every and equilibrium_window must be at least 1".into(),
            ));
        }
        match self.variant {
            Variant::B if self.alpha <= 0.0 => Err(Error::Config(
                "variant B is the viscous model and requires alpha > 0".into(),
            )),
            Variant::C => {
                if *potential != Potential::Entropy {
                    return Err(Error::Config("variant C requires the entropy potential".into()));
                }
                let min_b = match &self.mobility {
                    Mobility::Constant(b) => *b,
                    Mobility::Field(f) => f.min(),
                };
                if !(min_b >= MOBILITY_FLOOR) {
                    return Err(Error::Config(format!(
                        "mobility b0 must be at least {MOBILITY_FLOOR}, got {min_b}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Per-step record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Step index after the step (1-based).
    pub step: usize,
    /// Time after the step.
    pub t: f64,
    pub dt_used: f64,
    pub halvings: usize,
    pub energy_before: Option<f64>,
    pub energy_after: Option<f64>,
    pub dissipation_increment: f64,
    pub newton_iters: usize,
    pub mass: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    /// `‖(φⁿ⁺¹ - φⁿ)/Δt‖_{V′}`.
    pub dphi_vprime: f64,
}

struct Model {
    config: ModelConfig,
    kernel: Arc<Kernel>,
    potential: Potential,
    spectral: NeumannSpectral,
    /// `b₀` on faces, variant C only.
    mobility_faces: Vec<Vec<f64>>,
    mobility_mean: f64,
}

/// The evolving state of one simulation.
#[derive(Clone)]
pub struct SimState {
    model: Arc<Model>,
    t: f64,
    phi: Field,
    mu: Field,
    energy: Option<f64>,
    step_count: usize,
}

impl fmt::Debug for SimState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimState")
            .field("variant", &self.model.config.variant)
            .field("t", &self.t)
            .field("step_count", &self.step_count)
            .finish()
    }
}

/// Validates the initial datum and computes the initial chemical potential.
pub fn init_state(
    config: ModelConfig,
    kernel: impl Into<Arc<Kernel>>,
    potential: Potential,
    phi0: Field,
) -> Result<SimState> {
    let kernel = kernel.into();
    config.validate(&potential)?;
    let grid = *kernel.grid();
    if phi0.grid() != &grid {
        return Err(Error::Usage("initial field and kernel live on different grids".into()));
    }
    if config.variant != Variant::D {
        check_admissible(&potential, &phi0, config.interior_margin)?;
    }

    let (mobility_faces, mobility_mean) = match (&config.variant, &config.mobility) {
        (Variant::C, Mobility::Field(b)) => {
            if b.grid() != &grid {
                return Err(Error::Usage("mobility field lives on a different grid".into()));
            }
            (face_average_raw(&grid, b.values()), b.mean())
        }
        (Variant::C, Mobility::Constant(b)) => {
            let ones = vec![1.0; grid.len()];
            let faces = face_average_raw(&grid, &ones)
                .into_iter()
                .map(|c| c.into_iter().map(|v| v * b).collect())
                .collect();
            (faces, *b)
        }
        _ => (Vec::new(), 0.0),
    };

    let model = Arc::new(Model {
        spectral: NeumannSpectral::new(grid),
        config,
        kernel,
        potential,
        mobility_faces,
        mobility_mean,
    });
    let conv = model.kernel.convolve_raw(phi0.values());
    let mu = chemical_potential_raw(&model, phi0.values(), &conv);
    let energy = energy_raw(&model, phi0.values(), &conv);
    Ok(SimState {
        model,
        t: 0.0,
        mu: Field::from_raw(grid, mu, FieldTag::ChemicalPotential),
        phi: phi0.with_tag(FieldTag::OrderParameter),
        energy,
        step_count: 0,
    })
}

fn check_admissible(potential: &Potential, phi: &Field, margin: f64) -> Result<()> {
    let iv = potential.admissible();
    let required = if iv.singular { margin } else { 0.0 };
    for (cell, &v) in phi.values().iter().enumerate() {
        if !iv.contains(v) || iv.margin(v) < required {
            return Err(Error::InitialData {
                cell,
                value: v,
                reason: format!(
                    "must lie in ({}, {}) with distance at least {required} to the endpoints",
                    iv.lo, iv.hi
                ),
            });
        }
    }
    let m = phi.mean();
    if iv.singular && !(m > iv.lo && m < iv.hi) {
        return Err(Error::Domain {
            value: m,
            lo: iv.lo,
            hi: iv.hi,
        });
    }
    Ok(())
}

/// Per-variant chemical potential (without the viscous rate term).
fn chemical_potential_raw(model: &Model, phi: &[f64], conv: &[f64]) -> Vec<f64> {
    let a = model.kernel.ambient().values();
    let p = &model.potential;
    match model.config.variant {
        Variant::A | Variant::B => (0..phi.len()).map(|i| a[i] * phi[i] - conv[i] + p.df(phi[i])).collect(),
        Variant::C => (0..phi.len()).map(|i| p.df(phi[i]) + a[i] - 2.0 * conv[i]).collect(),
        Variant::D => {
            let beta = model.config.beta;
            (0..phi.len()).map(|i| phi[i] - (beta * conv[i]).tanh()).collect()
        }
    }
}

fn energy_raw(model: &Model, phi: &[f64], conv: &[f64]) -> Option<f64> {
    let grid = model.kernel.grid();
    let a = model.kernel.ambient().values();
    match model.config.variant {
        Variant::A | Variant::B => Some(analysis::standard_energy_raw(grid, a, conv, &model.potential, phi)),
        Variant::C => Some(analysis::degenerate_energy_raw(grid, a, conv, &model.potential, phi)),
        Variant::D => None,
    }
}

struct Accepted {
    phi: Vec<f64>,
    mu: Vec<f64>,
    newton_iters: usize,
    dissipation: f64,
}

enum Rejection {
    Newton(Vec<f64>),
    LeftInterval,
    Blowup,
}

impl SimState {
    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    pub fn kernel(&self) -> &Arc<Kernel> {
        &self.model.kernel
    }

    pub fn potential(&self) -> &Potential {
        &self.model.potential
    }

    pub fn spectral(&self) -> &NeumannSpectral {
        &self.model.spectral
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn phi(&self) -> &Field {
        &self.phi
    }

    /// Chemical potential of the last step (at `t = 0`, without the rate term).
    pub fn mu(&self) -> &Field {
        &self.mu
    }

    /// Energy of the current state; `None` for variant D.
    pub fn energy(&self) -> Option<f64> {
        self.energy
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// One step with the configured `dt`.
    pub fn step(&mut self) -> Result<StepDiagnostics> {
        self.step_with(self.model.config.dt)
    }

    /// One step of nominal size `dt`, halved on failure.
    pub fn step_with(&mut self, dt: f64) -> Result<StepDiagnostics> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Usage(format!("time step must be positive, got {dt}")));
        }
        let model = Arc::clone(&self.model);
        let mut history = Vec::new();
        for halvings in 0..=model.config.max_halvings {
            let h = dt / f64::powi(2.0, halvings as i32);
            let outcome = match model.config.variant {
                Variant::A | Variant::B => self.attempt_convex_split(h),
                Variant::C => self.attempt_degenerate(h),
                Variant::D => self.attempt_kawasaki(h),
            };
            match outcome {
                Ok(acc) => return Ok(self.accept(acc, h, halvings)),
                Err(Rejection::Blowup) => return Err(Error::NumericalBlowup { t: self.t }),
                Err(Rejection::Newton(r)) => history = r,
                Err(Rejection::LeftInterval) => history.clear(),
            }
        }
        Err(Error::StepFailure {
            t: self.t,
            halvings: model.config.max_halvings,
            residuals: history,
        })
    }

    fn accept(&mut self, acc: Accepted, dt: f64, halvings: usize) -> StepDiagnostics {
        let model = &*self.model;
        let grid = *model.kernel.grid();
        let rate: Vec<f64> = acc.phi.iter().zip(self.phi.values()).map(|(n, o)| (n - o) / dt).collect();
        let dphi_vprime = vprime_norm_with(&model.spectral, &Field::from_raw(grid, rate, FieldTag::Auxiliary));
        let energy_after = match model.config.variant {
            Variant::D => None,
            _ => energy_raw(model, &acc.phi, &model.kernel.convolve_raw(&acc.phi)),
        };
        let energy_before = self.energy;

        self.phi = Field::from_raw(grid, acc.phi, FieldTag::OrderParameter);
        self.mu = Field::from_raw(grid, acc.mu, FieldTag::ChemicalPotential);
        self.energy = energy_after;
        self.t += dt;
        self.step_count += 1;
        StepDiagnostics {
            step: self.step_count,
            t: self.t,
            dt_used: dt,
            halvings,
            energy_before,
            energy_after,
            dissipation_increment: acc.dissipation,
            newton_iters: acc.newton_iters,
            mass: self.phi.mean(),
            phi_min: self.phi.min(),
            phi_max: self.phi.max(),
            dphi_vprime,
        }
    }

    /// Convex-splitting step: find `φ` with
    /// `(φ - φⁿ)/Δt = Δ μ`, `μ = aφ - J*φⁿ + F_c′(φ) + F_e′(φⁿ) + α(φ - φⁿ)/Δt`.
    ///
    /// Written as the minimization of a strictly convex functional on the
    /// mean-preserving affine space, solved by damped Newton with PCG.
    fn attempt_convex_split(&self, dt: f64) -> std::result::Result<Accepted, Rejection> {
        let model = &*self.model;
        let cfg = &model.config;
        let p = &model.potential;
        let grid = *model.kernel.grid();
        let vol = grid.cell_volume();
        let n = grid.len();
        let a = model.kernel.ambient().values();
        let phin = self.phi.values();
        let iv = p.admissible();
        let margin = cfg.interior_margin;

        let conv_n = model.kernel.convolve_raw(phin);
        let visc = cfg.alpha / dt;
        let diag0: Vec<f64> = a.iter().map(|ai| ai + visc).collect();
        let r: Vec<f64> = (0..n)
            .map(|i| conv_n[i] - p.expansive_unchecked(phin[i]).df + visc * phin[i])
            .collect();

        // Returns (functional, projected gradient, chemical potential).
        let eval = |phi: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
            let u: Vec<f64> = phi.iter().zip(phin).map(|(x, y)| x - y).collect();
            let mut nu = u.clone();
            model.spectral.solve_neg_laplacian(&mut nu);
            let mut functional = 0.5 * dot(&u, &nu) / dt;
            let mut mu = vec![0.0; n];
            let mut grad = vec![0.0; n];
            for i in 0..n {
                let c = p.convex_unchecked(phi[i]);
                mu[i] = diag0[i] * phi[i] + c.df - r[i];
                grad[i] = nu[i] / dt + mu[i];
                functional += 0.5 * diag0[i] * phi[i] * phi[i] + c.f - r[i] * phi[i];
            }
            project_zero_mean(&mut grad);
            (functional, grad, mu)
        };
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

        let mut phi = phin.to_vec();
        let (mut functional, mut grad, mut mu) = eval(&phi);
        let mut history = vec![sup(&grad)];
        let mut iters = 0;
        while history[iters] > cfg.newton_tol {
            if iters == cfg.newton_max {
                return Err(Rejection::Newton(history));
            }
            let d: Vec<f64> = (0..n).map(|i| diag0[i] + p.convex_unchecked(phi[i]).d2f).collect();
            let c = d.iter().copied().fold(f64::INFINITY, f64::min);
            let apply = |x: &[f64], y: &mut [f64]| {
                y.copy_from_slice(x);
                model.spectral.solve_neg_laplacian(y);
                for i in 0..n {
                    y[i] = y[i] / dt + d[i] * x[i];
                }
                project_zero_mean(y);
            };
            let precondition = |x: &[f64], z: &mut [f64]| {
                z.copy_from_slice(x);
                model
                    .spectral
                    .apply(z, |lam| if lam > 0.0 { dt * lam / (1.0 + c * dt * lam) } else { 0.0 });
            };
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let (mut delta, _) = pcg(apply, precondition, &rhs, 1e-10, 1e-3 * cfg.newton_tol, 500);
            project_zero_mean(&mut delta);
            if delta.iter().any(|v| !v.is_finite()) {
                return Err(Rejection::Blowup);
            }

            let mut theta: f64 = 1.0;
            if iv.singular {
                let mut limit = f64::INFINITY;
                for i in 0..n {
                    if delta[i] < 0.0 {
                        limit = limit.min((phi[i] - iv.lo - margin) / -delta[i]);
                    } else if delta[i] > 0.0 {
                        limit = limit.min((iv.hi - margin - phi[i]) / delta[i]);
                    }
                }
                if limit < 1.0 {
                    theta = 0.99 * limit.max(0.0);
                }
            }
            let slope = dot(&grad, &delta);
            let current = history[iters];
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = (0..n).map(|i| phi[i] + theta * delta[i]).collect();
                let (f_t, g_t, m_t) = eval(&trial);
                if f_t.is_finite() {
                    let armijo = f_t <= functional + 1e-4 * theta * slope;
                    let res_t = sup(&g_t);
                    if armijo || res_t < (1.0 - 1e-4 * theta) * current {
                        accepted = Some((trial, f_t, g_t, m_t));
                        break;
                    }
                }
                theta *= 0.5;
            }
            let Some((trial, f_t, g_t, m_t)) = accepted else {
                history.push(current);
                return Err(Rejection::Newton(history));
            };
            phi = trial;
            functional = f_t;
            grad = g_t;
            mu = m_t;
            iters += 1;
            history.push(sup(&grad));
        }

        if phi.iter().any(|v| !v.is_finite()) || mu.iter().any(|v| !v.is_finite()) {
            return Err(Rejection::Blowup);
        }
        let gm = grad_raw(&grid, &mu);
        let grad_sq: f64 = gm.iter().map(|c| dot(c, c)).sum::<f64>() * vol;
        let rate_sq: f64 = phi.iter().zip(phin).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * vol / (dt * dt);
        Ok(Accepted {
            dissipation: dt * (grad_sq + cfg.alpha * rate_sq),
            phi,
            mu,
            newton_iters: iters,
        })
    }

    /// `φ - Δt ∇·(b₀∇φ) = φⁿ + Δt ∇·(b₀ φⁿ(1-φⁿ) ∇wⁿ)`, `wⁿ = a - 2 J*φⁿ`.
    fn attempt_degenerate(&self, dt: f64) -> std::result::Result<Accepted, Rejection> {
        let model = &*self.model;
        let grid = *model.kernel.grid();
        let vol = grid.cell_volume();
        let n = grid.len();
        let a = model.kernel.ambient().values();
        let phin = self.phi.values();
        let b = &model.mobility_faces;

        let conv_n = model.kernel.convolve_raw(phin);
        let w: Vec<f64> = (0..n).map(|i| a[i] - 2.0 * conv_n[i]).collect();
        let gw = grad_raw(&grid, &w);
        let phif = face_average_raw(&grid, phin);
        let flux: Vec<Vec<f64>> = (0..gw.len())
            .map(|k| {
                (0..gw[k].len())
                    .map(|f| b[k][f] * phif[k][f] * (1.0 - phif[k][f]) * gw[k][f])
                    .collect()
            })
            .collect();
        let adv = div_raw(&grid, &flux);
        let rhs: Vec<f64> = (0..n).map(|i| phin[i] + dt * adv[i]).collect();

        let phi = match &model.config.mobility {
            Mobility::Constant(b0) => {
                let mut x = rhs;
                model.spectral.apply(&mut x, |lam| 1.0 / (1.0 + dt * b0 * lam));
                x
            }
            Mobility::Field(_) => {
                let apply = |x: &[f64], y: &mut [f64]| {
                    let mut g = grad_raw(&grid, x);
                    for (gk, bk) in g.iter_mut().zip(b) {
                        for (v, bf) in gk.iter_mut().zip(bk) {
                            *v *= bf;
                        }
                    }
                    let dv = div_raw(&grid, &g);
                    for i in 0..n {
                        y[i] = x[i] - dt * dv[i];
                    }
                };
                let bm = model.mobility_mean;
                let precondition = |x: &[f64], z: &mut [f64]| {
                    z.copy_from_slice(x);
                    model.spectral.apply(z, |lam| 1.0 / (1.0 + dt * bm * lam));
                };
                let (x, out) = pcg(apply, precondition, &rhs, 1e-15, 0.0, 1000);
                if !out.converged {
                    return Err(Rejection::Newton(vec![]));
                }
                x
            }
        };

        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Rejection::Blowup);
        }
        let margin = model.config.interior_margin;
        if phi.iter().any(|&v| v < margin || v > 1.0 - margin) {
            return Err(Rejection::LeftInterval);
        }

        let conv = model.kernel.convolve_raw(&phi);
        let mu = chemical_potential_raw(model, &phi, &conv);
        let gm = grad_raw(&grid, &mu);
        let mut dissipation = 0.0;
        for k in 0..gm.len() {
            for f in 0..gm[k].len() {
                let m = b[k][f] * phif[k][f] * (1.0 - phif[k][f]);
                dissipation += m * gm[k][f] * gm[k][f];
            }
        }
        Ok(Accepted {
            phi,
            mu,
            newton_iters: 0,
            dissipation: dt * dissipation * vol,
        })
    }

    /// `φ - Δt Δφ = φⁿ - Δt Δ tanh(β J*φⁿ)`.
    fn attempt_kawasaki(&self, dt: f64) -> std::result::Result<Accepted, Rejection> {
        let model = &*self.model;
        let grid = *model.kernel.grid();
        let vol = grid.cell_volume();
        let beta = model.config.beta;
        let phin = self.phi.values();
        let conv_n = model.kernel.convolve_raw(phin);
        let g: Vec<f64> = conv_n.iter().map(|c| (beta * c).tanh()).collect();
        let lap_g = div_raw(&grid, &grad_raw(&grid, &g));
        let mut phi: Vec<f64> = phin.iter().zip(&lap_g).map(|(p, l)| p - dt * l).collect();
        model.spectral.apply(&mut phi, |lam| 1.0 / (1.0 + dt * lam));
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Rejection::Blowup);
        }
        let conv = model.kernel.convolve_raw(&phi);
        let mu = chemical_potential_raw(model, &phi, &conv);
        let gm = grad_raw(&grid, &mu);
        let grad_sq: f64 = gm.iter().map(|c| dot(c, c)).sum::<f64>() * vol;
        Ok(Accepted {
            phi,
            mu,
            newton_iters: 0,
            dissipation: dt * grad_sq,
        })
    }
}

/// One step with the configured time step.
pub fn step(state: &mut SimState) -> Result<StepDiagnostics> {
    state.step()
}

/// A run that stopped on an error, with everything recorded up to that point.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: Error,
    pub partial: Box<Trajectory>,
}

/// Advances `state` to `t_end`, recording snapshots and the per-step ledger.
///
/// Stops early with [`RunStatus::Equilibrated`] once `dphi_vprime` stays below
/// `newton_tol · 1e-2` for `equilibrium_window` consecutive steps.
pub fn run(state: &mut SimState, t_end: f64) -> std::result::Result<Trajectory, RunFailure> {
    let model = Arc::clone(&state.model);
    let cfg = &model.config;
    let mut traj = Trajectory {
        config: cfg.clone(),
        kernel: Arc::clone(&model.kernel),
        potential: model.potential.clone(),
        initial_energy: state.energy,
        initial_mass: state.phi.mean(),
        snapshots: vec![Snapshot {
            step: state.step_count,
            t: state.t,
            phi: state.phi.clone(),
        }],
        ledger: Vec::new(),
        status: RunStatus::Running,
    };
    if !(t_end >= state.t) {
        return Err(RunFailure {
            error: Error::Usage(format!("t_end = {t_end} lies before the current time {}", state.t)),
            partial: Box::new(traj),
        });
    }

    let quiet_threshold = cfg.newton_tol * 1e-2;
    let mut quiet = 0;
    let eps = 1e-9 * cfg.dt;
    while t_end - state.t > eps {
        let dt = cfg.dt.min(t_end - state.t);
        match state.step_with(dt) {
            Ok(diag) => {
                quiet = if diag.dphi_vprime < quiet_threshold { quiet + 1 } else { 0 };
                traj.ledger.push(diag);
            }
            Err(error) => {
                traj.status = RunStatus::Failed;
                push_final_snapshot(&mut traj, state);
                return Err(RunFailure {
                    error,
                    partial: Box::new(traj),
                });
            }
        }
        if state.step_count.is_multiple_of(cfg.snapshot_every) {
            traj.snapshots.push(Snapshot {
                step: state.step_count,
                t: state.t,
                phi: state.phi.clone(),
            });
        }
        if quiet >= cfg.equilibrium_window {
            traj.status = RunStatus::Equilibrated;
            break;
        }
    }
    if traj.status == RunStatus::Running {
        traj.status = RunStatus::Completed;
    }
    push_final_snapshot(&mut traj, state);
    Ok(traj)
}

fn push_final_snapshot(traj: &mut Trajectory, state: &SimState) {
    if traj.snapshots.last().map(|s| s.step) != Some(state.step_count) {
        traj.snapshots.push(Snapshot {
            step: state.step_count,
            t: state.t,
            phi: state.phi.clone(),
        });
    }
}

/// `‖g - ⟨g⟩‖_H` for the variant's stationary chemical potential `g`.
pub fn pde_residual(state: &SimState) -> f64 {
    let model = &*state.model;
    let phi = state.phi.values();
    let conv = model.kernel.convolve_raw(phi);
    let mut g = chemical_potential_raw(model, phi, &conv);
    let m = mean(&g);
    for v in g.iter_mut() {
        *v -= m;
    }
    (dot(&g, &g) * model.kernel.grid().cell_volume()).sqrt()
}

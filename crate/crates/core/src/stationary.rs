//! Mass-constrained equilibria: `g(φ) = μ` with `μ` constant and `⟨φ⟩ = m`.
//!
//! Two forms of `g` are supported:
//!
//! * standard: `g = aφ - J*φ + F′(φ)`;
//! * degenerate: `g = F′(φ) + a - 2J*φ`, whose solutions with the entropy
//!   potential are exactly `φ = 1/(e^{w-μ} + 1)`, `w = a - 2J*φ`.
//!
//! The solver alternates Newton-Krylov steps with damped pointwise
//! fixed-point passes. Each pass solves `cφ + F_c′(φ) = rhs` cell by cell,
//! with `rhs` built from the previous iterate and `μ` tuned by scalar root
//! finding so that the mean is exact.

use crate::analysis::{degenerate_energy_raw, standard_energy_raw};
use crate::error::{Error, Result};
use crate::grid::{dot, mean, Field, FieldTag};
use crate::kernels::Kernel;
use crate::linalg::{pcg, project_zero_mean};
use crate::potentials::{Potential, ENDPOINT_GUARD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChemicalPotentialForm {
    Standard,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryResult {
    pub phi_star: Field,
    pub mu_star: f64,
    /// `sup |g(φ*) - μ*|`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    pub tol: f64,
    pub max_outer: usize,
    /// Initial damping of the fixed-point update.
    pub damping: f64,
    /// Try Newton-Krylov steps before falling back to the fixed point.
    pub newton: bool,
}

impl StationaryOptions {
    pub fn new(tol: f64) -> Self {
        StationaryOptions {
            tol,
            max_outer: 500,
            damping: 0.5,
            newton: true,
        }
    }
}

/// `(g, μ*, residual)` with `μ*` the midrange of `g`, which minimizes the sup
/// distance to a constant.
fn chemical_potential(k: &Kernel, p: &Potential, phi: &[f64], form: ChemicalPotentialForm) -> (Vec<f64>, f64, f64) {
    let a = k.ambient().values();
    let conv = k.convolve_raw(phi);
    let g: Vec<f64> = match form {
        ChemicalPotentialForm::Standard => (0..phi.len()).map(|i| a[i] * phi[i] - conv[i] + p.df(phi[i])).collect(),
        ChemicalPotentialForm::Degenerate => (0..phi.len()).map(|i| p.df(phi[i]) + a[i] - 2.0 * conv[i]).collect(),
    };
    let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let mu = 0.5 * (lo + hi);
    let residual = if lo.is_finite() && hi.is_finite() { 0.5 * (hi - lo) } else { f64::INFINITY };
    (g, mu, residual)
}

/// `sup |g(φ) - μ|` for a given `μ`.
pub fn stationary_residual(k: &Kernel, p: &Potential, phi: &Field, mu: f64, form: ChemicalPotentialForm) -> Result<f64> {
    if phi.grid() != k.grid() {
        return Err(Error::Usage("field and kernel live on different grids".into()));
    }
    for &s in phi.values() {
        p.eval(s)?;
    }
    let (g, _, _) = chemical_potential(k, p, phi.values(), form);
    Ok(g.iter().fold(0.0, |m, v| m.max((v - mu).abs())))
}

/// Solves the standard stationary problem from `init`.
pub fn solve_stationary(k: &Kernel, p: &Potential, mass: f64, init: &Field, tol: f64) -> Result<StationaryResult> {
    solve_with(k, p, mass, init, ChemicalPotentialForm::Standard, StationaryOptions::new(tol))
}

/// Fixed point of `φ = 1/(e^{w-μ} + 1)`, `w = a - 2J*φ`, with `⟨φ⟩ = mass`.
pub fn degenerate_equilibrium(k: &Kernel, mass: f64, init: &Field, tol: f64) -> Result<StationaryResult> {
    solve_with(k, &Potential::Entropy, mass, init, ChemicalPotentialForm::Degenerate, StationaryOptions::new(tol))
}

/// Logistic function `1 / (1 + e^{-x})`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sup distance of `phi` to `1/(e^{w-μ}+1)` with `w = a - 2J*φ`.
pub fn degenerate_map_residual(k: &Kernel, phi: &Field, mu: f64) -> f64 {
    let a = k.ambient().values();
    let conv = k.convolve_raw(phi.values());
    phi.values()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - logistic(mu - (a[i] - 2.0 * conv[i]))).abs())
        .fold(0.0, f64::max)
}

pub fn solve_with(
    k: &Kernel,
    p: &Potential,
    mass: f64,
    init: &Field,
    form: ChemicalPotentialForm,
    opts: StationaryOptions,
) -> Result<StationaryResult> {
    if init.grid() != k.grid() {
        return Err(Error::Usage("initial field and kernel live on different grids".into()));
    }
    let iv = p.admissible();
    if !(mass > iv.lo && mass < iv.hi) {
        return Err(Error::Domain {
            value: mass,
            lo: iv.lo,
            hi: iv.hi,
        });
    }
    let m0 = init.mean();
    if (m0 - mass).abs() > 1e-10 {
        return Err(Error::MeanConstraint {
            mean: m0 - mass,
            tol: 1e-10,
        });
    }
    let mut phi: Vec<f64> = init.values().iter().map(|v| v + (mass - m0)).collect();
    for (cell, &v) in phi.iter().enumerate() {
        if !iv.contains(v) {
            return Err(Error::InitialData {
                cell,
                value: v,
                reason: format!("outside the admissible interval ({}, {})", iv.lo, iv.hi),
            });
        }
    }

    let solver = Solver { k, p, form, mass };
    let (_, mut mu, mut residual) = chemical_potential(k, p, &phi, form);
    let mut energy = solver.energy(&phi);
    let mut iterations = 1;
    let mut omega = opts.damping;
    let mut use_newton = opts.newton;
    while residual > opts.tol && iterations < opts.max_outer {
        iterations += 1;
        let newton = if use_newton { solver.newton_step(&phi, residual) } else { None };
        let next = match newton {
            Some(step) => Some(step),
            None => {
                // Majorize-minimize pass: the undamped update minimizes a convex
                // majorant of the energy, so damping only backs off on increase.
                let update = solver.fixed_point_update(&phi, mu);
                let mut accepted = None;
                while omega >= 1e-6 {
                    let damped: Vec<f64> = phi.iter().zip(&update).map(|(o, u)| (1.0 - omega) * o + omega * u).collect();
                    if solver.energy(&damped) <= energy + 1e-14 * energy.abs().max(1.0) {
                        let (_, m, r) = chemical_potential(k, p, &damped, form);
                        accepted = Some((damped, m, r));
                        break;
                    }
                    omega *= 0.5;
                }
                accepted
            }
        };
        let Some((next, next_mu, next_res)) = next else {
            break;
        };
        // Newton is retried only while it keeps making progress.
        use_newton = opts.newton && next_res < residual;
        energy = solver.energy(&next);
        phi = next;
        mu = next_mu;
        residual = next_res;
    }
    // Restore the exact mean lost to rounding.
    let drift = mean(&phi) - mass;
    for v in phi.iter_mut() {
        *v -= drift;
    }
    let converged = residual <= opts.tol;
    Ok(StationaryResult {
        phi_star: Field::new(*k.grid(), phi, FieldTag::OrderParameter)?,
        mu_star: mu,
        residual,
        iterations,
        converged,
    })
}

struct Solver<'a> {
    k: &'a Kernel,
    p: &'a Potential,
    form: ChemicalPotentialForm,
    mass: f64,
}

impl Solver<'_> {
    fn energy(&self, phi: &[f64]) -> f64 {
        let grid = self.k.grid();
        let a = self.k.ambient().values();
        let conv = self.k.convolve_raw(phi);
        match self.form {
            ChemicalPotentialForm::Standard => standard_energy_raw(grid, a, &conv, self.p, phi),
            ChemicalPotentialForm::Degenerate => degenerate_energy_raw(grid, a, &conv, self.p, phi),
        }
    }

    /// Coefficient `c` of the implicit linear term in the cell equation.
    fn linear_coefficient(&self, i: usize) -> f64 {
        match self.form {
            ChemicalPotentialForm::Standard => self.k.ambient().values()[i],
            ChemicalPotentialForm::Degenerate => 0.0,
        }
    }

    /// One Newton-Krylov step with interior safeguard and backtracking.
    /// Returns `None` when the step fails to lower the residual.
    fn newton_step(&self, phi: &[f64], residual: f64) -> Option<(Vec<f64>, f64, f64)> {
        let n = phi.len();
        let (mut g, _, _) = chemical_potential(self.k, self.p, phi, self.form);
        project_zero_mean(&mut g);
        let kappa = match self.form {
            ChemicalPotentialForm::Standard => 1.0,
            ChemicalPotentialForm::Degenerate => 2.0,
        };
        let diag: Vec<f64> = (0..n)
            .map(|i| self.linear_coefficient(i) + self.p.eval_unchecked(phi[i]).d2f)
            .collect();
        let pre: Vec<f64> = (0..n)
            .map(|i| self.linear_coefficient(i) + self.p.convex_unchecked(phi[i]).d2f)
            .collect();
        if pre.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return None;
        }
        let apply = |x: &[f64], y: &mut [f64]| {
            let conv = self.k.convolve_raw(x);
            for i in 0..n {
                y[i] = diag[i] * x[i] - kappa * conv[i];
            }
            project_zero_mean(y);
        };
        let precondition = |x: &[f64], z: &mut [f64]| {
            for i in 0..n {
                z[i] = x[i] / pre[i];
            }
            project_zero_mean(z);
        };
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let (mut delta, out) = pcg(apply, precondition, &rhs, 1e-12, 0.0, 400);
        if out.indefinite || delta.iter().any(|v| !v.is_finite()) {
            return None;
        }
        project_zero_mean(&mut delta);
        if dot(&delta, &delta) == 0.0 {
            return None;
        }

        let iv = self.p.admissible();
        let mut theta: f64 = 1.0;
        if iv.singular {
            let mut limit = f64::INFINITY;
            for i in 0..n {
                let gap = if delta[i] < 0.0 {
                    (phi[i] - iv.lo) / -delta[i]
                } else if delta[i] > 0.0 {
                    (iv.hi - phi[i]) / delta[i]
                } else {
                    f64::INFINITY
                };
                limit = limit.min(gap);
            }
            if limit <= 1.0 {
                theta = 0.9 * limit;
            }
        }
        for _ in 0..30 {
            let trial: Vec<f64> = (0..n).map(|i| phi[i] + theta * delta[i]).collect();
            if trial.iter().all(|&v| iv.contains(v)) {
                let (_, mu, r) = chemical_potential(self.k, self.p, &trial, self.form);
                if r < residual {
                    return Some((trial, mu, r));
                }
            }
            theta *= 0.5;
        }
        None
    }

    /// Pointwise solve of `cφ + F_c′(φ) = μ + rhs₀` with `μ` fixed by the mass.
    fn fixed_point_update(&self, prev: &[f64], mu_guess: f64) -> Vec<f64> {
        let n = prev.len();
        let a = self.k.ambient().values();
        let conv = self.k.convolve_raw(prev);
        let base: Vec<f64> = (0..n)
            .map(|i| {
                let explicit = self.p.expansive_unchecked(prev[i]).df;
                match self.form {
                    ChemicalPotentialForm::Standard => conv[i] - explicit,
                    ChemicalPotentialForm::Degenerate => 2.0 * conv[i] - a[i] - explicit,
                }
            })
            .collect();
        let solve_all = |mu: f64| -> Vec<f64> {
            (0..n)
                .map(|i| solve_cell(self.p, self.linear_coefficient(i), mu + base[i], prev[i]))
                .collect()
        };
        let slope = |phi: &[f64]| -> f64 {
            phi.iter()
                .enumerate()
                .map(|(i, &s)| 1.0 / (self.linear_coefficient(i) + self.p.convex_unchecked(s).d2f))
                .sum::<f64>()
                / n as f64
        };

        // μ ↦ mean(φ(μ)) is increasing: bracket, then safeguarded Newton.
        let excess = |mu: f64| {
            let phi = solve_all(mu);
            (mean(&phi) - self.mass, phi)
        };
        let mut mu = if mu_guess.is_finite() { mu_guess } else { 0.0 };
        let (mut e, mut phi) = excess(mu);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut step = 1.0;
        for _ in 0..200 {
            if e.abs() <= 1e-15 {
                break;
            }
            if e > 0.0 {
                hi = hi.min(mu);
            } else {
                lo = lo.max(mu);
            }
            let d = slope(&phi);
            let mut next = if d > 0.0 && d.is_finite() { mu - e / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = if lo.is_finite() && hi.is_finite() {
                    0.5 * (lo + hi)
                } else if lo.is_finite() {
                    step *= 2.0;
                    lo + step
                } else {
                    step *= 2.0;
                    hi - step
                };
            }
            if next == mu || (lo.is_finite() && hi.is_finite() && hi - lo <= 1e-15 * (1.0 + mu.abs())) {
                break;
            }
            mu = next;
            (e, phi) = excess(mu);
        }
        phi
    }
}

/// Root of `cφ + F_c′(φ) = rhs` on the admissible interval.
fn solve_cell(p: &Potential, c: f64, rhs: f64, guess: f64) -> f64 {
    if c == 0.0 && *p == Potential::Entropy {
        return logistic(rhs);
    }
    let iv = p.admissible();
    let h = |s: f64| c * s + p.convex_unchecked(s).df - rhs;
    let (mut lo, mut hi) = if iv.singular {
        let w = iv.hi - iv.lo;
        (iv.lo + ENDPOINT_GUARD * w, iv.hi - ENDPOINT_GUARD * w)
    } else if iv.is_bounded() {
        (iv.lo, iv.hi)
    } else {
        let mut b = 1.0;
        while h(-b) > 0.0 || h(b) < 0.0 {
            b *= 2.0;
        }
        (-b, b)
    };
    if h(lo) >= 0.0 {
        return lo;
    }
    if h(hi) <= 0.0 {
        return hi;
    }
    let mut s = if guess > lo && guess < hi { guess } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let v = h(s);
        if v == 0.0 {
            return s;
        }
        if v > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let d = c + p.convex_unchecked(s).d2f;
        let mut next = s - v / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-16 * (1.0 + s.abs()) {
            return next;
        }
        s = next;
    }
    s
}

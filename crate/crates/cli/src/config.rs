//! Flat `section.key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every recognised key, its
//! default and its meaning is listed in [`KEYS`]; anything else is rejected
//! with the offending line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nlch_core::stationary::StationaryOptions;
use nlch_core::{Field, Grid, Kernel, KernelSpec, Mobility, ModelConfig, Potential, PotentialTable, RadialTable, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};
use crate::snapshot;

pub struct KeyDoc {
    pub key: &'static str,
    /// `None` marks a required key; `Some("")` a default derived from other keys.
    pub default: Option<&'static str>,
    pub doc: &'static str,
}

const fn key(key: &'static str, default: Option<&'static str>, doc: &'static str) -> KeyDoc {
    KeyDoc { key, default, doc }
}

pub const KEYS: &[KeyDoc] = &[
    key("grid.dim", Some("1"), "spatial dimension, 1 or 2"),
    key("grid.n", None, "cells along the first axis"),
    key("grid.ny", Some(""), "cells along the second axis (defaults to grid.n)"),
    key("grid.length", Some("1.0"), "domain length along the first axis"),
    key("grid.length_y", Some(""), "domain length along the second axis (defaults to grid.length)"),
    key("kernel.type", Some("gaussian"), "gaussian | newtonian2d | custom"),
    key("kernel.xi", Some(""), "Gaussian inverse width (required for gaussian)"),
    key("kernel.cj", Some("auto"), "kernel amplitude, or auto to normalize the L1 norm"),
    key("kernel.l1", Some("1.0"), "target L1 norm used by cj = auto"),
    key("kernel.cutoff", Some("none"), "truncation radius"),
    key("kernel.regularize", Some("true"), "cell-average the singular Newtonian cell"),
    key("kernel.table", Some(""), "two-column radius/value file (required for custom)"),
    key("potential.type", None, "double_well | logarithmic | entropy | table"),
    key("potential.lambda", Some(""), "logarithmic well depth (required for logarithmic)"),
    key("potential.table", Some(""), "four-column s/F/F'/F'' file (required for table)"),
    key("dynamics.variant", None, "A | B | C | D"),
    key("dynamics.dt", None, "time step"),
    key("dynamics.t_end", None, "final time"),
    key("dynamics.alpha", Some(""), "viscosity (0.1 for variant B, otherwise 0)"),
    key("dynamics.beta", Some("0.5"), "Kawasaki coupling (variant D)"),
    key("dynamics.mobility", Some("1.0"), "b0 as a number or a snapshot file (variant C)"),
    key("dynamics.snapshot_every", Some("10"), "snapshot cadence in steps"),
    key("dynamics.max_halvings", Some("8"), "adaptive step halvings before failing"),
    key("dynamics.equilibrium_window", Some("100"), "quiet steps that end a run as equilibrated"),
    key("solver.newton_tol", Some("1e-10"), "nonlinear residual tolerance"),
    key("solver.newton_max", Some("50"), "Newton iteration cap"),
    key("solver.interior_margin", Some("1e-9"), "minimal distance of iterates to singular endpoints"),
    key("solver.stationary_tol", Some("1e-10"), "stationary residual tolerance"),
    key("solver.max_outer", Some("500"), "stationary outer iteration cap"),
    key("solver.damping", Some("0.5"), "initial fixed-point damping"),
    key("init.type", Some("constant"), "constant | noise | cosine | file"),
    key("init.mean", Some("auto"), "mean value (auto: midpoint of a bounded admissible interval, else 0)"),
    key("init.amplitude", Some("0.1"), "noise or cosine amplitude"),
    key("init.mode", Some("1"), "cosine mode number"),
    key("init.seed", Some("0"), "noise seed"),
    key("init.path", Some(""), "snapshot file (required for file)"),
    key("output.dir", Some("out"), "output directory"),
    key("output.snapshots", Some("true"), "write snapshot files"),
    key("verify.preset", Some("none"), "default preset for the verify command"),
    key("verify.perturbation", Some("1e-6"), "perturbation size for the contraction preset"),
];

/// Keys that change the shape of a run and cannot be swept.
pub const STRUCTURAL_KEYS: &[&str] = &["grid.dim", "output.dir"];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    /// Source line; 0 for values injected by overrides.
    line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelNorm {
    Fixed,
    Normalized(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Constant { mean: f64 },
    Noise { mean: f64, amplitude: f64, seed: u64 },
    Cosine { mean: f64, amplitude: f64, mode: u32 },
    File { path: PathBuf },
}

/// A parsed and resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    entries: BTreeMap<String, Entry>,
    pub grid: Grid,
    pub kernel_spec: KernelSpec,
    pub kernel_norm: KernelNorm,
    pub potential: Potential,
    pub model: ModelConfig,
    pub stationary: StationaryOptions,
    pub init: InitSpec,
    pub output_dir: PathBuf,
    pub write_snapshots: bool,
    pub preset: Option<String>,
    pub perturbation: f64,
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(CliError::Parse {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|d| d.key == k) {
            return Err(CliError::Parse {
                line,
                message: format!("unknown key `{k}`"),
            });
        }
        let prev = entries.insert(
            k.to_string(),
            Entry {
                value: v.to_string(),
                line,
            },
        );
        if let Some(prev) = prev {
            return Err(CliError::Parse {
                line,
                message: format!("duplicate key `{k}` (first set on line {})", prev.line),
            });
        }
    }
    RunConfig::resolve(entries)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

fn read_text(path: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

struct Lookup<'a> {
    entries: &'a BTreeMap<String, Entry>,
}

impl Lookup<'_> {
    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        if let Some(e) = self.entries.get(key) {
            return Some((e.value.as_str(), e.line));
        }
        let doc = KEYS.iter().find(|d| d.key == key).expect("key table entry");
        match doc.default {
            Some("") | None => None,
            Some(d) => Some((d, 0)),
        }
    }

    fn required(&self, key: &str) -> Result<(&str, usize)> {
        self.raw(key).ok_or_else(|| CliError::MissingKey(key.into()))
    }

    fn mismatch(key: &str, line: usize, value: &str, expected: &str) -> CliError {
        let message = format!("`{key}` expects {expected}, got `{value}`");
        if line == 0 {
            CliError::Invalid(message)
        } else {
            CliError::Parse { line, message }
        }
    }

    fn number(key: &str, (value, line): (&str, usize)) -> Result<f64> {
        value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Self::mismatch(key, line, value, "a finite number"))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        Self::number(key, self.required(key)?)
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key).map(|r| Self::number(key, r)).transpose()
    }

    fn integer<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (value, line) = self.required(key)?;
        value.parse::<T>().map_err(|_| Self::mismatch(key, line, value, "a non-negative integer"))
    }

    fn opt_integer<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            Some((value, line)) => value
                .parse::<T>()
                .map(Some)
                .map_err(|_| Self::mismatch(key, line, value, "a non-negative integer")),
            None => Ok(None),
        }
    }

    fn boolean(&self, key: &str) -> Result<bool> {
        let (value, line) = self.required(key)?;
        match value {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(Self::mismatch(key, line, value, "true or false")),
        }
    }

    fn choice<'v>(&self, key: &str, options: &[&'v str]) -> Result<&'v str> {
        let (value, line) = self.required(key)?;
        options
            .iter()
            .find(|o| **o == value)
            .copied()
            .ok_or_else(|| Self::mismatch(key, line, value, &format!("one of {}", options.join(", "))))
    }
}

impl RunConfig {
    fn resolve(entries: BTreeMap<String, Entry>) -> Result<RunConfig> {
        let l = Lookup { entries: &entries };

        let dim: usize = l.integer("grid.dim")?;
        let n: usize = l.integer("grid.n")?;
        let length = l.f64("grid.length")?;
        let grid = match dim {
            1 => Grid::new_1d(length, n)?,
            2 => {
                let ny = l.opt_integer("grid.ny")?.unwrap_or(n);
                let ly = l.opt_f64("grid.length_y")?.unwrap_or(length);
                Grid::new_2d([length, ly], [n, ny])?
            }
            _ => {
                let (v, line) = l.required("grid.dim")?;
                return Err(Lookup::mismatch("grid.dim", line, v, "1 or 2"));
            }
        };

        let (cj_raw, cj_line) = l.required("kernel.cj")?;
        let (cj, kernel_norm) = if cj_raw == "auto" {
            (1.0, KernelNorm::Normalized(l.f64("kernel.l1")?))
        } else {
            (Lookup::number("kernel.cj", (cj_raw, cj_line))?, KernelNorm::Fixed)
        };
        let mut kernel_spec = match l.choice("kernel.type", &["gaussian", "newtonian2d", "custom"])? {
            "gaussian" => KernelSpec::gaussian(cj, l.f64("kernel.xi")?),
            "newtonian2d" => KernelSpec::newtonian2d(cj),
            _ => {
                let (path, _) = l.required("kernel.table")?;
                let table = RadialTable::parse(&read_text(path)?)?;
                let spec = KernelSpec::custom(table);
                if cj == 1.0 {
                    spec
                } else {
                    spec.scaled(cj)
                }
            }
        };
        let (cutoff, cut_line) = l.required("kernel.cutoff")?;
        if cutoff != "none" {
            kernel_spec = kernel_spec.with_cutoff(Lookup::number("kernel.cutoff", (cutoff, cut_line))?);
        }
        kernel_spec.regularize = l.boolean("kernel.regularize")?;

        let potential = match l.choice("potential.type", &["double_well", "logarithmic", "entropy", "table"])? {
            "double_well" => Potential::DoubleWell,
            "logarithmic" => Potential::logarithmic(l.f64("potential.lambda")?)?,
            "entropy" => Potential::Entropy,
            _ => {
                let (path, _) = l.required("potential.table")?;
                Potential::Tabulated(PotentialTable::parse(&read_text(path)?)?)
            }
        };

        let (variant_raw, variant_line) = l.required("dynamics.variant")?;
        let variant: Variant = variant_raw
            .parse()
            .map_err(|_| Lookup::mismatch("dynamics.variant", variant_line, variant_raw, "A, B, C or D"))?;
        let mut model = ModelConfig::new(variant, l.f64("dynamics.dt")?).with_t_end(l.f64("dynamics.t_end")?);
        if let Some(alpha) = l.opt_f64("dynamics.alpha")? {
            model.alpha = alpha;
        }
        model.beta = l.f64("dynamics.beta")?;
        let (mob, mob_line) = l.required("dynamics.mobility")?;
        model.mobility = match mob.parse::<f64>() {
            Ok(_) => Mobility::Constant(Lookup::number("dynamics.mobility", (mob, mob_line))?),
            Err(_) => {
                let (field, _) = snapshot::read(Path::new(mob))?;
                if field.grid() != &grid {
                    return Err(CliError::Invalid(format!("mobility file {mob} does not match the configured grid")));
                }
                Mobility::Field(field)
            }
        };
        model.snapshot_every = l.integer("dynamics.snapshot_every")?;
        model.max_halvings = l.integer("dynamics.max_halvings")?;
        model.equilibrium_window = l.integer("dynamics.equilibrium_window")?;
        model.newton_tol = l.f64("solver.newton_tol")?;
        model.newton_max = l.integer("solver.newton_max")?;
        model.interior_margin = l.f64("solver.interior_margin")?;
        model.validate(&potential)?;

        let mut stationary = StationaryOptions::new(l.f64("solver.stationary_tol")?);
        stationary.max_outer = l.integer("solver.max_outer")?;
        stationary.damping = l.f64("solver.damping")?;
        if !(stationary.tol > 0.0 && stationary.damping > 0.0 && stationary.damping <= 1.0) {
            return Err(CliError::Invalid(
                "solver.stationary_tol must be positive and solver.damping in (0, 1]".into(),
            ));
        }

        let (mean_raw, mean_line) = l.required("init.mean")?;
        let mean = if mean_raw == "auto" {
            let iv = potential.admissible();
            if iv.is_bounded() {
                0.5 * (iv.lo + iv.hi)
            } else {
                0.0
            }
        } else {
            Lookup::number("init.mean", (mean_raw, mean_line))?
        };
        let init = match l.choice("init.type", &["constant", "noise", "cosine", "file"])? {
            "constant" => InitSpec::Constant { mean },
            "noise" => InitSpec::Noise {
                mean,
                amplitude: l.f64("init.amplitude")?,
                seed: l.integer("init.seed")?,
            },
            "cosine" => InitSpec::Cosine {
                mean,
                amplitude: l.f64("init.amplitude")?,
                mode: l.integer("init.mode")?,
            },
            _ => InitSpec::File {
                path: PathBuf::from(l.required("init.path")?.0),
            },
        };

        let (preset, _) = l.required("verify.preset")?;
        let preset = (preset != "none").then(|| preset.to_string());

        Ok(RunConfig {
            grid,
            kernel_spec,
            kernel_norm,
            potential,
            model,
            stationary,
            init,
            output_dir: PathBuf::from(l.required("output.dir")?.0),
            write_snapshots: l.boolean("output.snapshots")?,
            preset,
            perturbation: l.f64("verify.perturbation")?,
            entries,
        })
    }

    /// A copy with `key` set to `value`, re-validated.
    pub fn with_override(&self, key: &str, value: &str) -> Result<RunConfig> {
        if !KEYS.iter().any(|d| d.key == key) {
            return Err(CliError::Usage(format!("unknown key `{key}`")));
        }
        let mut entries = self.entries.clone();
        entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line: 0,
            },
        );
        RunConfig::resolve(entries)
    }

    /// Effective value of `key` as written in the resolved config text.
    pub fn value(&self, key: &str) -> Option<String> {
        let l = Lookup { entries: &self.entries };
        l.raw(key).map(|(v, _)| v.to_string())
    }

    /// Every key with its effective value; derived defaults are spelled out.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for d in KEYS {
            let value = match self.value(d.key) {
                Some(v) => v,
                None => match d.key {
                    "grid.ny" if self.grid.dim() == 2 => self.grid.counts()[1].to_string(),
                    "grid.length_y" if self.grid.dim() == 2 => self.grid.lengths()[1].to_string(),
                    "dynamics.alpha" => self.model.alpha.to_string(),
                    _ => continue,
                },
            };
            let _ = writeln!(out, "{} = {}", d.key, value);
        }
        out
    }

    pub fn build_kernel(&self) -> Result<Arc<Kernel>> {
        let k = match self.kernel_norm {
            KernelNorm::Fixed => Kernel::build(self.kernel_spec.clone(), self.grid)?,
            KernelNorm::Normalized(target) => Kernel::build_normalized(self.kernel_spec.clone(), self.grid, target)?,
        };
        Ok(Arc::new(k))
    }

    pub fn initial_field(&self) -> Result<Field> {
        initial_field(&self.init, self.grid)
    }
}

pub fn initial_field(init: &InitSpec, grid: Grid) -> Result<Field> {
    match init {
        InitSpec::Constant { mean } => Ok(Field::constant(grid, *mean)),
        InitSpec::Noise { mean, amplitude, seed } => Ok(noise_field(grid, *mean, *amplitude, *seed)),
        InitSpec::Cosine { mean, amplitude, mode } => {
            let lengths = grid.lengths().to_vec();
            let k = f64::from(*mode) * std::f64::consts::PI;
            Ok(Field::from_fn(grid, |x| {
                let mut c = (k * x[0] / lengths[0]).cos();
                if lengths.len() == 2 {
                    c *= (k * x[1] / lengths[1]).cos();
                }
                mean + amplitude * c
            }))
        }
        InitSpec::File { path } => {
            let (field, _) = snapshot::read(path)?;
            if field.grid() != &grid {
                return Err(CliError::Invalid(format!(
                    "initial snapshot {} does not match the configured grid",
                    path.display()
                )));
            }
            Ok(field)
        }
    }
}

/// `mean + amplitude · U(-1, 1)` per cell, shifted so the mean is exact.
pub fn noise_field(grid: Grid, mean: f64, amplitude: f64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..grid.len()).map(|_| amplitude * rng.random_range(-1.0..1.0)).collect();
    let shift = mean - v.iter().sum::<f64>() / v.len() as f64;
    for x in &mut v {
        *x += shift;
    }
    Field::new(grid, v, Default::default()).expect("finite noise")
}

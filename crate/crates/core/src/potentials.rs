//! Free-energy densities `F` with their first two derivatives, convex /
//! expansive splittings, and sampled audits of the structural hypotheses the
//! well-posedness theory relies on.

use crate::error::{Error, Result};
use crate::kernels::Kernel;

/// Distance to a singular endpoint below which evaluation is refused.
pub const ENDPOINT_GUARD: f64 = 1e-14;

/// `(F, F′, F″)` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
}

/// Interval of validity. Singular intervals are open and `F′` blows up at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub singular: bool,
}

impl Interval {
    pub fn contains(&self, s: f64) -> bool {
        if self.singular {
            s - self.lo >= ENDPOINT_GUARD && self.hi - s >= ENDPOINT_GUARD
        } else {
            s >= self.lo && s <= self.hi
        }
    }

    /// Distance to the nearer endpoint (infinite for unbounded intervals).
    pub fn margin(&self, s: f64) -> f64 {
        (s - self.lo).min(self.hi - s)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// Tabulated potential `(s, F, F′, F″)` with cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    s: Vec<f64>,
    f: Vec<f64>,
    df: Vec<f64>,
    d2f: Vec<f64>,
    shift: f64,
}

impl PotentialTable {
    pub fn new(s: Vec<f64>, f: Vec<f64>, df: Vec<f64>, d2f: Vec<f64>) -> Result<Self> {
        let n = s.len();
        if n < 2 || f.len() != n || df.len() != n || d2f.len() != n {
            return Err(Error::Config("potential table needs at least two complete rows".into()));
        }
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("potential table abscissae must be strictly increasing".into()));
        }
        if s.iter().chain(&f).chain(&df).chain(&d2f).any(|v| !v.is_finite()) {
            return Err(Error::Config("potential table contains non-finite entries".into()));
        }
        let mut table = PotentialTable {
            s,
            f,
            df,
            d2f,
            shift: 0.0,
        };
        // Convexity shift for the splitting: the interpolated F″ can dip below
        // the node values, so probe midpoints as well.
        let mut min_d2 = table.d2f.iter().copied().fold(f64::INFINITY, f64::min);
        for w in table.s.windows(2) {
            for t in [0.25, 0.5, 0.75] {
                min_d2 = min_d2.min(table.interp(w[0] + t * (w[1] - w[0])).d2f);
            }
        }
        table.shift = (-min_d2).max(0.0);
        Ok(table)
    }

    /// Parses rows of four numeric columns `s F F′ F″`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cols: [Vec<f64>; 4] = Default::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .collect();
            if row.len() != 4 {
                return Err(Error::Table {
                    line: lineno + 1,
                    message: format!("expected 4 columns, found {}", row.len()),
                });
            }
            for (c, tok) in cols.iter_mut().zip(row) {
                c.push(tok.parse::<f64>().map_err(|e| Error::Table {
                    line: lineno + 1,
                    message: format!("{tok:?}: {e}"),
                })?);
            }
        }
        let [s, f, df, d2f] = cols;
        Self::new(s, f, df, d2f)
    }

    fn interp(&self, x: f64) -> Derivatives {
        let n = self.s.len();
        let k = self.s.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.s[k], self.s[k + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        let f = h00 * self.f[k] + h * h10 * self.df[k] + h01 * self.f[k + 1] + h * h11 * self.df[k + 1];
        let df = h00 * self.df[k] + h * h10 * self.d2f[k] + h01 * self.df[k + 1] + h * h11 * self.d2f[k + 1];
        let d2f = d00 * self.df[k] + d10 * self.d2f[k] + d01 * self.df[k + 1] + d11 * self.d2f[k + 1];
        Derivatives { f, df, d2f }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `F(s) = (s² - 1)²` on ℝ.
    DoubleWell,
    /// `F(s) = (1+s)log(1+s) + (1-s)log(1-s) - λ s²` on (-1, 1).
    Logarithmic { lambda: f64 },
    /// `F(s) = s log s + (1-s) log(1-s)` on (0, 1).
    Entropy,
    Tabulated(PotentialTable),
}

fn xlogx_1p(s: f64) -> f64 {
    // (1 + s) log(1 + s), finite at s = -1.
    if s <= -1.0 {
        0.0
    } else {
        (1.0 + s) * s.ln_1p()
    }
}

fn xlogx(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        s * s.ln()
    }
}

impl Potential {
    pub fn logarithmic(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Config(format!("logarithmic potential needs lambda >= 0, got {lambda}")));
        }
        Ok(Potential::Logarithmic { lambda })
    }

    pub fn admissible(&self) -> Interval {
        match self {
            Potential::DoubleWell => Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                singular: false,
            },
            Potential::Logarithmic { .. } => Interval {
                lo: -1.0,
                hi: 1.0,
                singular: true,
            },
            Potential::Entropy => Interval {
                lo: 0.0,
                hi: 1.0,
                singular: true,
            },
            Potential::Tabulated(t) => Interval {
                lo: t.s[0],
                hi: *t.s.last().unwrap(),
                singular: false,
            },
        }
    }

    pub fn is_singular(&self) -> bool {
        self.admissible().singular
    }

    /// `(F, F′, F″)` at `s`, or a domain error outside the admissible interval.
    pub fn eval(&self, s: f64) -> Result<Derivatives> {
        let iv = self.admissible();
        if !s.is_finite() || !iv.contains(s) {
            return Err(Error::Domain {
                value: s,
                lo: iv.lo,
                hi: iv.hi,
            });
        }
        Ok(self.eval_unchecked(s))
    }

    pub(crate) fn eval_unchecked(&self, s: f64) -> Derivatives {
        let c = self.convex_unchecked(s);
        let e = self.expansive_unchecked(s);
        Derivatives {
            f: c.f + e.f,
            df: c.df + e.df,
            d2f: c.d2f + e.d2f,
        }
    }

    pub(crate) fn df(&self, s: f64) -> f64 {
        match self {
            Potential::DoubleWell => 4.0 * s * (s * s - 1.0),
            Potential::Logarithmic { lambda } => s.ln_1p() - (-s).ln_1p() - 2.0 * lambda * s,
            Potential::Entropy => s.ln() - (-s).ln_1p(),
            Potential::Tabulated(_) => self.eval_unchecked(s).df,
        }
    }

    pub(crate) fn f(&self, s: f64) -> f64 {
        match self {
            Potential::DoubleWell => {
                let q = s * s - 1.0;
                q * q
            }
            _ => self.eval_unchecked(s).f,
        }
    }

    pub(crate) fn convex_unchecked(&self, s: f64) -> Derivatives {
        match self {
            Potential::DoubleWell => Derivatives {
                f: s * s * s * s + 1.0,
                df: 4.0 * s * s * s,
                d2f: 12.0 * s * s,
            },
            Potential::Logarithmic { .. } => Derivatives {
                f: xlogx_1p(s) + xlogx_1p(-s),
                df: s.ln_1p() - (-s).ln_1p(),
                d2f: 2.0 / ((1.0 - s) * (1.0 + s)),
            },
            Potential::Entropy => Derivatives {
                f: xlogx(s) + xlogx(1.0 - s),
                df: s.ln() - (-s).ln_1p(),
                d2f: 1.0 / s + 1.0 / (1.0 - s),
            },
            Potential::Tabulated(t) => {
                let d = t.interp(s);
                Derivatives {
                    f: d.f + 0.5 * t.shift * s * s,
                    df: d.df + t.shift * s,
                    d2f: d.d2f + t.shift,
                }
            }
        }
    }

    pub(crate) fn expansive_unchecked(&self, s: f64) -> Derivatives {
        match self {
            Potential::DoubleWell => Derivatives {
                f: -2.0 * s * s,
                df: -4.0 * s,
                d2f: -4.0,
            },
            Potential::Logarithmic { lambda } => Derivatives {
                f: -lambda * s * s,
                df: -2.0 * lambda * s,
                d2f: -2.0 * lambda,
            },
            Potential::Entropy => Derivatives {
                f: 0.0,
                df: 0.0,
                d2f: 0.0,
            },
            Potential::Tabulated(t) => Derivatives {
                f: -0.5 * t.shift * s * s,
                df: -t.shift * s,
                d2f: -t.shift,
            },
        }
    }

    /// Splits `F = F_c + F_e` with `F_c` convex on the admissible interval.
    pub fn convex_split(&self) -> ConvexSplit<'_> {
        ConvexSplit { potential: self }
    }
}

/// Convex part `F_c` (treated implicitly) and expansive part `F_e` (explicit).
#[derive(Debug, Clone, Copy)]
pub struct ConvexSplit<'a> {
    potential: &'a Potential,
}

impl ConvexSplit<'_> {
    pub fn convex(&self, s: f64) -> Result<Derivatives> {
        self.potential.eval(s)?;
        Ok(self.potential.convex_unchecked(s))
    }

    pub fn expansive(&self, s: f64) -> Result<Derivatives> {
        self.potential.eval(s)?;
        Ok(self.potential.expansive_unchecked(s))
    }
}

/// Outcome of the sampled hypothesis audit.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    /// Sampled `inf F″`.
    pub inf_f2: f64,
    /// `inf F″ + min a` (coercivity constant).
    pub c0: f64,
    /// Largest ladder value `c₁` with `F(s) ≥ c₁ s² - c₂` on the samples.
    pub c1: f64,
    pub c2: f64,
    /// `c₁ - ½ ‖J‖_{L¹}`.
    pub c1_margin: f64,
    /// Largest `p ∈ {1.1, …, 2.0}` with `|F′|^p ≲ |F|` in the sampled tail.
    pub h4_p: Option<f64>,
    /// Measured growth exponent `q` of `F″` (unbounded intervals only).
    pub h5_q: Option<f64>,
    /// `inf F_c″ + min a + min F_e″` for singular potentials.
    pub h10_margin: Option<f64>,
    /// Sampled `C_F` in `F′(s) s ≥ F(s) - C_F`.
    pub c_f: f64,
    pub viscosity: f64,
    pub satisfied: HypothesisChecks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HypothesisChecks {
    pub h1: bool,
    pub h2: bool,
    pub h3: bool,
    pub h4: bool,
    pub h5: Option<bool>,
    pub h10: Option<bool>,
    pub h11: Option<bool>,
    /// Singular potentials need strictly positive viscosity.
    pub viscosity: Option<bool>,
}

const SAMPLE_COUNT: usize = 10_000;

/// Audit points: a uniform core plus geometric refinement toward the endpoints
/// (singular intervals) or far into the tails (unbounded intervals).
pub fn audit_samples(iv: &Interval) -> Vec<f64> {
    let core = 8001;
    let tail = (SAMPLE_COUNT - core) / 2;
    let mut out = Vec::with_capacity(SAMPLE_COUNT);
    if iv.is_bounded() {
        let (lo, hi) = (iv.lo, iv.hi);
        for k in 0..core {
            let t = if iv.singular {
                (k + 1) as f64 / (core + 1) as f64
            } else {
                k as f64 / (core - 1) as f64
            };
            out.push(lo + t * (hi - lo));
        }
        if iv.singular {
            for k in 0..tail {
                let d = 10f64.powf(-1.0 - 11.0 * k as f64 / (tail - 1) as f64);
                out.push(lo + d);
                out.push(hi - d);
            }
        }
    } else {
        for k in 0..core {
            out.push(-4.0 + 8.0 * k as f64 / (core - 1) as f64);
        }
        for k in 0..tail {
            let s = 10f64.powf(4f64.log10() + (4.0 - 4f64.log10()) * (k + 1) as f64 / tail as f64);
            out.push(s);
            out.push(-s);
        }
    }
    out
}

/// Pairs of (outer, inner) tail points used for growth-trend tests.
fn tail_probes(iv: &Interval) -> Vec<(f64, f64)> {
    if iv.singular {
        vec![(iv.lo + 1e-12, iv.lo + 1e-11), (iv.hi - 1e-12, iv.hi - 1e-11)]
    } else if !iv.is_bounded() {
        vec![(1e4, 1e3), (-1e4, -1e3)]
    } else {
        Vec::new()
    }
}

/// Samples every hypothesis inequality on a dense admissible lattice.
///
/// Failures are reported rather than raised, so hypothesis-violating regimes
/// can still be simulated deliberately.
pub fn check_hypotheses(p: &Potential, kernel: &Kernel, viscosity: f64) -> HypothesisReport {
    let iv = p.admissible();
    let samples = audit_samples(&iv);
    let min_a = kernel.ambient().min();
    let half_l1 = 0.5 * kernel.l1_norm();

    let evals: Vec<(f64, Derivatives)> = samples.iter().map(|&s| (s, p.eval_unchecked(s))).collect();
    let inf_f2 = evals.iter().map(|(_, d)| d.d2f).fold(f64::INFINITY, f64::min);
    let c0 = inf_f2 + min_a;

    let probes = tail_probes(&iv);
    let bounded_tail = |g: &dyn Fn(f64) -> f64| {
        !iv.is_bounded() || probes.is_empty() || probes.iter().all(|&(o, i)| g(o) <= g(i) * (1.0 + 1e-9) + 1e-12)
    };

    let mut c1 = 0.0;
    let mut c2 = f64::INFINITY;
    for k in -6..=20 {
        let cand = 2f64.powi(k);
        let g = |s: f64| cand * s * s - p.eval_unchecked(s).f;
        if !(bounded_tail(&g) || iv.is_bounded()) {
            break;
        }
        c1 = cand;
        c2 = evals.iter().map(|(s, d)| cand * s * s - d.f).fold(f64::NEG_INFINITY, f64::max);
    }
    let c1_margin = c1 - half_l1;

    let mut h4_p = None;
    if !probes.is_empty() {
        for k in 11..=20 {
            let pexp = k as f64 / 10.0;
            let ratio = |s: f64| {
                let d = p.eval_unchecked(s);
                d.df.abs().powf(pexp) / (d.f.abs() + 1.0)
            };
            if probes.iter().all(|&(o, i)| ratio(o) <= ratio(i) * (1.0 + 1e-9)) {
                h4_p = Some(pexp);
            }
        }
    } else {
        // Bounded regular interval: |F′|^p is bounded for every p.
        h4_p = Some(2.0);
    }

    let h5_q = if iv.is_bounded() {
        None
    } else {
        let g = |s: f64| p.eval_unchecked(s).d2f + min_a;
        let (s1, s2) = (1e2, 1e3);
        let (g1, g2) = (g(s1).min(g(-s1)), g(s2).min(g(-s2)));
        (g1 > 0.0 && g2 > 0.0).then(|| (g2 / g1).ln() / (2.0 * (s2 / s1).ln()))
    };

    let h10_margin = iv.singular.then(|| {
        let inf_fc2 = samples.iter().map(|&s| p.convex_unchecked(s).d2f).fold(f64::INFINITY, f64::min);
        let min_fe2 = samples.iter().map(|&s| p.expansive_unchecked(s).d2f).fold(f64::INFINITY, f64::min);
        inf_fc2 + min_a + min_fe2
    });

    let h11 = iv.singular.then(|| {
        let lo = p.eval_unchecked(iv.lo + 1e-12).df;
        let hi = p.eval_unchecked(iv.hi - 1e-12).df;
        let lo_in = p.eval_unchecked(iv.lo + 1e-6).df;
        let hi_in = p.eval_unchecked(iv.hi - 1e-6).df;
        lo < lo_in && hi > hi_in && lo < -10.0 && hi > 10.0
    });

    let c_f = evals.iter().map(|(s, d)| d.f - d.df * s).fold(f64::NEG_INFINITY, f64::max);

    HypothesisReport {
        inf_f2,
        c0,
        c1,
        c2,
        c1_margin,
        h4_p,
        h5_q,
        h10_margin,
        c_f,
        viscosity,
        satisfied: HypothesisChecks {
            h1: min_a >= -1e-12,
            h2: c0 > 0.0,
            h3: c1_margin > 0.0 && c2.is_finite(),
            h4: h4_p.is_some(),
            h5: h5_q.map(|q| q > 0.0),
            h10: h10_margin.map(|m| m > 0.0),
            h11,
            viscosity: iv.singular.then_some(viscosity > 0.0),
        },
    }
}

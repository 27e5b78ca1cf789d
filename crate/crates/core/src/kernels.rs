//! Interaction kernels and the truncated-domain convolution
//! `(J * f)(x) = ∫_Ω J(x - y) f(y) dy`.
//!
//! The kernel is sampled at every lattice offset `(mx hx, my hy)` with
//! `|mx| < nx`, `|my| < ny`. Convolution zero-pads the field to twice the grid
//! size on each axis, so the FFT product reproduces the linear (not circular)
//! quadrature sum exactly up to rounding.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{grad, Field, FieldTag, Grid, VectorField};

/// Piecewise-linear radial profile `r ↦ J(r)`, zero beyond the last radius.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTable {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl RadialTable {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::Config("radial table needs at least two (radius, value) rows".into()));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("radial table radii must be nonnegative and strictly increasing".into()));
        }
        if radii.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Config("radial table contains non-finite entries".into()));
        }
        Ok(RadialTable { radii, values })
    }

    /// Parses whitespace-separated `radius value` rows; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(Error::Table {
                    line: lineno + 1,
                    message: format!("expected 2 columns, found {}", cols.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Table {
                    line: lineno + 1,
                    message: format!("{s:?}: {e}"),
                })
            };
            radii.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
        }
        Self::new(radii, values)
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.segment(r).map_or(0.0, |(k, t)| (1.0 - t) * self.values[k] + t * self.values[k + 1])
    }

    /// Slope of the active segment (zero outside the table).
    pub fn slope(&self, r: f64) -> f64 {
        self.segment(r).map_or(0.0, |(k, _)| {
            (self.values[k + 1] - self.values[k]) / (self.radii[k + 1] - self.radii[k])
        })
    }

    fn segment(&self, r: f64) -> Option<(usize, f64)> {
        let last = *self.radii.last().unwrap();
        if r > last {
            return None;
        }
        let r = r.max(self.radii[0]);
        let k = match self.radii.partition_point(|&x| x <= r) {
            0 => 0,
            p => (p - 1).min(self.radii.len() - 2),
        };
        let t = (r - self.radii[k]) / (self.radii[k + 1] - self.radii[k]);
        Some((k, t))
    }

    fn scaled(&self, s: f64) -> Self {
        RadialTable {
            radii: self.radii.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelProfile {
    /// `J(x) = c_J exp(-ξ |x|²)`.
    Gaussian { cj: f64, xi: f64 },
    /// `J(x) = -c_J log |x|`, two dimensions only.
    Newtonian2d { cj: f64 },
    Custom(RadialTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub profile: KernelProfile,
    /// Truncation radius; `J = 0` beyond it. Newtonian kernels default to half
    /// the domain diagonal.
    pub cutoff: Option<f64>,
    /// Replace the singular origin sample of the Newtonian kernel by its exact
    /// cell average.
    pub regularize: bool,
}

impl KernelSpec {
    pub fn gaussian(cj: f64, xi: f64) -> Self {
        KernelSpec {
            profile: KernelProfile::Gaussian { cj, xi },
            cutoff: None,
            regularize: true,
        }
    }

    /// Gaussian with unit mass on the whole line: `c_J = (ξ/π)^{1/2}`.
    pub fn unit_gaussian_1d(xi: f64) -> Self {
        Self::gaussian((xi / std::f64::consts::PI).sqrt(), xi)
    }

    pub fn newtonian2d(cj: f64) -> Self {
        KernelSpec {
            profile: KernelProfile::Newtonian2d { cj },
            cutoff: None,
            regularize: true,
        }
    }

    pub fn custom(table: RadialTable) -> Self {
        KernelSpec {
            profile: KernelProfile::Custom(table),
            cutoff: None,
            regularize: true,
        }
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    /// Same profile multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let profile = match &self.profile {
            KernelProfile::Gaussian { cj, xi } => KernelProfile::Gaussian { cj: cj * s, xi: *xi },
            KernelProfile::Newtonian2d { cj } => KernelProfile::Newtonian2d { cj: cj * s },
            KernelProfile::Custom(t) => KernelProfile::Custom(t.scaled(s)),
        };
        KernelSpec {
            profile,
            cutoff: self.cutoff,
            regularize: self.regularize,
        }
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        match &self.profile {
            KernelProfile::Gaussian { cj, xi } => {
                if !(*cj >= 0.0 && cj.is_finite()) || !(*xi > 0.0 && xi.is_finite()) {
                    return Err(Error::Config(format!("gaussian kernel needs c_J >= 0 and xi > 0 (got {cj}, {xi})")));
                }
            }
            KernelProfile::Newtonian2d { cj } => {
                if grid.dim() != 2 {
                    return Err(Error::Config("the Newtonian kernel is two-dimensional".into()));
                }
                if !(*cj >= 0.0 && cj.is_finite()) {
                    return Err(Error::Config(format!("Newtonian kernel needs c_J >= 0 (got {cj})")));
                }
                if !self.regularize {
                    return Err(Error::KernelHypothesis(
                        "Newtonian kernel is singular at the origin; enable regularization".into(),
                    ));
                }
            }
            KernelProfile::Custom(_) => {}
        }
        if let Some(c) = self.cutoff {
            if !(c > 0.0) {
                return Err(Error::Config(format!("cutoff must be positive, got {c}")));
            }
        }
        Ok(())
    }

    fn effective_cutoff(&self, grid: &Grid) -> f64 {
        match (self.cutoff, &self.profile) {
            (Some(c), _) => c,
            (None, KernelProfile::Newtonian2d { .. }) => {
                0.5 * grid.lengths().iter().map(|l| l * l).sum::<f64>().sqrt()
            }
            _ => f64::INFINITY,
        }
    }

    fn radial(&self, r: f64) -> f64 {
        match &self.profile {
            KernelProfile::Gaussian { cj, xi } => cj * (-xi * r * r).exp(),
            KernelProfile::Newtonian2d { cj } => -cj * r.ln(),
            KernelProfile::Custom(t) => t.eval(r),
        }
    }

    fn radial_slope(&self, r: f64) -> f64 {
        match &self.profile {
            KernelProfile::Gaussian { cj, xi } => -2.0 * xi * r * cj * (-xi * r * r).exp(),
            KernelProfile::Newtonian2d { cj } => -cj / r,
            KernelProfile::Custom(t) => t.slope(r),
        }
    }
}

/// `∫_0^a ∫_0^b ln(x² + y²) dy dx`.
pub(crate) fn log_square_integral(a: f64, b: f64) -> f64 {
    a * b * (a * a + b * b).ln() - 3.0 * a * b + a * a * (b / a).atan() + b * b * (a / b).atan()
}

/// `∫_0^a ∫_0^b (x² + y²)^{-1/2} dy dx`.
fn inverse_radius_integral(a: f64, b: f64) -> f64 {
    a * (b / a).asinh() + b * (a / b).asinh()
}

/// A kernel discretized on a grid, with cached spectrum and ambient field.
#[derive(Clone)]
pub struct Kernel {
    spec: KernelSpec,
    grid: Grid,
    table: Vec<f64>,
    padded: [usize; 2],
    spectrum: Vec<Complex<f64>>,
    fft_fwd: [Arc<dyn Fft<f64>>; 2],
    fft_inv: [Arc<dyn Fft<f64>>; 2],
    ambient: Field,
    l1_norm: f64,
    grad_l1_norm: f64,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("spec", &self.spec)
            .field("grid", &self.grid)
            .field("l1_norm", &self.l1_norm)
            .field("grad_l1_norm", &self.grad_l1_norm)
            .finish()
    }
}

impl Kernel {
    /// Samples `spec` on the offset lattice of `grid` and caches everything the
    /// convolution needs.
    pub fn build(spec: KernelSpec, grid: Grid) -> Result<Self> {
        spec.validate(&grid)?;
        let [nx, ny] = grid.counts2();
        let h = grid.spacing2();
        let (tx, ty) = (2 * nx - 1, 2 * ny - 1);
        let cutoff = spec.effective_cutoff(&grid);
        let singular = matches!(spec.profile, KernelProfile::Newtonian2d { .. });
        let vol = grid.cell_volume();

        let mut table = vec![0.0; tx * ty];
        let mut l1 = 0.0;
        let mut grad_l1 = 0.0;
        for ox in 0..tx {
            let mx = ox as isize - (nx as isize - 1);
            for oy in 0..ty {
                let my = oy as isize - (ny as isize - 1);
                let (dx, dy) = (mx as f64 * h[0], my as f64 * h[1]);
                let r = (dx * dx + dy * dy).sqrt();
                let (value, slope_integral) = if mx == 0 && my == 0 && singular {
                    let KernelProfile::Newtonian2d { cj } = spec.profile else { unreachable!() };
                    let (a, b) = (0.5 * h[0], 0.5 * h[1]);
                    let mean_log_r = 0.5 * log_square_integral(a, b) / (a * b);
                    (-cj * mean_log_r, 4.0 * cj * inverse_radius_integral(a, b))
                } else if r > cutoff {
                    (0.0, 0.0)
                } else {
                    (spec.radial(r), spec.radial_slope(r).abs() * vol)
                };
                table[ox * ty + oy] = value;
                l1 += value.abs() * vol;
                grad_l1 += slope_integral;
            }
        }

        let padded = [if nx > 1 { 2 * nx } else { 1 }, if ny > 1 { 2 * ny } else { 1 }];
        let mut planner = FftPlanner::new();
        let fft_fwd = [planner.plan_fft_forward(padded[0]), planner.plan_fft_forward(padded[1])];
        let fft_inv = [planner.plan_fft_inverse(padded[0]), planner.plan_fft_inverse(padded[1])];

        let mut spectrum = vec![Complex::new(0.0, 0.0); padded[0] * padded[1]];
        for ox in 0..tx {
            let mx = ox as isize - (nx as isize - 1);
            let px = mx.rem_euclid(padded[0] as isize) as usize;
            for oy in 0..ty {
                let my = oy as isize - (ny as isize - 1);
                let py = my.rem_euclid(padded[1] as isize) as usize;
                spectrum[px * padded[1] + py] = Complex::new(table[ox * ty + oy] * vol, 0.0);
            }
        }
        fft2(&mut spectrum, padded, &fft_fwd);

        let mut kernel = Kernel {
            spec,
            grid,
            table,
            padded,
            spectrum,
            fft_fwd,
            fft_inv,
            ambient: Field::zeros(grid),
            l1_norm: l1,
            grad_l1_norm: grad_l1,
        };
        let ambient = kernel.convolve_raw(&vec![1.0; grid.len()]);
        if let Some((k, &a)) = ambient.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)) {
            if a < -1e-12 {
                return Err(Error::KernelHypothesis(format!(
                    "ambient field a(x) = J*1 is negative ({a:e}) at cell {k}"
                )));
            }
        }
        kernel.ambient = Field::from_raw(grid, ambient, FieldTag::Ambient);
        Ok(kernel)
    }

    /// Builds the kernel rescaled so that its discrete `‖J‖_{L¹}` equals `target`.
    pub fn build_normalized(spec: KernelSpec, grid: Grid, target: f64) -> Result<Self> {
        let probe = Kernel::build(spec.clone(), grid)?;
        if probe.l1_norm <= 0.0 {
            return Err(Error::Config("cannot normalize a kernel with zero L1 norm".into()));
        }
        Kernel::build(spec.scaled(target / probe.l1_norm), grid)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `a(x) = (J * 1)(x)`.
    pub fn ambient(&self) -> &Field {
        &self.ambient
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    pub fn grad_l1_norm(&self) -> f64 {
        self.grad_l1_norm
    }

    /// Tabulated kernel value at lattice offset `(mx, my)`; zero outside the table.
    pub fn offset_value(&self, mx: isize, my: isize) -> f64 {
        let [nx, ny] = self.grid.counts2();
        let (ox, oy) = (mx + nx as isize - 1, my + ny as isize - 1);
        let (tx, ty) = (2 * nx as isize - 1, 2 * ny as isize - 1);
        if ox < 0 || oy < 0 || ox >= tx || oy >= ty {
            return 0.0;
        }
        self.table[(ox * ty + oy) as usize]
    }

    pub(crate) fn convolve_raw(&self, f: &[f64]) -> Vec<f64> {
        let [nx, ny] = self.grid.counts2();
        let [px, py] = self.padded;
        let mut buf = vec![Complex::new(0.0, 0.0); px * py];
        for i in 0..nx {
            for j in 0..ny {
                buf[i * py + j].re = f[i * ny + j];
            }
        }
        fft2(&mut buf, self.padded, &self.fft_fwd);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        fft2(&mut buf, self.padded, &self.fft_inv);
        let scale = 1.0 / (px * py) as f64;
        let mut out = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                out[i * ny + j] = buf[i * py + j].re * scale;
            }
        }
        out
    }

    /// Truncated-domain convolution `J * f`.
    pub fn convolve(&self, f: &Field) -> Result<Field> {
        self.check_grid(f)?;
        Ok(Field::from_raw(self.grid, self.convolve_raw(f.values()), FieldTag::Auxiliary))
    }

    /// `∇(J * f)` on faces.
    pub fn grad_convolve(&self, f: &Field) -> Result<VectorField> {
        Ok(grad(&self.convolve(f)?))
    }

    fn check_grid(&self, f: &Field) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::Usage("field and kernel live on different grids".into()));
        }
        Ok(())
    }
}

fn fft2(buf: &mut [Complex<f64>], padded: [usize; 2], plans: &[Arc<dyn Fft<f64>>; 2]) {
    let [px, py] = padded;
    if py > 1 {
        plans[1].process(buf);
    }
    if px > 1 {
        let mut col = vec![Complex::new(0.0, 0.0); px];
        for j in 0..py {
            for i in 0..px {
                col[i] = buf[i * py + j];
            }
            plans[0].process(&mut col);
            for i in 0..px {
                buf[i * py + j] = col[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_even() {
        for (spec, grid) in [
            (KernelSpec::gaussian(1.3, 40.0), Grid::new_1d(1.0, 17).unwrap()),
            (KernelSpec::gaussian(1.3, 40.0), Grid::new_2d([1.0, 0.5], [9, 6]).unwrap()),
            (KernelSpec::newtonian2d(0.7), Grid::new_2d([1.0, 1.0], [8, 8]).unwrap()),
        ] {
            let k = Kernel::build(spec, grid).unwrap();
            let [nx, ny] = grid.counts2();
            for mx in -(nx as isize - 1)..nx as isize {
                for my in -(ny as isize - 1)..ny as isize {
                    assert_eq!(k.offset_value(mx, my), k.offset_value(-mx, -my));
                }
            }
        }
    }

    #[test]
    fn newtonian_needs_regularization_and_two_dims() {
        let g2 = Grid::new_2d([1.0, 1.0], [8, 8]).unwrap();
        let mut spec = KernelSpec::newtonian2d(1.0).with_cutoff(0.01);
        spec.regularize = false;
        assert!(matches!(Kernel::build(spec, g2), Err(Error::KernelHypothesis(_))));
        let g1 = Grid::new_1d(1.0, 8).unwrap();
        assert!(matches!(Kernel::build(KernelSpec::newtonian2d(1.0), g1), Err(Error::Config(_))));
    }

    #[test]
    fn log_cell_integral_matches_quadrature() {
        // Midpoint rule on a fine lattice; the log singularity is integrable and
        // sits at a corner, so convergence is slow but sufficient here.
        let (a, b) = (0.3, 0.2);
        let n = 2000;
        let (hx, hy) = (a / n as f64, b / n as f64);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (x, y) = ((i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy);
                s += (x * x + y * y).ln();
            }
        }
        s *= hx * hy;
        assert!((s - log_square_integral(a, b)).abs() < 1e-6, "{s} vs {}", log_square_integral(a, b));
    }

    #[test]
    fn negative_ambient_is_rejected() {
        let t = RadialTable::new(vec![0.0, 1.0], vec![-1.0, -1.0]).unwrap();
        let g = Grid::new_1d(1.0, 8).unwrap();
        assert!(matches!(Kernel::build(KernelSpec::custom(t), g), Err(Error::KernelHypothesis(_))));
    }

    #[test]
    fn radial_table_parsing() {
        let t = RadialTable::parse("# r J\n0 2.0\n0.5 1.0\n\n1.0 0.0\n").unwrap();
        assert_eq!(t.eval(0.25), 1.5);
        assert_eq!(t.eval(2.0), 0.0);
        assert_eq!(t.slope(0.75), -2.0);
        assert!(matches!(RadialTable::parse("0 1\n0.5\n"), Err(Error::Table { line: 2, .. })));
        assert!(RadialTable::parse("0 1\n0 2\n").is_err());
    }

    #[test]
    fn grid_mismatch_is_usage_error() {
        let k = Kernel::build(KernelSpec::gaussian(1.0, 10.0), Grid::new_1d(1.0, 8).unwrap()).unwrap();
        let f = Field::zeros(Grid::new_1d(1.0, 9).unwrap());
        assert!(matches!(k.convolve(&f), Err(Error::Usage(_))));
    }

    #[test]
    fn normalization_hits_target() {
        let g = Grid::new_1d(1.0, 64).unwrap();
        let k = Kernel::build_normalized(KernelSpec::gaussian(1.0, 100.0), g, 1.0).unwrap();
        assert!((k.l1_norm() - 1.0).abs() < 1e-13);
    }
}

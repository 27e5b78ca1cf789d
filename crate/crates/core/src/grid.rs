//! Uniform cell-centered grids on boxes with no-flux (Neumann) structure.
//!
//! Fields are stored row-major: in 2D the cell `(i, j)` lives at `i * ny + j`.
//! A 1D grid is represented internally as an `nx x 1` lattice whose trailing
//! axis has unit spacing, so cell volumes and domain measures need no special
//! casing.

use crate::error::{Error, Result};
use crate::spectral::NeumannSpectral;

/// Uniform cell-centered rectangular lattice in one or two dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    lengths: [f64; 2],
    counts: [usize; 2],
}

impl Grid {
    /// Builds a grid of `dim` axes. `lengths` and `counts` must have `dim` entries.
    pub fn new(dim: usize, lengths: &[f64], counts: &[usize]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if lengths.len() != dim || counts.len() != dim {
            return Err(Error::Config(format!(
                "expected {dim} lengths and counts, got {} and {}",
                lengths.len(),
                counts.len()
            )));
        }
        let mut g = Grid {
            dim,
            lengths: [1.0; 2],
            counts: [1; 2],
        };
        for axis in 0..dim {
            let (l, n) = (lengths[axis], counts[axis]);
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config(format!("length on axis {axis} must be positive, got {l}")));
            }
            if n == 0 {
                return Err(Error::Config(format!("cell count on axis {axis} must be positive")));
            }
            g.lengths[axis] = l;
            g.counts[axis] = n;
        }
        Ok(g)
    }

    pub fn new_1d(length: f64, count: usize) -> Result<Self> {
        Self::new(1, &[length], &[count])
    }

    pub fn new_2d(lengths: [f64; 2], counts: [usize; 2]) -> Result<Self> {
        Self::new(2, &lengths, &counts)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    /// Counts padded to two axes (`[n, 1]` in 1D).
    pub(crate) fn counts2(&self) -> [usize; 2] {
        self.counts
    }

    pub(crate) fn spacing2(&self) -> [f64; 2] {
        [
            self.lengths[0] / self.counts[0] as f64,
            self.lengths[1] / self.counts[1] as f64,
        ]
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.spacing2()[..self.dim].to_vec()
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing2();
        h[0] * h[1]
    }

    /// |Ω|, the product of the axis lengths.
    pub fn measure(&self) -> f64 {
        self.lengths[0] * self.lengths[1]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.counts[1] + j
    }

    /// Center of cell `idx`; the trailing entry is zero in 1D.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing2();
        let (i, j) = (idx / self.counts[1], idx % self.counts[1]);
        let y = if self.dim == 2 { (j as f64 + 0.5) * h[1] } else { 0.0 };
        [(i as f64 + 0.5) * h[0], y]
    }

    /// Cell centers along one axis.
    pub fn axis_centers(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing2()[axis];
        (0..self.counts[axis]).map(|k| (k as f64 + 0.5) * h).collect()
    }

    /// Smallest nonzero eigenvalue of `-Δ_N` on this grid (the discrete λ₁).
    pub fn first_eigenvalue(&self) -> f64 {
        let h = self.spacing2();
        (0..self.dim)
            .filter(|&a| self.counts[a] > 1)
            .map(|a| {
                let n = self.counts[a] as f64;
                2.0 / (h[a] * h[a]) * (1.0 - (std::f64::consts::PI / n).cos())
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Semantic label carried by a [`Field`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldTag {
    #[default]
    OrderParameter,
    ChemicalPotential,
    Ambient,
    Auxiliary,
}

/// Scalar cell values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
    tag: FieldTag,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, tag: FieldTag) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "field has {} values but the grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite field value at cell {k}")));
        }
        Ok(Field { grid, values, tag })
    }

    /// Builds a field without the finiteness scan; used on hot paths whose
    /// callers check for blow-up separately.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>, tag: FieldTag) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values, tag }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Field::from_raw(grid, vec![c; grid.len()], FieldTag::OrderParameter)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.center(k))).collect();
        Field::from_raw(grid, values, FieldTag::OrderParameter)
    }

    pub fn with_tag(mut self, tag: FieldTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn tag(&self) -> FieldTag {
        self.tag
    }

    /// Volume-weighted average; the arithmetic mean on a uniform grid.
    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Discrete L² product `Σ f g |cell|`.
    pub fn inner(&self, other: &Field) -> f64 {
        dot(&self.values, &other.values) * self.grid.cell_volume()
    }

    /// Discrete L² norm, the ‖·‖_H of the analysis.
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `self - other`, keeping this field's grid and tag.
    pub fn sub(&self, other: &Field) -> Field {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Field::from_raw(self.grid, values, self.tag)
    }

    pub fn add(&self, other: &Field) -> Field {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Field::from_raw(self.grid, values, self.tag)
    }

    pub fn scale(&self, s: f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|v| s * v).collect(), self.tag)
    }

    /// Same field shifted to zero mean.
    pub fn zero_mean(&self) -> Field {
        let m = self.mean();
        Field::from_raw(self.grid, self.values.iter().map(|v| v - m).collect(), self.tag)
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Face-centered vector field on the staggered lattice.
///
/// Component `a` has `counts[a] + 1` faces along axis `a`; the first and last
/// faces lie on the boundary and always carry zero normal flux.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        let components = (0..grid.dim()).map(|a| vec![0.0; face_count(&grid, a)]).collect();
        VectorField { grid, components }
    }

    /// Builds a vector field from face values; boundary faces are forced to zero.
    pub fn from_faces(grid: Grid, mut components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::Config("one component per axis required".into()));
        }
        for (a, c) in components.iter_mut().enumerate() {
            if c.len() != face_count(&grid, a) {
                return Err(Error::Config(format!(
                    "component {a} has {} faces, expected {}",
                    c.len(),
                    face_count(&grid, a)
                )));
            }
            zero_boundary_faces(&grid, a, c);
        }
        Ok(VectorField { grid, components })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    /// Discrete L² product over faces, weighted by the cell volume.
    pub fn inner(&self, other: &VectorField) -> f64 {
        let s: f64 = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| dot(a, b))
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn norm_squared(&self) -> f64 {
        self.inner(self)
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        VectorField {
            grid: self.grid,
            components,
        }
    }
}

pub(crate) fn face_count(grid: &Grid, axis: usize) -> usize {
    let [nx, ny] = grid.counts2();
    if axis == 0 {
        (nx + 1) * ny
    } else {
        nx * (ny + 1)
    }
}

fn zero_boundary_faces(grid: &Grid, axis: usize, c: &mut [f64]) {
    let [nx, ny] = grid.counts2();
    if axis == 0 {
        for j in 0..ny {
            c[j] = 0.0;
            c[nx * ny + j] = 0.0;
        }
    } else {
        for i in 0..nx {
            c[i * (ny + 1)] = 0.0;
            c[i * (ny + 1) + ny] = 0.0;
        }
    }
}

/// Face differences `(f_R - f_L) / h` with zero flux on the boundary.
pub(crate) fn grad_raw(grid: &Grid, f: &[f64]) -> Vec<Vec<f64>> {
    let [nx, ny] = grid.counts2();
    let h = grid.spacing2();
    let mut out = Vec::with_capacity(grid.dim());
    let mut gx = vec![0.0; (nx + 1) * ny];
    for i in 1..nx {
        for j in 0..ny {
            gx[i * ny + j] = (f[i * ny + j] - f[(i - 1) * ny + j]) / h[0];
        }
    }
    out.push(gx);
    if grid.dim() == 2 {
        let mut gy = vec![0.0; nx * (ny + 1)];
        for i in 0..nx {
            for j in 1..ny {
                gy[i * (ny + 1) + j] = (f[i * ny + j] - f[i * ny + j - 1]) / h[1];
            }
        }
        out.push(gy);
    }
    out
}

pub(crate) fn div_raw(grid: &Grid, components: &[Vec<f64>]) -> Vec<f64> {
    let [nx, ny] = grid.counts2();
    let h = grid.spacing2();
    let mut out = vec![0.0; nx * ny];
    let gx = &components[0];
    for i in 0..nx {
        for j in 0..ny {
            out[i * ny + j] = (gx[(i + 1) * ny + j] - gx[i * ny + j]) / h[0];
        }
    }
    if grid.dim() == 2 {
        let gy = &components[1];
        for i in 0..nx {
            for j in 0..ny {
                out[i * ny + j] += (gy[i * (ny + 1) + j + 1] - gy[i * (ny + 1) + j]) / h[1];
            }
        }
    }
    out
}

/// Arithmetic mean of the two neighbouring cells on every interior face.
pub(crate) fn face_average_raw(grid: &Grid, f: &[f64]) -> Vec<Vec<f64>> {
    let [nx, ny] = grid.counts2();
    let mut out = Vec::with_capacity(grid.dim());
    let mut fx = vec![0.0; (nx + 1) * ny];
    for i in 1..nx {
        for j in 0..ny {
            fx[i * ny + j] = 0.5 * (f[i * ny + j] + f[(i - 1) * ny + j]);
        }
    }
    out.push(fx);
    if grid.dim() == 2 {
        let mut fy = vec![0.0; nx * (ny + 1)];
        for i in 0..nx {
            for j in 1..ny {
                fy[i * (ny + 1) + j] = 0.5 * (f[i * ny + j] + f[i * ny + j - 1]);
            }
        }
        out.push(fy);
    }
    out
}

pub(crate) fn laplacian_raw(grid: &Grid, f: &[f64]) -> Vec<f64> {
    div_raw(grid, &grad_raw(grid, f))
}


/// Face-centered gradient with zero normal component on the boundary.
pub fn grad(f: &Field) -> VectorField {
    VectorField {
        grid: f.grid,
        components: grad_raw(&f.grid, &f.values),
    }
}

/// Discrete divergence, the negative adjoint of [`grad`].
pub fn div(v: &VectorField) -> Field {
    Field::from_raw(v.grid, div_raw(&v.grid, &v.components), FieldTag::Auxiliary)
}

/// `Δ_N f`, defined as `div(grad f)` so the two stay exactly compatible.
pub fn neumann_laplacian(f: &Field) -> Field {
    Field::from_raw(f.grid, laplacian_raw(&f.grid, &f.values), f.tag)
}

/// Zero-mean tolerance used by [`inv_neumann_laplacian`].
pub fn mean_tolerance(f: &Field) -> f64 {
    1e-10 * (f.norm() + 1.0)
}

/// `N f = A_N⁻¹ f`: the zero-mean solution `u` of `-Δ_N u = f`.
pub fn inv_neumann_laplacian(f: &Field) -> Result<Field> {
    let spectral = NeumannSpectral::new(f.grid);
    inv_neumann_laplacian_with(&spectral, f)
}

pub fn inv_neumann_laplacian_with(spectral: &NeumannSpectral, f: &Field) -> Result<Field> {
    let m = f.mean();
    let tol = mean_tolerance(f);
    if m.abs() > tol {
        return Err(Error::MeanConstraint { mean: m, tol });
    }
    let mut u = f.values.clone();
    spectral.solve_neg_laplacian(&mut u);
    Ok(Field::from_raw(f.grid, u, f.tag))
}

/// `sqrt(⟨f₀, N f₀⟩ + ⟨f⟩²)` with `f₀ = f - ⟨f⟩`.
pub fn vprime_norm(f: &Field) -> f64 {
    let spectral = NeumannSpectral::new(f.grid);
    vprime_norm_with(&spectral, f)
}

pub fn vprime_norm_with(spectral: &NeumannSpectral, f: &Field) -> f64 {
    let m = f.mean();
    let mut u: Vec<f64> = f.values.iter().map(|v| v - m).collect();
    let f0 = u.clone();
    spectral.solve_neg_laplacian(&mut u);
    let q = dot(&f0, &u) * f.grid.cell_volume();
    (q.max(0.0) + m * m).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_grid_examples() {
        let g = Grid::new_1d(1.0, 4).unwrap();
        assert_eq!(g.spacing(), vec![0.25]);
        assert_eq!(g.axis_centers(0), vec![0.125, 0.375, 0.625, 0.875]);

        let g = Grid::new_2d([2.0, 1.0], [8, 4]).unwrap();
        assert_eq!(g.spacing(), vec![0.25, 0.25]);
        assert_eq!(g.measure(), 2.0);
        assert_eq!(g.cell_volume(), 0.0625);

        assert!(matches!(Grid::new_1d(1.0, 0), Err(Error::Config(_))));
        assert!(matches!(Grid::new_1d(-1.0, 4), Err(Error::Config(_))));
        assert!(matches!(Grid::new(3, &[1.0; 3], &[2; 3]), Err(Error::Config(_))));
    }

    #[test]
    fn mean_examples() {
        let g = Grid::new_1d(1.0, 37).unwrap();
        assert!((Field::constant(g, 0.3).mean() - 0.3).abs() < 1e-15);
        let x = Field::from_fn(g, |p| p[0]);
        assert!((x.mean() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constants_are_harmonic() {
        let g = Grid::new_2d([1.0, 2.0], [5, 7]).unwrap();
        let lap = neumann_laplacian(&Field::constant(g, 3.0));
        assert!(lap.values().iter().all(|&v| v == 0.0));
        assert!(grad(&Field::constant(g, 3.0)).component(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_mean_is_rejected() {
        let g = Grid::new_1d(1.0, 16).unwrap();
        let err = inv_neumann_laplacian(&Field::constant(g, 1.0)).unwrap_err();
        assert!(matches!(err, Error::MeanConstraint { .. }));
        let zero = inv_neumann_laplacian(&Field::zeros(g)).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vprime_of_constants() {
        let g = Grid::new_1d(1.0, 16).unwrap();
        assert!((vprime_norm(&Field::constant(g, -0.7)) - 0.7).abs() < 1e-15);
        assert_eq!(vprime_norm(&Field::zeros(g)), 0.0);
    }

    #[test]
    fn div_grad_is_laplacian_bitwise() {
        let g = Grid::new_1d(1.0, 16).unwrap();
        let f = Field::from_fn(g, |p| (7.0 * p[0]).sin() + p[0] * p[0]);
        assert_eq!(div(&grad(&f)).values(), neumann_laplacian(&f).values());
    }

    #[test]
    fn boundary_faces_forced_to_zero() {
        let g = Grid::new_1d(1.0, 3).unwrap();
        let v = VectorField::from_faces(g, vec![vec![1.0; 4]]).unwrap();
        assert_eq!(v.component(0), &[0.0, 1.0, 1.0, 0.0]);
    }
}

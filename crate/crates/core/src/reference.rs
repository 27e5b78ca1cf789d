//! Brute-force O(N²) reference implementations.
//!
//! These share no code with the FFT and DCT paths and are intended as test
//! oracles on small grids.

use crate::grid::{Field, Grid};
use crate::kernels::Kernel;
use crate::potentials::Potential;
use crate::Result;

/// Direct double-loop quadrature of `(J * f)(x_i) = Σ_j J(x_i - x_j) f_j vol`.
pub fn direct_convolve(kernel: &Kernel, f: &Field) -> Vec<f64> {
    let [nx, ny] = f.grid().counts2();
    let vol = f.grid().cell_volume();
    let v = f.values();
    let mut out = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let mut acc = 0.0;
            for k in 0..nx {
                for l in 0..ny {
                    let w = kernel.offset_value(i as isize - k as isize, j as isize - l as isize);
                    acc += w * v[k * ny + l];
                }
            }
            out[i * ny + j] = acc * vol;
        }
    }
    out
}

/// `¼ ΣΣ J(x_i - x_j)(φ_i - φ_j)² vol² + Σ F(φ_i) vol`.
pub fn direct_energy(kernel: &Kernel, potential: &Potential, phi: &Field) -> Result<f64> {
    let [nx, ny] = phi.grid().counts2();
    let vol = phi.grid().cell_volume();
    let v = phi.values();
    let mut interaction = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            let p = v[i * ny + j];
            for k in 0..nx {
                for l in 0..ny {
                    let d = p - v[k * ny + l];
                    interaction += kernel.offset_value(i as isize - k as isize, j as isize - l as isize) * d * d;
                }
            }
        }
    }
    let mut bulk = 0.0;
    for &s in v {
        bulk += potential.eval(s)?.f;
    }
    Ok(0.25 * interaction * vol * vol + bulk * vol)
}

/// Dense matrix of the reflecting-ghost Neumann Laplacian, row-major `n × n`.
pub fn dense_neumann_laplacian(grid: &Grid) -> Vec<f64> {
    let [nx, ny] = grid.counts2();
    let h = grid.spacing2();
    let n = nx * ny;
    let mut m = vec![0.0; n * n];
    let mut couple = |a: usize, b: usize, w: f64| {
        m[a * n + b] += w;
        m[a * n + a] -= w;
    };
    for i in 0..nx {
        for j in 0..ny {
            let c = i * ny + j;
            let wx = 1.0 / (h[0] * h[0]);
            if i > 0 {
                couple(c, c - ny, wx);
            }
            if i + 1 < nx {
                couple(c, c + ny, wx);
            }
            if grid.dim() == 2 {
                let wy = 1.0 / (h[1] * h[1]);
                if j > 0 {
                    couple(c, c - 1, wy);
                }
                if j + 1 < ny {
                    couple(c, c + 1, wy);
                }
            }
        }
    }
    m
}

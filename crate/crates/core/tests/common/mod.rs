#![allow(dead_code)]

use std::sync::Arc;

use nlch_core::{Field, Grid, Kernel, KernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit-mass Gaussian kernel on `[0, 1]` with `n` cells.
pub fn unit_kernel_1d(n: usize, xi: f64) -> Arc<Kernel> {
    let grid = Grid::new_1d(1.0, n).unwrap();
    Arc::new(Kernel::build_normalized(KernelSpec::gaussian(1.0, xi), grid, 1.0).unwrap())
}

pub fn kernel_1d(n: usize, xi: f64, l1: f64) -> Arc<Kernel> {
    let grid = Grid::new_1d(1.0, n).unwrap();
    Arc::new(Kernel::build_normalized(KernelSpec::gaussian(1.0, xi), grid, l1).unwrap())
}

pub fn kernel_2d(n: usize, xi: f64, l1: f64) -> Arc<Kernel> {
    let grid = Grid::new_2d([1.0, 1.0], [n, n]).unwrap();
    Arc::new(Kernel::build_normalized(KernelSpec::gaussian(1.0, xi), grid, l1).unwrap())
}

/// `mean + amplitude * U(-1, 1)` noise, recentred to the exact mean.
pub fn noise(grid: Grid, mean: f64, amplitude: f64, seed: u64) -> Field {
    let mut r = rng(seed);
    let mut v: Vec<f64> = (0..grid.len()).map(|_| amplitude * r.random_range(-1.0..1.0)).collect();
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x += mean - m;
    }
    Field::new(grid, v, Default::default()).unwrap()
}

pub fn random_values(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn sup_diff(a: &Field, b: &Field) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

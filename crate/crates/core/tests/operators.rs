mod common;

use std::f64::consts::PI;

use common::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nlch_core::grid::{div, grad, inv_neumann_laplacian, neumann_laplacian, vprime_norm};
use nlch_core::*;
use proptest::prelude::*;

/// Stencil matrix of `-Δ_N` assembled straight from the five-point rule.
fn stencil_matrix(grid: &Grid) -> DMatrix<f64> {
    let c = grid.counts();
    let (nx, ny) = (c[0], if grid.dim() == 2 { c[1] } else { 1 });
    let h = grid.spacing();
    let n = nx * ny;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..nx {
        for j in 0..ny {
            let row = i * ny + j;
            let mut link = |col: usize, w: f64| {
                m[(row, col)] -= w;
                m[(row, row)] += w;
            };
            if i > 0 {
                link(row - ny, 1.0 / (h[0] * h[0]));
            }
            if i + 1 < nx {
                link(row + ny, 1.0 / (h[0] * h[0]));
            }
            if grid.dim() == 2 {
                if j > 0 {
                    link(row - 1, 1.0 / (h[1] * h[1]));
                }
                if j + 1 < ny {
                    link(row + 1, 1.0 / (h[1] * h[1]));
                }
            }
        }
    }
    m
}

fn field(grid: Grid, seed: u64) -> Field {
    Field::new(grid, random_values(grid.len(), seed), FieldTag::Auxiliary).unwrap()
}

fn vector_field(grid: Grid, seed: u64) -> VectorField {
    let zero = VectorField::zeros(grid);
    let mut r = seed;
    let comps = (0..grid.dim())
        .map(|a| {
            r += 1;
            random_values(zero.component(a).len(), r)
        })
        .collect();
    VectorField::from_faces(grid, comps).unwrap()
}

#[test]
fn mean_matches_direct_sum() {
    let g = Grid::new_1d(1.0, 16).unwrap();
    let f = field(g, 3);
    let direct: f64 = f.values().iter().sum::<f64>() / 16.0;
    assert!((f.mean() - direct).abs() <= 1e-14);
    let x = Field::from_fn(Grid::new_1d(1.0, 37).unwrap(), |p| p[0]);
    assert!((x.mean() - 0.5).abs() <= 1e-15);
}

#[test]
fn cosine_is_an_eigenfield() {
    let n = 24;
    let len = 2.0;
    let g = Grid::new_1d(len, n).unwrap();
    let h = len / n as f64;
    let eig = SymmetricEigen::new(stencil_matrix(&g));
    let mut lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    lambdas.sort_by(f64::total_cmp);
    let lambda1 = lambdas[1];
    let closed = 2.0 / (h * h) * (1.0 - (PI * h / len).cos());
    assert!((lambda1 - closed).abs() <= 1e-10 * closed);
    assert!((g.first_eigenvalue() - lambda1).abs() <= 1e-10 * lambda1);

    let c = Field::from_fn(g, |x| (PI * x[0] / len).cos());
    let lap = neumann_laplacian(&c);
    for (l, v) in lap.values().iter().zip(c.values()) {
        assert!((l + lambda1 * v).abs() <= 1e-10);
    }
    let inv = inv_neumann_laplacian(&c).unwrap();
    for (u, v) in inv.values().iter().zip(c.values()) {
        assert!((u - v / lambda1).abs() <= 1e-12);
    }
    assert!((vprime_norm(&c) - c.norm() / lambda1.sqrt()).abs() <= 1e-12);
}

#[test]
fn inverse_laplacian_edge_cases() {
    let g = Grid::new_2d([1.0, 2.0], [6, 5]).unwrap();
    let z = inv_neumann_laplacian(&Field::zeros(g)).unwrap();
    assert!(z.values().iter().all(|&v| v == 0.0));
    assert!(matches!(inv_neumann_laplacian(&Field::constant(g, 1.0)), Err(Error::MeanConstraint { .. })));
    assert_eq!(vprime_norm(&Field::zeros(g)), 0.0);
    assert!((vprime_norm(&Field::constant(g, -0.3)) - 0.3).abs() <= 1e-15);
}

#[test]
fn dct_solve_matches_dense_solve() {
    for g in [
        Grid::new_1d(1.0, 32).unwrap(),
        Grid::new_2d([1.0, 1.5], [32, 32]).unwrap(),
        Grid::new_2d([2.0, 1.0], [17, 9]).unwrap(),
    ] {
        let f = field(g, 11).zero_mean();
        let u = inv_neumann_laplacian(&f).unwrap();
        // Pin the null space with the mean row: [A; 1ᵀ] u = [f; 0].
        let n = g.len();
        let mut m = stencil_matrix(&g);
        for j in 0..n {
            m[(0, j)] += 1.0;
        }
        let rhs = DVector::from_column_slice(f.values());
        let dense = m.lu().solve(&rhs).unwrap();
        let scale = dense.amax();
        let dev = u.values().iter().zip(dense.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-11 * scale.max(1.0), "{:?}: {dev}", g.counts());
    }
}

#[test]
fn div_grad_is_the_laplacian() {
    let g = Grid::new_2d([1.0, 1.0], [16, 16]).unwrap();
    let f = field(g, 5);
    assert_eq!(div(&grad(&f)).values(), neumann_laplacian(&f).values());
    let g1 = Grid::new_1d(1.0, 16).unwrap();
    let f1 = field(g1, 6);
    assert_eq!(div(&grad(&f1)).values(), neumann_laplacian(&f1).values());
    assert!(grad(&Field::constant(g, 2.5)).norm_squared() == 0.0);
}

#[test]
fn vprime_norm_is_dominated_by_l2() {
    for g in [Grid::new_1d(1.0, 64).unwrap(), Grid::new_2d([1.0, 2.0], [16, 24]).unwrap()] {
        let c = (1.0 / g.first_eigenvalue() + 1.0 / g.measure()).sqrt();
        for seed in 0..20 {
            let f = field(g, seed);
            assert!(vprime_norm(&f) <= c * f.norm() * (1.0 + 1e-12));
        }
    }
}

fn grid_strategy() -> impl Strategy<Value = Grid> {
    prop_oneof![
        (1usize..80, 0.2f64..5.0).prop_map(|(n, l)| Grid::new_1d(l, n).unwrap()),
        (1usize..24, 1usize..24, 0.2f64..3.0, 0.2f64..3.0).prop_map(|(a, b, l0, l1)| Grid::new_2d([l0, l1], [a, b]).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summation_by_parts(g in grid_strategy(), seed in any::<u64>()) {
        let f = field(g, seed);
        let v = vector_field(g, seed ^ 0x5a5a);
        let lhs = div(&v).inner(&f);
        let rhs = -v.inner(&grad(&f));
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        prop_assert!((lhs - rhs).abs() <= 1e-13 * scale);
    }

    #[test]
    fn laplacian_has_zero_mean(g in grid_strategy(), seed in any::<u64>()) {
        let f = field(g, seed);
        let stencil: f64 = g.spacing().iter().map(|h| 1.0 / (h * h)).sum();
        prop_assert!(neumann_laplacian(&f).mean().abs() <= 1e-14 * stencil.max(1.0));
    }

    #[test]
    fn inverse_round_trip(g in grid_strategy(), seed in any::<u64>()) {
        let f = field(g, seed).zero_mean();
        let back = neumann_laplacian(&inv_neumann_laplacian(&f).unwrap());
        let err = back.add(&f).norm();
        prop_assert!(err <= 1e-12 * f.norm().max(1e-300));
        prop_assert!(inv_neumann_laplacian(&f).unwrap().mean().abs() <= 1e-13);
    }
}

#[test]
fn round_trip_on_largest_grid() {
    let g = Grid::new_2d([1.0, 1.0], [256, 256]).unwrap();
    let f = field(g, 99).zero_mean();
    let back = neumann_laplacian(&inv_neumann_laplacian(&f).unwrap());
    assert!(back.add(&f).norm() <= 1e-12 * f.norm());
}

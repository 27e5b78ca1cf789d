mod common;

use std::f64::consts::PI;

use common::*;
use nlch_core::analysis::energy;
use nlch_core::grid::grad;
use nlch_core::*;
use proptest::prelude::*;

fn field(grid: Grid, seed: u64) -> Field {
    Field::new(grid, random_values(grid.len(), seed), FieldTag::Auxiliary).unwrap()
}

fn max_rel_dev(fast: &[f64], slow: &[f64]) -> f64 {
    let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    fast.iter().zip(slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

/// Composite Simpson rule on `[lo, hi]` with `m` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, m: usize) -> f64 {
    let h = (hi - lo) / m as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..m {
        s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn ambient_matches_fine_quadrature() {
    let xi = 100.0;
    let cj = (xi / PI).sqrt();
    let g = Grid::new_1d(1.0, 128).unwrap();
    let k = Kernel::build(KernelSpec::gaussian(cj, xi), g).unwrap();
    let a = k.ambient().values();
    let exact = |x: f64| simpson(|y| cj * (-xi * (x - y) * (x - y)).exp(), 0.0, 1.0, 20_000);
    let centre = 64;
    let xc = g.center(centre)[0];
    assert!((a[centre] - exact(xc)).abs() <= 1e-6);
    assert!((a[centre] - 1.0).abs() <= 1e-6);
    let wall = 1.5 * a[0] - 0.5 * a[1];
    assert!((wall - 0.5).abs() <= 0.02 * 0.5, "{wall}");
    assert!((a[0] - exact(g.center(0)[0])).abs() <= 1e-3);
    let unit = k.convolve(&Field::constant(g, 1.0)).unwrap();
    assert!(unit.sub(k.ambient()).sup_norm() <= 1e-13);
}

#[test]
fn concentrated_ambient_bounds() {
    let xi = 400.0;
    let g = Grid::new_1d(1.0, 256).unwrap();
    let k = Kernel::build_normalized(KernelSpec::gaussian(1.0, xi), g, 1.0).unwrap();
    let reach = 6.0 / xi.sqrt();
    for (i, &v) in k.ambient().values().iter().enumerate() {
        assert!((0.0..=1.0 + 1e-10).contains(&v));
        let x = g.center(i)[0];
        if x > reach && 1.0 - x > reach {
            assert!((v - 1.0).abs() <= 1e-6, "cell {i}: {v}");
        }
    }
}

#[test]
fn fft_matches_direct_quadrature() {
    let k1 = kernel_1d(256, 50.0, 1.0);
    let f1 = field(*k1.grid(), 1);
    let dev1 = max_rel_dev(k1.convolve(&f1).unwrap().values(), &reference::direct_convolve(&k1, &f1));
    assert!(dev1 <= 1e-10, "1d: {dev1}");

    let k2 = kernel_2d(64, 30.0, 1.0);
    let f2 = field(*k2.grid(), 2);
    let dev2 = max_rel_dev(k2.convolve(&f2).unwrap().values(), &reference::direct_convolve(&k2, &f2));
    assert!(dev2 <= 1e-10, "2d: {dev2}");
}

#[test]
fn newtonian_kernel_matches_direct_quadrature() {
    let g = Grid::new_2d([1.0, 1.0], [24, 24]).unwrap();
    let k = Kernel::build(KernelSpec::newtonian2d(0.1), g).unwrap();
    let f = field(g, 8);
    let dev = max_rel_dev(k.convolve(&f).unwrap().values(), &reference::direct_convolve(&k, &f));
    assert!(dev <= 1e-10);
    assert!(k.ambient().min() >= -1e-12);
}

#[test]
fn convolution_is_self_adjoint_and_linear() {
    let k = kernel_2d(20, 40.0, 2.0);
    let g = *k.grid();
    let (f, h) = (field(g, 3), field(g, 4));
    let lhs = k.convolve(&f).unwrap().inner(&h);
    let rhs = f.inner(&k.convolve(&h).unwrap());
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));

    let sum = k.grad_convolve(&f.add(&h)).unwrap();
    let parts = k.grad_convolve(&f).unwrap().add(&k.grad_convolve(&h).unwrap());
    for a in 0..2 {
        for (x, y) in sum.component(a).iter().zip(parts.component(a)) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
    let direct = grad(&k.convolve(&f).unwrap());
    assert_eq!(k.grad_convolve(&f).unwrap(), direct);
}

#[test]
fn grad_of_ambient_vanishes_inside() {
    let k = unit_kernel_1d(256, 400.0);
    let g = *k.grid();
    let v = k.grad_convolve(&Field::constant(g, 1.0)).unwrap();
    let faces = v.component(0);
    assert!(faces[128].abs() <= 1e-8);
    assert!(faces[1].abs() > 1.0);
    let oracle = grad(k.ambient());
    assert_eq!(&v, &oracle);
}

#[test]
fn narrow_kernel_reproduces_the_gradient() {
    let xi = 1e4;
    let k = unit_kernel_1d(256, xi);
    let g = *k.grid();
    let f = Field::from_fn(g, |x| (2.0 * PI * x[0]).sin());
    let smoothed = k.grad_convolve(&f).unwrap();
    let exact = grad(&f);
    let reach = (6.0 / xi.sqrt() * 256.0).ceil() as usize + 1;
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for i in reach..=256 - reach {
        err = err.max((smoothed.component(0)[i] - exact.component(0)[i]).abs());
        scale = scale.max(exact.component(0)[i].abs());
    }
    assert!(err <= 0.05 * scale, "{err} vs {scale}");
}

#[test]
fn reflection_commutes_with_convolution() {
    let k = kernel_1d(63, 80.0, 1.0);
    let g = *k.grid();
    let f = Field::from_fn(g, |x| (3.0 * PI * x[0]).cos().powi(2));
    let c = k.convolve(&f).unwrap();
    let v = c.values();
    for i in 0..63 {
        assert!((v[i] - v[62 - i]).abs() <= 1e-13);
    }
}

#[test]
fn l1_norm_is_the_lattice_sum() {
    let k = kernel_2d(16, 20.0, 1.7);
    let g = *k.grid();
    let mut sum = 0.0;
    for mx in -15..=15isize {
        for my in -15..=15isize {
            assert_eq!(k.offset_value(mx, my), k.offset_value(-mx, -my));
            sum += k.offset_value(mx, my).abs();
        }
    }
    assert!((sum * g.cell_volume() - 1.7).abs() <= 1e-12);
    assert!((k.l1_norm() - 1.7).abs() <= 1e-12);
}

#[test]
fn energy_matches_double_sum() {
    let cases: Vec<(std::sync::Arc<Kernel>, Potential, f64, f64)> = vec![
        (kernel_1d(32, 60.0, 1.0), Potential::DoubleWell, 0.0, 1.0),
        (kernel_2d(24, 30.0, 2.0), Potential::DoubleWell, 0.1, 0.8),
        (kernel_2d(32, 50.0, 1.0), Potential::logarithmic(1.5).unwrap(), 0.0, 0.9),
        (kernel_1d(32, 60.0, 3.0), Potential::Entropy, 0.5, 0.4),
    ];
    for (seed, (k, p, mean, amp)) in cases.into_iter().enumerate() {
        let phi = noise(*k.grid(), mean, amp, seed as u64);
        let fast = energy(&phi, &k, &p).unwrap();
        let slow = reference::direct_energy(&k, &p, &phi).unwrap();
        assert!((fast - slow).abs() <= 1e-11 * slow.abs(), "{p:?}: {fast} vs {slow}");
    }
}

#[test]
fn energy_examples() {
    let k = unit_kernel_1d(40, 100.0);
    let g = *k.grid();
    let p = Potential::logarithmic(1.5).unwrap();
    let e = energy(&Field::constant(g, 0.3), &k, &p).unwrap();
    assert!((e - p.eval(0.3).unwrap().f).abs() <= 1e-14);
    let zero = Kernel::build(KernelSpec::gaussian(0.0, 100.0), g).unwrap();
    let pm = Field::from_fn(g, |x| if x[0] < 0.4 { 1.0 } else { -1.0 });
    assert_eq!(energy(&pm, &zero, &Potential::DoubleWell).unwrap(), 0.0);
    assert!(matches!(energy(&Field::constant(g, 1.0), &k, &p), Err(Error::Domain { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn young_inequality(n in 4usize..96, xi in 5.0f64..500.0, l1 in 0.1f64..5.0, seed in any::<u64>()) {
        let k = kernel_1d(n, xi, l1);
        let f = field(*k.grid(), seed);
        let lhs = k.convolve(&f).unwrap().inner(&f);
        prop_assert!(lhs <= k.l1_norm() * f.inner(&f) * (1.0 + 1e-12));
    }

    #[test]
    fn fft_agrees_with_direct_on_small_grids(n in 2usize..12, m in 1usize..12, xi in 1.0f64..200.0, seed in any::<u64>()) {
        let g = Grid::new_2d([1.0, 0.7], [n, m]).unwrap();
        let k = Kernel::build(KernelSpec::gaussian(1.0, xi), g).unwrap();
        let f = field(g, seed);
        let dev = max_rel_dev(k.convolve(&f).unwrap().values(), &reference::direct_convolve(&k, &f));
        prop_assert!(dev <= 1e-10);
    }
}

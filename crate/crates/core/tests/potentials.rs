mod common;

use common::*;
use nlch_core::potentials::{audit_samples, check_hypotheses};
use nlch_core::*;
use proptest::prelude::*;

fn families() -> Vec<Potential> {
    vec![
        Potential::DoubleWell,
        Potential::logarithmic(1.0).unwrap(),
        Potential::logarithmic(1.5).unwrap(),
        Potential::Entropy,
    ]
}

/// Sample lattice for finite-difference checks, kept 1e-3 away from singular endpoints.
fn lattice(p: &Potential) -> Vec<f64> {
    let iv = p.admissible();
    let (lo, hi) = if iv.is_bounded() { (iv.lo + 1e-3, iv.hi - 1e-3) } else { (-3.0, 3.0) };
    (0..=400).map(|k| lo + (hi - lo) * k as f64 / 400.0).collect()
}

#[test]
fn derivatives_match_centered_differences() {
    for p in families() {
        let iv = p.admissible();
        for s in lattice(&p) {
            // Shrink the step near singular endpoints, where F‴ grows like 1/d².
            let dist = if iv.is_bounded() { (s - iv.lo).min(iv.hi - s) } else { 1.0 };
            let h = 1e-4 * (10.0 * dist).min(1.0);
            let d = p.eval(s).unwrap();
            let (m, pl) = (p.eval(s - h), p.eval(s + h));
            let (Ok(m), Ok(pl)) = (m, pl) else { continue };
            let fd1 = (pl.f - m.f) / (2.0 * h);
            let fd2 = (pl.df - m.df) / (2.0 * h);
            assert!((fd1 - d.df).abs() <= 1e-6 * d.df.abs().max(1.0), "{p:?} F′ at {s}");
            assert!((fd2 - d.d2f).abs() <= 1e-6 * d.d2f.abs().max(1.0), "{p:?} F″ at {s}");
        }
    }
}

#[test]
fn convex_part_is_strictly_increasing() {
    for p in families() {
        let split = p.convex_split();
        let iv = p.admissible();
        let mut samples: Vec<f64> = audit_samples(&iv).into_iter().filter(|&s| s.abs() <= 10.0).collect();
        samples.sort_by(f64::total_cmp);
        samples.dedup();
        let mut last = f64::NEG_INFINITY;
        for s in samples {
            let c = split.convex(s).unwrap();
            assert!(c.d2f >= 0.0);
            assert!(c.df > last || (c.df == last && s.abs() < 1e-3), "{p:?} at {s}");
            last = c.df;
        }
    }
}

#[test]
fn singular_derivative_blows_up() {
    for p in [Potential::logarithmic(1.5).unwrap(), Potential::Entropy] {
        let iv = p.admissible();
        assert!(p.eval(iv.hi - 1e-13).unwrap().df > 25.0);
        assert!(p.eval(iv.lo + 1e-13).unwrap().df < -25.0);
        assert!(matches!(p.eval(iv.hi), Err(Error::Domain { .. })));
        assert!(matches!(p.eval(iv.lo - 0.5), Err(Error::Domain { .. })));
    }
}

#[test]
fn logarithmic_c_f_is_finite() {
    let k = unit_kernel_1d(32, 100.0);
    let p = Potential::logarithmic(1.5).unwrap();
    let report = check_hypotheses(&p, &k, 0.1);
    assert!(report.c_f.is_finite());
    for s in audit_samples(&p.admissible()) {
        let d = p.eval(s).unwrap();
        assert!(d.df * s >= d.f - report.c_f - 1e-12);
    }
}

#[test]
fn double_well_audit_reports_the_spinodal_floor() {
    for (l1, h2) in [(1.0, false), (10.0, true)] {
        let k = kernel_1d(64, 100.0, l1);
        let r = check_hypotheses(&Potential::DoubleWell, &k, 0.0);
        assert!((r.inf_f2 + 4.0).abs() <= 1e-6);
        assert_eq!(r.satisfied.h2, h2, "l1 {l1}");
        assert!((r.c1_margin - (r.c1 - 0.5 * k.l1_norm())).abs() <= 1e-12);
    }
}

fn admissible_point(p: &Potential, t: f64) -> f64 {
    let iv = p.admissible();
    if iv.is_bounded() {
        iv.lo + (iv.hi - iv.lo) * t
    } else {
        -5.0 + 10.0 * t
    }
}

proptest! {
    #[test]
    fn split_sums_to_potential(idx in 0usize..4, t in 1e-6f64..(1.0 - 1e-6)) {
        let p = &families()[idx];
        let s = admissible_point(p, t);
        let split = p.convex_split();
        let (c, e, d) = (split.convex(s).unwrap(), split.expansive(s).unwrap(), p.eval(s).unwrap());
        prop_assert!(c.d2f >= 0.0);
        prop_assert!((c.f + e.f - d.f).abs() <= 1e-14 * d.f.abs().max(1.0));
        prop_assert!((c.df + e.df - d.df).abs() <= 1e-14 * d.df.abs().max(1.0));
        prop_assert!((c.d2f + e.d2f - d.d2f).abs() <= 1e-14 * d.d2f.abs().max(1.0));
    }
}

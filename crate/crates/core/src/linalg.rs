//! Preconditioned conjugate gradients on flat vectors.

use crate::grid::dot;

#[derive(Debug, Clone, Copy)]
pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// Set when a non-positive curvature direction was met.
    pub indefinite: bool,
}

/// Solves `A x = b` from `x = 0`. Stops when `‖r‖₂ ≤ rtol ‖b‖₂ + atol`.
pub(crate) fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precondition: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    rtol: f64,
    atol: f64,
    max_iter: usize,
) -> (Vec<f64>, CgOutcome) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let target = rtol * dot(b, b).sqrt() + atol;
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut outcome = CgOutcome {
        iterations: 0,
        converged: dot(&r, &r).sqrt() <= target,
        indefinite: false,
    };
    while !outcome.converged && outcome.iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            outcome.indefinite = true;
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        outcome.iterations += 1;
        if dot(&r, &r).sqrt() <= target {
            outcome.converged = true;
            break;
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, outcome)
}

/// Removes the mean in place.
pub(crate) fn project_zero_mean(v: &mut [f64]) {
    let m = crate::grid::mean(v);
    for x in v.iter_mut() {
        *x -= m;
    }
}

//! Helpers shared between integration tests: the brute-force QP oracle
//! and random QP instance generation.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use shaper_opt::qp::QpProblem;

/// Solves `min 1/2 x'Hx + g'x  s.t.  A x <= b` by trying every subset
/// of constraints as the active set: solve the KKT equalities, keep
/// candidates that are primal feasible with non-negative multipliers,
/// return the lowest objective. Exponential, usable only at tiny sizes.
pub fn enumerate_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let d = g.len();
    let m = b.len();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if rows.len() > d {
            continue;
        }
        let k = rows.len();
        // KKT system [H A_W'; A_W 0] [x; lam] = [-g; b_W].
        let mut kkt = DMatrix::zeros(d + k, d + k);
        kkt.view_mut((0, 0), (d, d)).copy_from(h);
        for (j, &r) in rows.iter().enumerate() {
            for c in 0..d {
                kkt[(c, d + j)] = a[(r, c)];
                kkt[(d + j, c)] = a[(r, c)];
            }
        }
        let mut rhs = DVector::zeros(d + k);
        for c in 0..d {
            rhs[c] = -g[c];
        }
        for (j, &r) in rows.iter().enumerate() {
            rhs[d + j] = b[r];
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue;
        };
        // Singular working sets slip through LU with garbage; verify.
        if (kkt * &sol - &rhs).amax() > 1e-8 {
            continue;
        }
        let x = DVector::from_column_slice(sol.rows(0, d).as_slice());
        if (0..k).any(|j| sol[d + j] < -1e-9) {
            continue;
        }
        let r = a * &x - b;
        if (0..m).any(|i| r[i] > 1e-9) {
            continue;
        }
        let obj = 0.5 * (h * &x).dot(&x) + g.dot(&x);
        if best.as_ref().is_none_or(|(_, bo)| obj < *bo) {
            best = Some((x, obj));
        }
    }
    best
}

/// A feasible-by-construction random QP with a well-conditioned SPD
/// Hessian, d in 2..=8 and up to 6 constraints.
pub fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let d = rng.gen_range(2..=8);
    let m = rng.gen_range(0..=6);
    let bmat = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let h = bmat.transpose() * &bmat + DMatrix::identity(d, d);
    let g = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
    let a = DMatrix::from_fn(m, d, |_, _| rng.gen_range(-1.0..1.0));
    let x_feas = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
    let slack = DVector::from_fn(m, |_, _| rng.gen_range(0.0..1.0));
    let b = &a * &x_feas + slack;
    QpProblem::new(h, g, a, b)
}

//! Line searches for the penalty function: an Armijo / weak-Wolfe
//! bisection search (for the quasi-Newton solver) and a plain
//! backtracking Armijo search (for the sampling solver).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LineSearchError {
    #[error("search direction is not a descent direction (slope {0:.3e})")]
    NotDescent(f64),
    #[error("no acceptable step found within the bisection budget")]
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchResult {
    pub t: f64,
    pub phi: f64,
    /// False when the bisection budget ran out and the best merely
    /// decreasing step was returned instead of a Wolfe point.
    pub wolfe_satisfied: bool,
}

/// Bisection search for a step satisfying the Armijo condition
/// phi(t) <= phi(0) + c1 t phi'(0) and the weak Wolfe condition
/// phi'(t) >= c2 phi'(0), after Lewis & Overton. The oracle returns
/// (phi(t), phi'(t)) or None when the trial point cannot be evaluated;
/// unevaluable points are treated as too long a step.
pub fn armijo_wolfe(
    phi0: f64,
    dphi0: f64,
    mut oracle: impl FnMut(f64) -> Option<(f64, f64)>,
    c1: f64,
    c2: f64,
    max_bisections: usize,
) -> Result<LineSearchResult, LineSearchError> {
    if !(dphi0 < 0.0) {
        return Err(LineSearchError::NotDescent(dphi0));
    }
    let mut a = 0.0_f64;
    let mut b = f64::INFINITY;
    let mut t = 1.0_f64;
    let mut best: Option<(f64, f64)> = None; // (t, phi) with phi < phi0

    for _ in 0..max_bisections {
        match oracle(t) {
            None => b = t,
            Some((phi, dphi)) => {
                if phi < phi0 && best.map_or(true, |(_, p)| phi < p) {
                    best = Some((t, phi));
                }
                if !(phi <= phi0 + c1 * t * dphi0) {
                    b = t;
                } else if dphi < c2 * dphi0 {
                    a = t;
                } else {
                    return Ok(LineSearchResult {
                        t,
                        phi,
                        wolfe_satisfied: true,
                    });
                }
            }
        }
        t = if b.is_finite() { 0.5 * (a + b) } else { 2.0 * t };
    }
    match best {
        Some((t, phi)) => Ok(LineSearchResult {
            t,
            phi,
            wolfe_satisfied: false,
        }),
        None => Err(LineSearchError::Exhausted),
    }
}

/// Backtracking search accepting the first t with
/// phi(t) <= phi(0) - c1 t decrease, where `decrease` is the model's
/// predicted reduction (d' H d for the sampling solver). Unevaluable
/// points shorten the step like a failed sufficient-decrease test.
pub fn backtracking_armijo(
    phi0: f64,
    decrease: f64,
    mut oracle: impl FnMut(f64) -> Option<f64>,
    c1: f64,
    backtrack: f64,
    max_steps: usize,
) -> Result<LineSearchResult, LineSearchError> {
    if !(decrease > 0.0) {
        return Err(LineSearchError::NotDescent(-decrease));
    }
    let mut t = 1.0_f64;
    for _ in 0..max_steps {
        if let Some(phi) = oracle(t) {
            if phi <= phi0 - c1 * t * decrease {
                return Ok(LineSearchResult {
                    t,
                    phi,
                    wolfe_satisfied: true,
                });
            }
        }
        t *= backtrack;
    }
    Err(LineSearchError::Exhausted)
}

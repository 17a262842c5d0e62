//! Rightmost roots of the shaper's zero quasi-polynomial
//! `lambda*gamma + sum_k x_k exp(-lambda*tau_k)`, the zeros spectral
//! abscissa and its gradient.
//!
//! Root candidates come from a Chebyshev spectral discretization of the
//! infinitesimal generator of the associated retarded delay system on
//! `[-tau_max, 0]`; candidates are Newton-refined on the quasi-polynomial
//! and completeness inside the search rectangle is certified by an
//! argument-principle winding count over its boundary.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("invalid delay system: {0}")]
    InvalidSystem(String),
    #[error("eigenvalue computation failed")]
    EigenFailure,
    #[error("root count not certified: winding number {winding} but {retained} roots retained")]
    CompletenessMismatch { winding: i64, retained: usize },
    #[error("argument-principle boundary passes too close to a root")]
    BoundaryRoot,
    #[error("gradient unavailable: rightmost root is defective (|f'| = {0:.3e})")]
    GradientUnavailable(f64),
}

/// Retarded delay system `gamma * y'(t) = -sum_k x_k y(t - tau_k)` whose
/// poles are the roots of the shaper's zero quasi-polynomial. Delays are
/// nonnegative and strictly increasing.
#[derive(Debug, Clone)]
pub struct DelaySystem {
    pub delays: Vec<f64>,
    pub gamma: f64,
}

impl DelaySystem {
    pub fn new(delays: Vec<f64>, gamma: f64) -> Result<Self, SpectrumError> {
        if delays.is_empty() {
            return Err(SpectrumError::InvalidSystem("no delays".into()));
        }
        if delays[0] < 0.0 {
            return Err(SpectrumError::InvalidSystem("negative delay".into()));
        }
        if delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SpectrumError::InvalidSystem(
                "delays must be strictly increasing".into(),
            ));
        }
        if gamma <= 0.0 {
            return Err(SpectrumError::InvalidSystem("gamma must be positive".into()));
        }
        Ok(DelaySystem { delays, gamma })
    }

    pub fn dim(&self) -> usize {
        self.delays.len()
    }

    /// f(lambda) = lambda*gamma + sum_k x_k exp(-lambda*tau_k)
    pub fn eval(&self, x: &[f64], lambda: Complex64) -> Complex64 {
        let mut s = lambda * self.gamma;
        for (&xk, &tk) in x.iter().zip(&self.delays) {
            s += Complex64::new(xk, 0.0) * (-lambda * tk).exp();
        }
        s
    }

    /// f'(lambda) = gamma - sum_k x_k tau_k exp(-lambda*tau_k)
    pub fn eval_deriv(&self, x: &[f64], lambda: Complex64) -> Complex64 {
        let mut s = Complex64::new(self.gamma, 0.0);
        for (&xk, &tk) in x.iter().zip(&self.delays) {
            s -= Complex64::new(xk * tk, 0.0) * (-lambda * tk).exp();
        }
        s
    }
}

/// Configuration of the root search region and tolerances.
#[derive(Debug, Clone)]
pub struct SpectrumConfig {
    /// Left edge of the search region.
    pub r_min: f64,
    /// Chebyshev discretization order (raised internally when the search
    /// rectangle demands finer frequency resolution).
    pub cheb_order: usize,
    /// Top edge of the search rectangle; defaults to 40*pi/tau_max.
    pub omega_max: Option<f64>,
    /// Relative residual bound for refined roots.
    pub residual_tol: f64,
    pub origin_tol: f64,
    pub tie_tol: f64,
    /// Near-defective warning threshold on |f'(lambda_1)|.
    pub deriv_tol: f64,
    /// Completeness-mismatch retries, each doubling the discretization.
    pub max_retries: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            r_min: -10.0,
            cheb_order: 40,
            omega_max: None,
            residual_tol: 1e-12,
            origin_tol: 1e-8,
            tie_tol: 1e-8,
            deriv_tol: 1e-6,
            max_retries: 2,
        }
    }
}

/// Roots of the quasi-polynomial inside the search rectangle, closed
/// under conjugation, together with the spectral abscissa.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Sorted by decreasing real part, then decreasing imaginary part.
    pub roots: Vec<Complex64>,
    pub residuals: Vec<f64>,
    /// Max real part over retained roots; -inf when the root set is empty.
    pub abscissa: f64,
    pub rightmost: Option<Complex64>,
    pub origin_root_removed: bool,
}

fn residual_scale(sys: &DelaySystem, x: &[f64], lambda: Complex64) -> f64 {
    let x1: f64 = x.iter().map(|v| v.abs()).sum();
    sys.gamma * lambda.norm().max(1.0) + x1
}

/// Chebyshev differentiation matrix on the extreme points cos(j*pi/n),
/// j = 0..n (Trefethen's construction with the negative-sum trick).
fn cheb_diff_matrix(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let pts: Vec<f64> = (0..=n).map(|j| (j as f64 * std::f64::consts::PI / n as f64).cos()).collect();
    let c = |i: usize| -> f64 {
        let base = if i == 0 || i == n { 2.0 } else { 1.0 };
        base * if i % 2 == 0 { 1.0 } else { -1.0 }
    };
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        let mut row_sum = 0.0;
        for j in 0..=n {
            if i != j {
                let v = c(i) / c(j) / (pts[i] - pts[j]);
                d[(i, j)] = v;
                row_sum += v;
            }
        }
        d[(i, i)] = -row_sum;
    }
    (pts, d)
}

/// Barycentric interpolation row: weights l_j(s) over the grid `t` with
/// Chebyshev-extreme barycentric weights.
fn bary_row(t: &[f64], s: f64) -> Vec<f64> {
    let n = t.len() - 1;
    for (j, &tj) in t.iter().enumerate() {
        if (s - tj).abs() < 1e-15 * (1.0 + tj.abs()) {
            let mut row = vec![0.0; n + 1];
            row[j] = 1.0;
            return row;
        }
    }
    let w = |j: usize| -> f64 {
        let base = if j == 0 || j == n { 0.5 } else { 1.0 };
        base * if j % 2 == 0 { 1.0 } else { -1.0 }
    };
    let mut num = vec![0.0; n + 1];
    let mut den = 0.0;
    for j in 0..=n {
        let v = w(j) / (s - t[j]);
        num[j] = v;
        den += v;
    }
    num.iter_mut().for_each(|v| *v /= den);
    num
}

/// Spectral discretization of the generator; eigenvalues approximate the
/// quasi-polynomial roots.
fn generator_eigenvalues(
    sys: &DelaySystem,
    x: &[f64],
    order: usize,
) -> Result<Vec<Complex64>, SpectrumError> {
    let tau_max = *sys.delays.last().unwrap();
    let (xi, d_cheb) = cheb_diff_matrix(order);
    // Map xi in [-1, 1] to t in [-tau_max, 0] with t(1) = 0.
    let t: Vec<f64> = xi.iter().map(|&v| (v - 1.0) * tau_max / 2.0).collect();
    let scale = 2.0 / tau_max;
    let mut m = DMatrix::zeros(order + 1, order + 1);
    for i in 1..=order {
        for j in 0..=order {
            m[(i, j)] = d_cheb[(i, j)] * scale;
        }
    }
    // Splicing row at t = 0: y'(0) = -(1/gamma) sum_k x_k y(-tau_k).
    for (&xk, &tk) in x.iter().zip(&sys.delays) {
        let row = bary_row(&t, -tk);
        for (j, &lj) in row.iter().enumerate() {
            m[(0, j)] -= xk / sys.gamma * lj;
        }
    }
    let eig = m.complex_eigenvalues();
    Ok(eig.iter().cloned().collect())
}

fn newton_refine(
    sys: &DelaySystem,
    x: &[f64],
    mut lambda: Complex64,
    tol: f64,
    floor_re: f64,
) -> Option<Complex64> {
    for _ in 0..50 {
        let f = sys.eval(x, lambda);
        if f.norm() <= tol * residual_scale(sys, x, lambda) {
            return Some(lambda);
        }
        let fp = sys.eval_deriv(x, lambda);
        if fp.norm() < 1e-300 {
            return None;
        }
        let step = f / fp;
        // Damp huge steps so candidates cannot jump across the plane.
        let max_step = 1.0 + lambda.norm();
        let step = if step.norm() > max_step {
            step * (max_step / step.norm())
        } else {
            step
        };
        lambda -= step;
        if lambda.re < floor_re - 5.0 || !lambda.re.is_finite() || !lambda.im.is_finite() {
            return None;
        }
    }
    let f = sys.eval(x, lambda);
    if f.norm() <= tol * residual_scale(sys, x, lambda) {
        Some(lambda)
    } else {
        None
    }
}

/// Continuous-argument winding number of f along the counterclockwise
/// boundary of the rectangle, by adaptive bisection of each edge.
fn winding_number(
    sys: &DelaySystem,
    x: &[f64],
    re_lo: f64,
    re_hi: f64,
    im_lo: f64,
    im_hi: f64,
) -> Result<i64, SpectrumError> {
    let corners = [
        Complex64::new(re_lo, im_lo),
        Complex64::new(re_hi, im_lo),
        Complex64::new(re_hi, im_hi),
        Complex64::new(re_lo, im_hi),
        Complex64::new(re_lo, im_lo),
    ];
    let mut total = 0.0f64;
    for seg in corners.windows(2) {
        total += edge_arg_change(sys, x, seg[0], seg[1])?;
    }
    let winding = total / (2.0 * std::f64::consts::PI);
    let rounded = winding.round();
    if (winding - rounded).abs() > 0.25 {
        return Err(SpectrumError::BoundaryRoot);
    }
    Ok(rounded as i64)
}

fn edge_arg_change(
    sys: &DelaySystem,
    x: &[f64],
    a: Complex64,
    b: Complex64,
) -> Result<f64, SpectrumError> {
    let tau_max = *sys.delays.last().unwrap();
    // Initial sampling density follows the maximum phase-rotation rate of
    // the exponential terms along the edge.
    let len = (b - a).norm();
    let n0 = ((len * tau_max / 1.0).ceil() as usize).clamp(16, 4096);
    let mut total = 0.0;
    let mut prev_t = 0.0f64;
    let mut prev_f = boundary_eval(sys, x, a)?;
    let step = 1.0 / n0 as f64;
    let mut t = step;
    while prev_t < 1.0 {
        let z = a + (b - a) * t;
        let f = boundary_eval(sys, x, z)?;
        let dphi = (f / prev_f).arg();
        if dphi.abs() > std::f64::consts::FRAC_PI_2 && t - prev_t > 1e-9 {
            // Refine: halve the step from prev_t.
            t = prev_t + (t - prev_t) / 2.0;
            continue;
        }
        total += dphi;
        prev_t = t;
        prev_f = f;
        t = (t + step).min(1.0);
        if prev_t >= 1.0 {
            break;
        }
        if t <= prev_t {
            t = (prev_t + step).min(1.0);
        }
    }
    Ok(total)
}

fn boundary_eval(sys: &DelaySystem, x: &[f64], z: Complex64) -> Result<Complex64, SpectrumError> {
    let f = sys.eval(x, z);
    if f.norm() < 1e-13 * residual_scale(sys, x, z) {
        return Err(SpectrumError::BoundaryRoot);
    }
    Ok(f)
}

fn empty_result() -> SpectrumResult {
    SpectrumResult {
        roots: Vec::new(),
        residuals: Vec::new(),
        abscissa: f64::NEG_INFINITY,
        rightmost: None,
        origin_root_removed: false,
    }
}

/// All roots of the quasi-polynomial inside the search rectangle
/// `[r_min, r_max] x [-omega_max, omega_max]`, Newton-refined, conjugate
/// symmetric, and certified complete by a winding count. The artificial
/// origin root of `s * D(s)` is removed when the gains sum to zero.
pub fn rightmost_roots(
    sys: &DelaySystem,
    x: &[f64],
    config: &SpectrumConfig,
) -> Result<SpectrumResult, SpectrumError> {
    if x.len() != sys.dim() {
        return Err(SpectrumError::InvalidSystem(format!(
            "gain vector length {} does not match {} delays",
            x.len(),
            sys.dim()
        )));
    }
    let x_sum: f64 = x.iter().sum();
    let x_norm1: f64 = x.iter().map(|v| v.abs()).sum();
    if x_norm1 == 0.0 {
        // D(s) = gamma has no zeros.
        return Ok(empty_result());
    }
    let tau_max = *sys.delays.last().unwrap();
    if tau_max == 0.0 {
        // Single lumped term at tau = 0: f = lambda*gamma + sum(x).
        let root = Complex64::new(-x_sum / sys.gamma, 0.0);
        let origin_removable = x_sum.abs() <= config.origin_tol * x_norm1.max(1.0)
            && root.norm() <= config.origin_tol;
        if origin_removable {
            let mut r = empty_result();
            r.origin_root_removed = true;
            return Ok(r);
        }
        if root.re < config.r_min {
            return Ok(empty_result());
        }
        return Ok(SpectrumResult {
            residuals: vec![sys.eval(x, root).norm()],
            abscissa: root.re,
            rightmost: Some(root),
            roots: vec![root],
            origin_root_removed: false,
        });
    }

    let omega_max = config.omega_max.unwrap_or(40.0 * std::f64::consts::PI / tau_max);
    let r_max = x_norm1 / sys.gamma + 1.0;
    let base_order = config
        .cheb_order
        .max((0.7 * omega_max * tau_max).ceil() as usize)
        .max(8);

    let mut last_err = None;
    for attempt in 0..=config.max_retries {
        let order = base_order << attempt;
        match attempt_roots(sys, x, config, order, omega_max, r_max, x_sum, x_norm1) {
            Ok(res) => return Ok(res),
            Err(e @ (SpectrumError::CompletenessMismatch { .. } | SpectrumError::BoundaryRoot)) => {
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

#[allow(clippy::too_many_arguments)]
fn attempt_roots(
    sys: &DelaySystem,
    x: &[f64],
    config: &SpectrumConfig,
    order: usize,
    omega_max: f64,
    r_max: f64,
    x_sum: f64,
    x_norm1: f64,
) -> Result<SpectrumResult, SpectrumError> {
    let candidates = generator_eigenvalues(sys, x, order)?;

    // Refine candidates near the rectangle; fold to Im >= 0.
    let mut reps: Vec<Complex64> = Vec::new();
    for lam0 in candidates {
        if lam0.re < config.r_min - 1.0 || lam0.im.abs() > 1.3 * omega_max + 5.0 {
            continue;
        }
        let lam0 = if lam0.im < 0.0 { lam0.conj() } else { lam0 };
        if let Some(mut lam) = newton_refine(sys, x, lam0, config.residual_tol, config.r_min) {
            if lam.im < 0.0 {
                lam = lam.conj();
            }
            if lam.im.abs() <= 1e-9 * (1.0 + lam.norm()) {
                lam = Complex64::new(lam.re, 0.0);
            }
            let dup = reps
                .iter()
                .any(|r| (r - lam).norm() <= 1e-8 * (1.0 + lam.norm()));
            if !dup {
                reps.push(lam);
            }
        }
    }

    // Search rectangle; grow an edge when a root sits too close to it so
    // the winding count and the retained set stay consistent.
    let mut re_lo = config.r_min;
    let mut re_hi = r_max;
    let mut im_hi = omega_max;
    for _ in 0..8 {
        let margin_r = 1e-6 * (1.0 + re_hi.abs().max(re_lo.abs()));
        let margin_i = 1e-6 * (1.0 + im_hi);
        let mut grown = false;
        for r in &reps {
            if (r.re - re_lo).abs() < margin_r {
                re_lo -= 1e-3 * (1.0 + re_lo.abs());
                grown = true;
            }
            if (r.re - re_hi).abs() < margin_r {
                re_hi += 1e-3 * (1.0 + re_hi.abs());
                grown = true;
            }
            if (r.im - im_hi).abs() < margin_i {
                im_hi += 1e-3 * (1.0 + im_hi);
                grown = true;
            }
        }
        if !grown {
            break;
        }
    }

    let mut retained: Vec<Complex64> = reps
        .iter()
        .cloned()
        .filter(|r| r.re >= re_lo && r.re <= re_hi && r.im <= im_hi)
        .collect();

    // Remove the artificial origin root of s*D(s) when sum(x) ~ 0.
    let mut origin_root_removed = false;
    if x_sum.abs() <= config.origin_tol * x_norm1.max(1.0) {
        if let Some(idx) = retained
            .iter()
            .enumerate()
            .filter(|(_, r)| r.norm() <= config.origin_tol)
            .min_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .map(|(i, _)| i)
        {
            retained.remove(idx);
            origin_root_removed = true;
        }
    }

    // Completeness certificate: winding count over the rectangle equals
    // the total number of roots found in it (conjugates unfolded).
    let expected: i64 = retained
        .iter()
        .map(|r| if r.im > 0.0 { 2i64 } else { 1 })
        .sum::<i64>()
        + i64::from(origin_root_removed);
    let winding = winding_number(sys, x, re_lo, re_hi, -im_hi, im_hi)?;
    if winding != expected {
        return Err(SpectrumError::CompletenessMismatch {
            winding,
            retained: expected as usize,
        });
    }

    // Unfold conjugates and sort by decreasing Re, then decreasing Im.
    let mut roots: Vec<Complex64> = Vec::with_capacity(retained.len() * 2);
    for r in &retained {
        roots.push(*r);
        if r.im > 0.0 {
            roots.push(r.conj());
        }
    }
    roots.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    let residuals: Vec<f64> = roots.iter().map(|&r| sys.eval(x, r).norm()).collect();
    let abscissa = roots.first().map_or(f64::NEG_INFINITY, |r| r.re);
    let rightmost = roots.first().cloned();
    Ok(SpectrumResult {
        roots,
        residuals,
        abscissa,
        rightmost,
        origin_root_removed,
    })
}

/// Detects a spectral-abscissa tie: a second retained root whose real
/// part is within `tie_tol` of the abscissa and which is not the
/// conjugate of the attaining root.
pub fn has_tie(roots: &[Complex64], tie_tol: f64) -> bool {
    let Some(first) = roots.first() else {
        return false;
    };
    roots.iter().skip(1).any(|r| {
        (r.re - first.re).abs() <= tie_tol && (r - first.conj()).norm() > 1e-12 * (1.0 + r.norm())
    })
}

/// Zeros spectral abscissa with its gradient at the attaining root.
///
/// Returns the abscissa, the gradient (via implicit differentiation of
/// the quasi-polynomial at the rightmost root) and a multiplicity
/// warning when the abscissa is attained by tied non-conjugate roots or
/// the attaining root is near-defective.
pub fn spectral_abscissa_and_gradient(
    sys: &DelaySystem,
    x: &[f64],
    config: &SpectrumConfig,
) -> Result<(f64, Vec<f64>, bool), SpectrumError> {
    let res = rightmost_roots(sys, x, config)?;
    let Some(lam1) = res.rightmost else {
        // No zeros at all; the caller maps the sentinel.
        return Ok((f64::NEG_INFINITY, vec![0.0; sys.dim()], false));
    };
    let denom = sys.eval_deriv(x, lam1);
    if denom.norm() < 1e-14 {
        return Err(SpectrumError::GradientUnavailable(denom.norm()));
    }
    let mut warning = has_tie(&res.roots, config.tie_tol);
    if denom.norm() < config.deriv_tol {
        warning = true;
    }
    let grad: Vec<f64> = sys
        .delays
        .iter()
        .map(|&tk| -((-lam1 * tk).exp() / denom).re)
        .collect();
    Ok((res.abscissa, grad, warning))
}

/// Stability constraint value `alpha_D(x) - alpha_c` and gradient. The
/// empty-spectrum sentinel maps to a large negative constant with zero
/// gradient.
pub fn stability_constraint(
    sys: &DelaySystem,
    x: &[f64],
    alpha_c: f64,
    config: &SpectrumConfig,
) -> Result<(f64, Vec<f64>), SpectrumError> {
    let (alpha, grad, _warning) = spectral_abscissa_and_gradient(sys, x, config)?;
    if alpha == f64::NEG_INFINITY {
        return Ok((-1e6, vec![0.0; sys.dim()]));
    }
    Ok((alpha - alpha_c, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lumped_delay_analytic_root() {
        // n=1, tau=[0], gamma=0.01, x=[0.02]: lambda*gamma + x = 0 -> -2.
        let sys = DelaySystem::new(vec![0.0], 0.01).unwrap();
        let r = rightmost_roots(&sys, &[0.02], &SpectrumConfig::default()).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert_abs_diff_eq!(r.abscissa, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_gains_empty_spectrum() {
        let sys = DelaySystem::new(vec![0.0, 0.4, 0.8], 0.01).unwrap();
        let r = rightmost_roots(&sys, &[0.0; 3], &SpectrumConfig::default()).unwrap();
        assert!(r.roots.is_empty());
        assert_eq!(r.abscissa, f64::NEG_INFINITY);
        assert!(r.rightmost.is_none());
    }

    #[test]
    fn lambert_w_rightmost_pair() {
        // lambda e^lambda = -1: rightmost pair about -0.3181 +- 1.3372i.
        let sys = DelaySystem::new(vec![1.0], 1.0).unwrap();
        let cfg = SpectrumConfig::default();
        let r = rightmost_roots(&sys, &[1.0], &cfg).unwrap();
        let top = r.rightmost.unwrap();
        assert_abs_diff_eq!(top.re, -0.3181315052047641, epsilon = 1e-9);
        assert_abs_diff_eq!(top.im.abs(), 1.3372357014306895, epsilon = 1e-9);
        // Conjugate symmetry of the retained list.
        for root in &r.roots {
            assert!(
                r.roots
                    .iter()
                    .any(|s| (s - root.conj()).norm() <= 1e-10 * (1.0 + root.norm())),
                "conjugate of {root} missing"
            );
        }
        // Residual bound for every reported root.
        for (root, resid) in r.roots.iter().zip(&r.residuals) {
            assert!(*resid <= 1e-12 * (sys.gamma * root.norm().max(1.0) + 1.0));
        }
    }

    #[test]
    fn lumped_case_scaling_identity() {
        // n=1, tau1=0: alpha_D(s*x) = s*alpha_D(x).
        let sys = DelaySystem::new(vec![0.0], 0.01).unwrap();
        let cfg = SpectrumConfig::default();
        // Scales keeping the root right of the default search floor.
        for s in [0.5, 2.0, 4.0] {
            let a1 = rightmost_roots(&sys, &[0.02], &cfg).unwrap().abscissa;
            let a2 = rightmost_roots(&sys, &[0.02 * s], &cfg).unwrap().abscissa;
            assert_abs_diff_eq!(a2, s * a1, epsilon = 1e-10);
        }
    }

    #[test]
    fn lumped_gradient_analytic() {
        // alpha = -x/gamma -> d alpha/dx = -1/gamma = -100.
        let sys = DelaySystem::new(vec![0.0], 0.01).unwrap();
        let (_, grad, warn) =
            spectral_abscissa_and_gradient(&sys, &[0.02], &SpectrumConfig::default()).unwrap();
        assert_abs_diff_eq!(grad[0], -100.0, epsilon = 1e-9);
        assert!(!warn);
    }

    #[test]
    fn gradient_matches_finite_differences_small_system() {
        let sys = DelaySystem::new(vec![0.0, 0.5, 1.0], 0.5).unwrap();
        let cfg = SpectrumConfig::default();
        let x = [0.3, -0.1, 0.25];
        let (_, grad, warn) = spectral_abscissa_and_gradient(&sys, &x, &cfg).unwrap();
        assert!(!warn);
        let h = 1e-6;
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let ap = spectral_abscissa_and_gradient(&sys, &xp, &cfg).unwrap().0;
            let am = spectral_abscissa_and_gradient(&sys, &xm, &cfg).unwrap().0;
            let fd = (ap - am) / (2.0 * h);
            assert!(
                (grad[k] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                "component {k}: grad {} vs fd {}",
                grad[k],
                fd
            );
        }
    }

    #[test]
    fn near_defective_root_warns() {
        // f = lambda + x e^-lambda has a double real root at lambda = -1
        // when x = 1/e; nearby the derivative is tiny and must warn.
        let sys = DelaySystem::new(vec![1.0], 1.0).unwrap();
        let cfg = SpectrumConfig::default();
        let x = [(-1.0f64).exp()];
        let (alpha, _grad, warn) = match spectral_abscissa_and_gradient(&sys, &x, &cfg) {
            Ok(t) => t,
            // Exactly defective is also an acceptable outcome here.
            Err(SpectrumError::GradientUnavailable(_)) => return,
            Err(e) => panic!("unexpected spectrum error: {e}"),
        };
        assert_abs_diff_eq!(alpha, -1.0, epsilon = 1e-4);
        assert!(warn);
    }

    #[test]
    fn tie_detection_on_synthetic_roots() {
        let a = Complex64::new(-0.5, 1.0);
        // Conjugate pair alone is not a tie.
        assert!(!has_tie(&[a, a.conj()], 1e-8));
        // A second distinct root at the same real part is.
        assert!(has_tie(&[a, Complex64::new(-0.5, 3.0)], 1e-8));
        assert!(!has_tie(&[a, Complex64::new(-0.9, 3.0)], 1e-8));
        assert!(!has_tie(&[], 1e-8));
    }

    #[test]
    fn stability_constraint_values() {
        let sys = DelaySystem::new(vec![0.0], 0.01).unwrap();
        let cfg = SpectrumConfig::default();
        // alpha_D = -2, alpha_c = -0.1 -> value -1.9.
        let (v, _) = stability_constraint(&sys, &[0.02], -0.1, &cfg).unwrap();
        assert_abs_diff_eq!(v, -1.9, epsilon = 1e-10);
        // Empty spectrum sentinel.
        let (v0, g0) = stability_constraint(&sys, &[0.0], -0.1, &cfg).unwrap();
        assert_eq!(v0, -1e6);
        assert!(g0.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn origin_root_removed_when_gains_sum_to_zero() {
        // x = (a, -a): f(0) = 0 exactly, the artificial s*D(s) root.
        let sys = DelaySystem::new(vec![0.0, 1.0], 1.0).unwrap();
        let cfg = SpectrumConfig::default();
        let r = rightmost_roots(&sys, &[0.4, -0.4], &cfg).unwrap();
        assert!(r.origin_root_removed);
        for root in &r.roots {
            assert!(root.norm() > cfg.origin_tol);
        }
    }

    #[test]
    fn rejects_bad_systems() {
        assert!(DelaySystem::new(vec![], 1.0).is_err());
        assert!(DelaySystem::new(vec![0.0, 0.0], 1.0).is_err());
        assert!(DelaySystem::new(vec![0.0, 1.0], 0.0).is_err());
        assert!(DelaySystem::new(vec![-1.0, 1.0], 1.0).is_err());
    }
}

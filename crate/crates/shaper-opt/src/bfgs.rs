//! BFGS approximation of the Lagrangian Hessian, maintained in direct
//! (Hessian) form with curvature guarding and eigenvalue clamping.

use nalgebra::{DMatrix, DVector};

const CURVATURE_TOL: f64 = 1e-10;
const EIG_MAX: f64 = 1e12;
const EIG_MIN_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    SkippedCurvature,
    Reset,
}

/// Symmetric positive definite quasi-Newton matrix H_k.
#[derive(Debug, Clone)]
pub struct HessianApprox {
    h: DMatrix<f64>,
}

impl HessianApprox {
    pub fn identity(n: usize) -> Self {
        HessianApprox {
            h: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Quadratic-form norm sqrt(d' H d).
    pub fn quad_norm(&self, d: &DVector<f64>) -> f64 {
        d.dot(&(&self.h * d)).max(0.0).sqrt()
    }

    /// Euclidean norm of H d. For a direction returned by the penalty
    /// subproblem this equals the norm of the QP's certified
    /// stationarity vector (the weighted objective gradient plus the
    /// multiplier combination of constraint gradients), which stays
    /// meaningful even when H itself is close to singular and the
    /// H-metric norm of d underestimates distance to stationarity.
    pub fn stationarity_norm(&self, d: &DVector<f64>) -> f64 {
        (&self.h * d).norm()
    }

    /// Projects the eigenvalues of H onto [lo, hi]. The sampling solver
    /// calls this after every update: its convergence analysis assumes
    /// the model Hessians stay uniformly bounded and uniformly positive
    /// definite, and without the projection the curvature blows up near
    /// nonsmooth minimizers until the direction subproblem degenerates.
    pub fn clamp_spectrum(&mut self, lo: f64, hi: f64) {
        assert!(0.0 < lo && lo <= hi);
        let mut eig = self.h.clone().symmetric_eigen();
        if eig.eigenvalues.iter().all(|l| (lo..=hi).contains(l)) {
            return;
        }
        for l in eig.eigenvalues.iter_mut() {
            *l = l.clamp(lo, hi);
        }
        let recomposed = eig.recompose();
        self.h = (&recomposed + recomposed.transpose()) * 0.5;
    }

    /// Standard BFGS update in Hessian form:
    /// H <- H - (H s s' H)/(s' H s) + (y y')/(s' y),
    /// skipped unless the curvature condition holds, with an eigenvalue
    /// clamp that resets to a scaled identity when H degenerates.
    pub fn update(&mut self, s: &DVector<f64>, y: &DVector<f64>) -> UpdateOutcome {
        let sy = s.dot(y);
        // NaN-safe: a non-finite curvature product also skips.
        if !(sy.is_finite() && sy >= CURVATURE_TOL * s.norm() * y.norm()) {
            return UpdateOutcome::SkippedCurvature;
        }
        let hs = &self.h * s;
        let shs = s.dot(&hs);
        if !(shs > 0.0) {
            return self.reset();
        }
        self.h -= &hs * hs.transpose() / shs;
        self.h += y * y.transpose() / sy;
        // Exact symmetry despite rounding.
        self.h = (&self.h + self.h.transpose()) * 0.5;

        let eig = self.h.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max.is_finite() && min.is_finite()) || max > EIG_MAX || min < EIG_MIN_REL * max {
            return self.reset();
        }
        UpdateOutcome::Applied
    }

    fn reset(&mut self) -> UpdateOutcome {
        let n = self.h.nrows();
        let t = self.h.trace() / n as f64;
        let scale = if t.is_finite() { t.clamp(1e-6, 1e6) } else { 1.0 };
        self.h = DMatrix::identity(n, n) * scale;
        UpdateOutcome::Reset
    }
}

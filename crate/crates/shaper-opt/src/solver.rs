//! Shared plumbing for the two solvers: full-point evaluation bundles,
//! almost-everywhere penalty gradients, run clocks and the common error
//! type.

use std::time::Instant;

use nalgebra::DVector;
use thiserror::Error;

use crate::problem::{violation, BlockEval, EvalError, Problem};
use crate::qp::QpError;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("evaluation failed at the starting point: {0}")]
    StartEvaluation(EvalError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("direction subproblem failed: {0}")]
    Subproblem(#[from] QpError),
}

/// Objective and constraint values plus gradients at one point.
pub(crate) struct PointEval {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_f: DVector<f64>,
    pub ineq: BlockEval,
    pub eq: BlockEval,
}

impl PointEval {
    pub fn violation(&self) -> f64 {
        violation(self.ineq.values.as_slice(), self.eq.values.as_slice())
    }
}

pub(crate) fn eval_point(problem: &Problem, x: &DVector<f64>) -> Result<PointEval, EvalError> {
    let obj = problem.eval_objective(x)?;
    let ineq = problem.eval_inequalities(x)?;
    let eq = problem.eval_equalities(x)?;
    Ok(PointEval {
        x: x.clone(),
        f: obj.value,
        grad_f: obj.gradient,
        ineq,
        eq,
    })
}

/// Almost-everywhere gradient of the penalty function
/// `rho f + sum max(c_I, 0) + sum |c_E|`: violated inequalities
/// contribute their gradients, equalities contribute sign(c) times
/// theirs with sign(0) = 0.
pub(crate) fn penalty_gradient(p: &PointEval, rho: f64) -> DVector<f64> {
    let mut g = &p.grad_f * rho;
    for j in 0..p.ineq.values.len() {
        if p.ineq.values[j] > 0.0 {
            g += p.ineq.jacobian.row(j).transpose();
        }
    }
    for j in 0..p.eq.values.len() {
        let s = p.eq.values[j].signum();
        if p.eq.values[j] != 0.0 {
            g += p.eq.jacobian.row(j).transpose() * s;
        }
    }
    g
}

/// How per-iterate cost is accounted. Wall-clock timing is the default;
/// the deterministic model charges one unit per iteration so that tests
/// and reproducibility checks do not depend on machine speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    WallClock,
    DeterministicUnit,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::WallClock
    }
}

pub(crate) struct RunClock {
    model: CostModel,
    start: Instant,
}

impl RunClock {
    pub fn new(model: CostModel) -> Self {
        RunClock {
            model,
            start: Instant::now(),
        }
    }

    /// Cumulative cost for iterate k; zero at the starting point by
    /// definition (no computation was spent producing it).
    pub fn cost(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self.model {
            CostModel::WallClock => self.start.elapsed().as_secs_f64(),
            CostModel::DeterministicUnit => k as f64,
        }
    }
}

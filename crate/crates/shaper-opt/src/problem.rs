//! Constrained-problem abstraction, l1 penalty machinery, feasibility
//! testing and run-history recording shared by both solvers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Error raised by an objective or constraint evaluator.
#[derive(Debug, Clone, Error)]
pub enum EvalError {
    #[error("evaluation failed: {0}")]
    Failed(String),
    /// The value exists but its gradient is unavailable at this point
    /// (e.g. near-defective rightmost root of the delay spectrum).
    #[error("gradient unavailable: {0}")]
    GradientUnavailable(String),
}

/// Value and gradient of a scalar function at a point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
}

pub type ScalarEval = dyn Fn(&DVector<f64>) -> Result<Evaluation, EvalError> + Send + Sync;

/// One scalar constraint function together with its smoothness flag.
/// Functions flagged nonsmooth receive gradient sampling in SQP-GS.
pub struct ConstraintFn {
    pub eval: Box<ScalarEval>,
    pub nonsmooth: bool,
}

impl ConstraintFn {
    pub fn smooth(eval: Box<ScalarEval>) -> Self {
        ConstraintFn {
            eval,
            nonsmooth: false,
        }
    }

    pub fn nonsmooth(eval: Box<ScalarEval>) -> Self {
        ConstraintFn {
            eval,
            nonsmooth: true,
        }
    }
}

/// A constrained minimization problem: minimize f subject to
/// c_I(x) <= 0 componentwise and c_E(x) = 0.
///
/// Evaluators must be deterministic and safe to call from multiple
/// threads; gradients are supplied by the problem definition.
pub struct Problem {
    pub dim: usize,
    pub objective: Box<ScalarEval>,
    pub objective_nonsmooth: bool,
    pub inequalities: Vec<ConstraintFn>,
    pub equalities: Vec<ConstraintFn>,
}

/// Values and Jacobian of a block of constraints at a point.
#[derive(Debug, Clone)]
pub struct BlockEval {
    pub values: DVector<f64>,
    /// One row per constraint.
    pub jacobian: DMatrix<f64>,
}

impl Problem {
    pub fn eval_objective(&self, x: &DVector<f64>) -> Result<Evaluation, EvalError> {
        let e = (self.objective)(x)?;
        debug_assert_eq!(e.gradient.len(), self.dim);
        Ok(e)
    }

    pub fn eval_inequalities(&self, x: &DVector<f64>) -> Result<BlockEval, EvalError> {
        Self::eval_block(&self.inequalities, self.dim, x)
    }

    pub fn eval_equalities(&self, x: &DVector<f64>) -> Result<BlockEval, EvalError> {
        Self::eval_block(&self.equalities, self.dim, x)
    }

    fn eval_block(
        fns: &[ConstraintFn],
        dim: usize,
        x: &DVector<f64>,
    ) -> Result<BlockEval, EvalError> {
        let mut values = DVector::zeros(fns.len());
        let mut jacobian = DMatrix::zeros(fns.len(), dim);
        for (j, c) in fns.iter().enumerate() {
            let e = (c.eval)(x)?;
            values[j] = e.value;
            jacobian.row_mut(j).copy_from(&e.gradient.transpose());
        }
        Ok(BlockEval { values, jacobian })
    }
}

/// Tolerances deciding when an iterate counts as feasible.
///
/// Inequalities must be satisfied strictly relative to `ineq_tol`
/// (`max_j c_I[j] < ineq_tol`), while the total violation of the
/// equality constraints may be at most `eq_viol_tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityTolerances {
    pub ineq_tol: f64,
    pub eq_viol_tol: f64,
}

impl FeasibilityTolerances {
    pub fn new(ineq_tol: f64, eq_viol_tol: f64) -> Self {
        assert!(eq_viol_tol >= 0.0, "eq_viol_tol must be nonnegative");
        FeasibilityTolerances {
            ineq_tol,
            eq_viol_tol,
        }
    }
}

impl Default for FeasibilityTolerances {
    /// Strict inequality satisfaction, 1e-8 total equality violation.
    fn default() -> Self {
        FeasibilityTolerances {
            ineq_tol: 0.0,
            eq_viol_tol: 1e-8,
        }
    }
}

/// Total constraint violation: sum of positive parts of the inequality
/// values plus absolute values of the equality residuals.
pub fn violation(c_ineq: &[f64], c_eq: &[f64]) -> f64 {
    let vi: f64 = c_ineq.iter().map(|&c| c.max(0.0)).sum();
    let ve: f64 = c_eq.iter().map(|&c| c.abs()).sum();
    vi + ve
}

/// l1 exact penalty function value: rho * f + v.
pub fn penalty(rho: f64, f: f64, v: f64) -> f64 {
    assert!(rho > 0.0, "penalty parameter must be positive");
    assert!(v >= 0.0, "violation must be nonnegative");
    rho * f + v
}

/// Feasibility test: strict on inequalities, total-violation bound on
/// equalities.
pub fn is_feasible(c_ineq: &[f64], c_eq: &[f64], tol: &FeasibilityTolerances) -> bool {
    let max_ineq = c_ineq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let eq_viol: f64 = c_eq.iter().map(|&c| c.abs()).sum();
    (c_ineq.is_empty() || max_ineq < tol.ineq_tol) && eq_viol <= tol.eq_viol_tol
}

/// Why a solver run stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    StationarityMet,
    MaxIterations,
    LineSearchFailure,
    SubproblemFailure,
    EvaluationFailure,
}

/// One solver step. Constraint values (not just violations) are stored
/// so feasibility criteria can be re-derived offline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub c_ineq: Vec<f64>,
    pub c_eq: Vec<f64>,
    pub rho: f64,
    /// Cumulative wall-clock cost in seconds from run start; zero at k=0.
    pub cost: f64,
    pub stationarity: f64,
}

/// Full trajectory of one solver run from one starting point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunHistory {
    pub start_id: String,
    pub solver: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_hash: Option<String>,
    pub termination: TerminationReason,
    pub records: Vec<IterateRecord>,
}

impl RunHistory {
    /// Checks the structural invariants: non-empty record list, iteration
    /// indices strictly increasing from zero, cost non-decreasing and zero
    /// at the start.
    pub fn validate(&self) -> Result<(), String> {
        if self.records.is_empty() {
            return Err("history has no records".into());
        }
        if self.records[0].k != 0 {
            return Err("first record must have k = 0".into());
        }
        if self.records[0].cost != 0.0 {
            return Err("cost must be zero at k = 0".into());
        }
        for w in self.records.windows(2) {
            if w[1].k <= w[0].k {
                return Err("iteration indices must strictly increase".into());
            }
            if w[1].cost < w[0].cost {
                return Err("cumulative cost must be non-decreasing".into());
            }
        }
        Ok(())
    }

    /// Minimum objective over feasible records with cumulative cost within
    /// `cost_limit`; `None` if no such record exists.
    pub fn best_feasible_within(
        &self,
        cost_limit: f64,
        tol: &FeasibilityTolerances,
    ) -> Option<f64> {
        self.records
            .iter()
            .filter(|r| r.cost <= cost_limit && is_feasible(&r.c_ineq, &r.c_eq, tol))
            .map(|r| r.f)
            .fold(None, |acc, f| match acc {
                None => Some(f),
                Some(b) => Some(b.min(f)),
            })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<RunHistory, serde_json::Error> {
        serde_json::from_str(s)
    }
}

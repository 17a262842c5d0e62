//! Gradient-sampling SQP solver: each nonsmooth function is linearized
//! with gradients drawn from a shrinking sampling ball around the
//! iterate, the stacked penalty QP proposes a direction, and a
//! backtracking Armijo search plus BFGS update follow. The sampling
//! radius and stationarity target shrink together; the penalty
//! parameter is cut when the constraint slacks stay positive.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bfgs::HessianApprox;
use crate::line_search::backtracking_armijo;
use crate::problem::{penalty, IterateRecord, Problem, RunHistory, TerminationReason};
use crate::qp::{assemble_sqpgs_qp, solve_qp, FunctionLinearization, QpError};
use crate::solver::{eval_point, penalty_gradient, CostModel, PointEval, RunClock, SolverError};

pub const SOLVER_NAME: &str = "sqp_gs";

/// Uniform eigenvalue bounds on the quasi-Newton model Hessian,
/// required by the sampling method's convergence analysis.
const HESS_EIG_MIN: f64 = 1e-4;
const HESS_EIG_MAX: f64 = 1e4;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SqpGsConfig {
    /// Gradient samples per nonsmooth function, in addition to the
    /// center gradient. `None` selects 2n. Zero disables sampling
    /// entirely (degenerate test mode).
    pub samples: Option<usize>,
    /// Initial sampling radius and its reduction factor.
    pub eps0: f64,
    pub eps_factor: f64,
    /// Initial stationarity target and its reduction factor.
    pub nu0: f64,
    pub nu_factor: f64,
    pub rho0: f64,
    /// Penalty reduction factor applied after `slack_streak` consecutive
    /// iterations whose subproblem left a constraint slack positive.
    pub rho_factor: f64,
    pub slack_streak: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Redraws allowed per sample when the gradient is unavailable at
    /// the sampled point.
    pub max_sample_retries: usize,
    pub seed: u64,
    pub cost_model: CostModel,
}

impl Default for SqpGsConfig {
    fn default() -> Self {
        SqpGsConfig {
            samples: None,
            eps0: 0.1,
            eps_factor: 0.1,
            nu0: 0.1,
            nu_factor: 0.1,
            rho0: 1.0,
            rho_factor: 0.5,
            slack_streak: 5,
            max_iters: 1000,
            tol: 1e-8,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            max_sample_retries: 10,
            seed: 0,
            cost_model: CostModel::WallClock,
        }
    }
}

impl SqpGsConfig {
    pub fn sample_count(&self, dim: usize) -> usize {
        self.samples.unwrap_or(2 * dim)
    }
}

/// Per-iteration model sizes: number of gradients entering each
/// function's linearization, ordered objective, inequalities,
/// equalities. Nonsmooth functions carry samples + 1 gradients
/// (center included), smooth functions exactly one.
#[derive(Debug, Clone, Default)]
pub struct SqpGsStats {
    pub model_gradients: Vec<Vec<usize>>,
}

fn uniform_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> DVector<f64> {
    let mut u = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = u.norm();
    if norm > 0.0 {
        u /= norm;
    }
    let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
    u * r
}

enum SampleOutcome {
    Ok(FunctionLinearization),
    EvalFailed,
}

/// Linearization of one function: center value and gradient plus, when
/// sampled, gradients at `count` points drawn uniformly from the
/// epsilon-ball around the center. Samples whose gradient is
/// unavailable are redrawn a bounded number of times.
fn sample_linearization(
    eval: &crate::problem::ScalarEval,
    center_value: f64,
    center_gradient: DVector<f64>,
    x: &DVector<f64>,
    sampled: bool,
    count: usize,
    eps: f64,
    rng: &mut ChaCha8Rng,
    max_retries: usize,
) -> SampleOutcome {
    let mut gradients = vec![center_gradient];
    if sampled {
        for _ in 0..count {
            let mut ok = false;
            for _ in 0..=max_retries {
                let y = x + uniform_ball(rng, x.len(), eps);
                if let Ok(e) = eval(&y) {
                    gradients.push(e.gradient);
                    ok = true;
                    break;
                }
            }
            if !ok {
                return SampleOutcome::EvalFailed;
            }
        }
    }
    SampleOutcome::Ok(FunctionLinearization {
        value: center_value,
        gradients,
    })
}

struct Model {
    obj: FunctionLinearization,
    ineqs: Vec<FunctionLinearization>,
    eqs: Vec<FunctionLinearization>,
    sizes: Vec<usize>,
}

fn build_model(
    problem: &Problem,
    p: &PointEval,
    count: usize,
    eps: f64,
    rng: &mut ChaCha8Rng,
    max_retries: usize,
) -> Option<Model> {
    let mut sizes = Vec::new();
    let obj = match sample_linearization(
        &*problem.objective,
        p.f,
        p.grad_f.clone(),
        &p.x,
        problem.objective_nonsmooth,
        count,
        eps,
        rng,
        max_retries,
    ) {
        SampleOutcome::Ok(l) => l,
        SampleOutcome::EvalFailed => return None,
    };
    sizes.push(obj.gradients.len());
    let block = |fns: &[crate::problem::ConstraintFn],
                     values: &DVector<f64>,
                     jac: &nalgebra::DMatrix<f64>,
                     sizes: &mut Vec<usize>,
                     rng: &mut ChaCha8Rng|
     -> Option<Vec<FunctionLinearization>> {
        let mut out = Vec::with_capacity(fns.len());
        for (j, c) in fns.iter().enumerate() {
            match sample_linearization(
                &*c.eval,
                values[j],
                jac.row(j).transpose(),
                &p.x,
                c.nonsmooth,
                count,
                eps,
                rng,
                max_retries,
            ) {
                SampleOutcome::Ok(l) => {
                    sizes.push(l.gradients.len());
                    out.push(l);
                }
                SampleOutcome::EvalFailed => return None,
            }
        }
        Some(out)
    };
    let ineqs = block(
        &problem.inequalities,
        &p.ineq.values,
        &p.ineq.jacobian,
        &mut sizes,
        rng,
    )?;
    let eqs = block(
        &problem.equalities,
        &p.eq.values,
        &p.eq.jacobian,
        &mut sizes,
        rng,
    )?;
    Some(Model {
        obj,
        ineqs,
        eqs,
        sizes,
    })
}

fn record_of(k: usize, p: &PointEval, rho: f64, cost: f64, stationarity: f64) -> IterateRecord {
    IterateRecord {
        k,
        x: p.x.iter().copied().collect(),
        f: p.f,
        c_ineq: p.ineq.values.iter().copied().collect(),
        c_eq: p.eq.values.iter().copied().collect(),
        rho,
        cost,
        stationarity,
    }
}

pub fn run(
    problem: &Problem,
    x0: &DVector<f64>,
    config: &SqpGsConfig,
    start_id: &str,
) -> Result<RunHistory, SolverError> {
    run_with_stats(problem, x0, config, start_id).map(|(h, _)| h)
}

/// As `run`, additionally returning the per-iteration model sizes for
/// instrumentation.
pub fn run_with_stats(
    problem: &Problem,
    x0: &DVector<f64>,
    config: &SqpGsConfig,
    start_id: &str,
) -> Result<(RunHistory, SqpGsStats), SolverError> {
    if x0.len() != problem.dim {
        return Err(SolverError::DimensionMismatch {
            expected: problem.dim,
            found: x0.len(),
        });
    }
    let clock = RunClock::new(config.cost_model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cur = eval_point(problem, x0).map_err(SolverError::StartEvaluation)?;
    let mut hess = HessianApprox::identity(problem.dim);
    let mut rho = config.rho0;
    let mut eps = config.eps0;
    let mut nu = config.nu0;
    let count = config.sample_count(problem.dim);
    let slack_tol = 1e-8;
    let mut streak = 0usize;
    let mut records = Vec::new();
    let mut stats = SqpGsStats::default();
    let mut k = 0usize;

    let termination = loop {
        let model = match build_model(problem, &cur, count, eps, &mut rng, config.max_sample_retries)
        {
            Some(m) => m,
            None => break TerminationReason::EvaluationFailure,
        };
        let solved = assemble_sqpgs_qp(&model.obj, &model.ineqs, &model.eqs, rho, hess.matrix())
            .map_err(|e| QpError::DimensionMismatch(e.to_string()))
            .and_then(|(qp, layout)| Ok((solve_qp(&qp)?, layout)));
        let (sol, layout) = match solved {
            Ok(v) => v,
            Err(_) => break TerminationReason::SubproblemFailure,
        };
        let d = layout.direction(&sol);
        let sigma = hess.stationarity_norm(&d);
        if std::env::var("STEER_DBG").is_ok() && sigma <= config.tol {
            eprintln!(
                "gs small-d k={k} damax={:.3e} kkt={:.3e} act={:?} eps={eps:.2e} nu={nu:.2e} z={:.6e} s={:.3e} f={:.6e} cmax={:.3e}",
                d.amax(), sol.kkt_residual, sol.active_set,
                sol.x[problem.dim], layout.slacks(&sol).amax(),
                cur.f, cur.ineq.values.max(),
            );
        }
        stats.model_gradients.push(model.sizes);
        records.push(record_of(k, &cur, rho, clock.cost(k), sigma));

        if sigma <= nu {
            if nu <= config.tol {
                break TerminationReason::StationarityMet;
            }
            if k >= config.max_iters {
                break TerminationReason::MaxIterations;
            }
            // Stationary for the current sampling radius: shrink the
            // ball and the target without moving.
            eps *= config.eps_factor;
            nu *= config.nu_factor;
            k += 1;
            continue;
        }
        if k >= config.max_iters {
            break TerminationReason::MaxIterations;
        }

        let slacks = layout.slacks(&sol);
        if slacks.len() > 0 && slacks.amax() > slack_tol {
            streak += 1;
            if streak >= config.slack_streak {
                rho *= config.rho_factor;
                streak = 0;
            }
        } else {
            streak = 0;
        }

        let phi0 = penalty(rho, cur.f, cur.violation());
        // Predicted model reduction along d is the H-metric norm
        // squared, independent of the stationarity measure above.
        let decrease = hess.quad_norm(&d).powi(2);
        let mut trial: Option<(f64, PointEval)> = None;
        let search = backtracking_armijo(
            phi0,
            decrease,
            |t| {
                let pe = eval_point(problem, &(&cur.x + &d * t)).ok()?;
                let phi = penalty(rho, pe.f, pe.violation());
                trial = Some((t, pe));
                Some(phi)
            },
            config.armijo_c1,
            config.backtrack,
            config.max_backtracks,
        );
        let step = match search {
            Ok(r) => r,
            Err(_) => break TerminationReason::LineSearchFailure,
        };
        let next = match trial {
            Some((t, pe)) if t == step.t => pe,
            _ => match eval_point(problem, &(&cur.x + &d * step.t)) {
                Ok(pe) => pe,
                Err(_) => break TerminationReason::EvaluationFailure,
            },
        };
        let s = &next.x - &cur.x;
        let y = penalty_gradient(&next, rho) - penalty_gradient(&cur, rho);
        hess.update(&s, &y);
        hess.clamp_spectrum(HESS_EIG_MIN, HESS_EIG_MAX);
        cur = next;
        k += 1;
    };

    // A failure before the first direction was found still yields a
    // structurally valid history: record the start point, with the
    // stationarity measure marked unknown.
    if records.is_empty() {
        records.push(record_of(0, &cur, rho, 0.0, f64::MAX));
    }

    let history = RunHistory {
        start_id: start_id.to_string(),
        solver: SOLVER_NAME.to_string(),
        seed: Some(config.seed),
        instance_hash: None,
        termination,
        records,
    };
    Ok((history, stats))
}

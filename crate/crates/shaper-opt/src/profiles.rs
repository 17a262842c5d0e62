//! Benchmarking instruments over recorded run histories: relative
//! minimization profiles (RMP curves, budget-scaled by a factor beta)
//! and global-local profiles (GL curves: expected best feasible
//! objective, or feasibility probability, as one total budget is split
//! across increasing numbers of starting points).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{FeasibilityTolerances, RunHistory};

/// Floor applied to |target| in the relative difference, so targets at
/// or near zero still produce finite relative accuracies.
pub const DELTA_FLOOR: f64 = 1e-12;

/// Number of finite points on the RMP tolerance grid.
pub const RMP_GRID_POINTS: usize = 33;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("no run histories supplied")]
    Empty,
    #[error("no feasible iterate available to resolve the target")]
    NoTarget,
    #[error("per-run budget list has {found} entries for {expected} runs")]
    BudgetMismatch { expected: usize, found: usize },
}

/// How the RMP target objective value t is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Use the supplied value unchanged.
    Fixed(f64),
    /// Smallest objective over every feasible iterate of every run.
    BestKnown,
    /// Like `BestKnown`, but restricted to iterates whose cumulative
    /// cost fits within the beta-scaled budget (target scaling).
    BestKnownScaled,
    /// Median over runs of the per-run best feasible value; runs with
    /// no feasible iterate are excluded.
    MedianOfBest,
}

/// Per-run computational budgets b_i in cost units (seconds under the
/// wall-clock cost model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budgets {
    Fixed(f64),
    PerRun(Vec<f64>),
}

impl Budgets {
    fn get(&self, i: usize) -> f64 {
        match self {
            Budgets::Fixed(b) => *b,
            Budgets::PerRun(v) => v[i],
        }
    }

    fn check(&self, runs: usize) -> Result<(), ProfileError> {
        match self {
            Budgets::Fixed(b) => {
                assert!(*b > 0.0, "budgets must be positive");
                Ok(())
            }
            Budgets::PerRun(v) => {
                assert!(v.iter().all(|&b| b > 0.0), "budgets must be positive");
                if v.len() != runs {
                    return Err(ProfileError::BudgetMismatch {
                        expected: runs,
                        found: v.len(),
                    });
                }
                Ok(())
            }
        }
    }
}

/// Parameters of an RMP computation shared across beta values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmpSpec {
    /// Budget scale factors; may include infinity.
    pub betas: Vec<f64>,
    pub budgets: Budgets,
    pub target: TargetMode,
    pub tolerances: FeasibilityTolerances,
    pub delta_floor: f64,
}

impl RmpSpec {
    pub fn new(betas: Vec<f64>, budgets: Budgets, target: TargetMode) -> Self {
        assert!(betas.iter().all(|&b| b > 0.0), "beta must be positive");
        RmpSpec {
            betas,
            budgets,
            target,
            tolerances: FeasibilityTolerances::default(),
            delta_floor: DELTA_FLOOR,
        }
    }
}

/// Parameters of a GL-Profile computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlSpec {
    /// Total budgets, each split evenly across the runs of a block.
    pub budgets: Vec<f64>,
    /// Block sizes M (number of starting points sharing one budget).
    pub subset_sizes: Vec<usize>,
    pub tolerances: FeasibilityTolerances,
}

impl GlSpec {
    pub fn new(budgets: Vec<f64>, subset_sizes: Vec<usize>) -> Self {
        assert!(budgets.iter().all(|&b| b > 0.0), "budgets must be positive");
        assert!(subset_sizes.iter().all(|&m| m >= 1), "subset sizes must be >= 1");
        GlSpec {
            budgets,
            subset_sizes,
            tolerances: FeasibilityTolerances::default(),
        }
    }
}

/// One plotted point; `x` is the tolerance (RMP) or block size (GL).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yerr: Option<f64>,
}

/// A labelled profile curve with the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub label: String,
    pub points: Vec<ProfilePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    pub n_runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

impl ProfileCurve {
    /// Serializes the curve as `x,y,yerr` CSV (empty cell for absent
    /// error bars), infinity written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,yerr\n");
        for p in &self.points {
            let x = if p.x.is_infinite() { "inf".to_string() } else { format!("{:e}", p.x) };
            match p.yerr {
                Some(e) => out.push_str(&format!("{x},{:e},{:e}\n", p.y, e)),
                None => out.push_str(&format!("{x},{:e},\n", p.y)),
            }
        }
        out
    }
}

/// Log-spaced RMP tolerance grid from 1e-16 to 1 plus an infinite
/// right endpoint, matching the plotted range from machine precision
/// to "solved at any accuracy".
pub fn tolerance_grid() -> Vec<f64> {
    let lo = -16.0f64;
    let hi = 0.0f64;
    let mut grid: Vec<f64> = (0..RMP_GRID_POINTS)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (RMP_GRID_POINTS - 1) as f64))
        .collect();
    grid.push(f64::INFINITY);
    grid
}

/// Relative difference of an incumbent objective f to the target t,
/// floored in the denominator and clamped at zero: an incumbent better
/// than the target counts as solved at every tolerance.
pub fn reldiff(f: f64, t: f64, floor: f64) -> f64 {
    ((f - t) / t.abs().max(floor)).max(0.0)
}

fn effective_budget(beta: f64, b: f64) -> f64 {
    if beta.is_infinite() {
        f64::INFINITY
    } else {
        beta * b
    }
}

/// Best feasible incumbent of each run within its beta-scaled budget.
fn incumbents(
    histories: &[RunHistory],
    spec: &RmpSpec,
    beta: f64,
) -> Result<Vec<Option<f64>>, ProfileError> {
    spec.budgets.check(histories.len())?;
    Ok(histories
        .iter()
        .enumerate()
        .map(|(i, h)| {
            h.best_feasible_within(effective_budget(beta, spec.budgets.get(i)), &spec.tolerances)
        })
        .collect())
}

/// Resolves the RMP target value for the given beta (the beta only
/// matters in the target-scaling mode).
pub fn resolve_target(
    histories: &[RunHistory],
    spec: &RmpSpec,
    beta: f64,
) -> Result<f64, ProfileError> {
    if histories.is_empty() {
        return Err(ProfileError::Empty);
    }
    let best_of = |bests: Vec<Option<f64>>| {
        bests
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |b| b.min(f))))
            .ok_or(ProfileError::NoTarget)
    };
    match spec.target {
        TargetMode::Fixed(t) => Ok(t),
        TargetMode::BestKnown => best_of(incumbents(histories, spec, f64::INFINITY)?),
        TargetMode::BestKnownScaled => best_of(incumbents(histories, spec, beta)?),
        TargetMode::MedianOfBest => {
            let mut bests: Vec<f64> = incumbents(histories, spec, f64::INFINITY)?
                .into_iter()
                .flatten()
                .collect();
            if bests.is_empty() {
                return Err(ProfileError::NoTarget);
            }
            bests.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = bests.len();
            Ok(if n % 2 == 1 {
                bests[n / 2]
            } else {
                0.5 * (bests[n / 2 - 1] + bests[n / 2])
            })
        }
    }
}

/// Computes one beta-RMP curve: for every tolerance x on the grid, the
/// percentage of runs whose feasible incumbent within the beta-scaled
/// budget reaches relative accuracy x against the target. The infinite
/// right endpoint counts any feasible incumbent regardless of value.
pub fn rmp_curve(
    histories: &[RunHistory],
    spec: &RmpSpec,
    beta: f64,
    label: &str,
) -> Result<ProfileCurve, ProfileError> {
    if histories.is_empty() {
        return Err(ProfileError::Empty);
    }
    let target = resolve_target(histories, spec, beta)?;
    let incs = incumbents(histories, spec, beta)?;
    let n = histories.len();

    let points: Vec<ProfilePoint> = tolerance_grid()
        .into_iter()
        .map(|x| {
            let hits = incs
                .iter()
                .filter(|inc| match inc {
                    None => false,
                    Some(f) => x.is_infinite() || reldiff(*f, target, spec.delta_floor) <= x,
                })
                .count();
            ProfilePoint {
                x,
                y: 100.0 * hits as f64 / n as f64,
                yerr: None,
            }
        })
        .collect();

    // Structural invariants of every emitted curve.
    for w in points.windows(2) {
        assert!(w[0].x < w[1].x, "tolerance grid must strictly increase");
        assert!(w[0].y <= w[1].y, "RMP curve must be non-decreasing");
    }
    assert!(points.iter().all(|p| (0.0..=100.0).contains(&p.y)));

    Ok(ProfileCurve {
        label: label.to_string(),
        points,
        beta: Some(beta),
        budget: None,
        n_runs: n,
        target: Some(target),
    })
}

/// GL-Profile statistics for one (total budget, block size) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlStats {
    /// Number of blocks |P|.
    pub blocks: usize,
    /// Number of blocks with a feasible best |P^F|.
    pub feasible_blocks: usize,
    /// Mean best feasible objective over feasible blocks; absent when
    /// every block is infeasible.
    pub f_star: Option<f64>,
    /// Standard error of `f_star`; absent when |P^F| <= 1.
    pub f_err: Option<f64>,
    /// Fraction of feasible blocks.
    pub c_star: f64,
    /// Binomial standard error of `c_star`.
    pub c_err: f64,
}

/// Per-block best feasible objective values f*_l: the first
/// floor(N/M)*M runs are split into sequential blocks of M runs, each
/// run confined to the per-point budget T/M; surplus runs are omitted.
fn block_bests(
    histories: &[RunHistory],
    tol: &FeasibilityTolerances,
    t_total: f64,
    m: usize,
) -> Vec<Option<f64>> {
    let q = histories.len() / m;
    let per_run = t_total / m as f64;
    (0..q)
        .map(|l| {
            histories[l * m..(l + 1) * m]
                .iter()
                .filter_map(|h| h.best_feasible_within(per_run, tol))
                .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |b| b.min(f))))
        })
        .collect()
}

/// GL statistics for one total budget and block size: the expected
/// best feasible objective with its standard error, and the block
/// feasibility probability with its binomial standard error.
pub fn gl_stats(
    histories: &[RunHistory],
    spec: &GlSpec,
    t_total: f64,
    m: usize,
) -> Result<GlStats, ProfileError> {
    if histories.is_empty() || histories.len() < m {
        return Err(ProfileError::Empty);
    }
    let bests = block_bests(histories, &spec.tolerances, t_total, m);
    let blocks = bests.len();
    let feasible: Vec<f64> = bests.iter().copied().flatten().collect();
    let pf = feasible.len();

    let f_star = if pf > 0 {
        Some(feasible.iter().sum::<f64>() / pf as f64)
    } else {
        None
    };
    let f_err = match (f_star, pf) {
        (Some(mean), pf) if pf > 1 => {
            let var =
                feasible.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / (pf - 1) as f64;
            Some(var.sqrt() / (pf as f64).sqrt())
        }
        _ => None,
    };

    let c_star = pf as f64 / blocks as f64;
    let c_err = (c_star * (1.0 - c_star) / blocks as f64).sqrt();

    Ok(GlStats {
        blocks,
        feasible_blocks: pf,
        f_star,
        f_err,
        c_star,
        c_err,
    })
}

/// The objective GL curve for one total budget across the spec's block
/// sizes; points with no feasible block are omitted. The x coordinate
/// is the block size M.
pub fn gl_objective_curve(
    histories: &[RunHistory],
    spec: &GlSpec,
    t_total: f64,
    label: &str,
) -> Result<ProfileCurve, ProfileError> {
    let mut points = Vec::new();
    for &m in &spec.subset_sizes {
        let s = gl_stats(histories, spec, t_total, m)?;
        if let Some(f) = s.f_star {
            points.push(ProfilePoint {
                x: m as f64,
                y: f,
                yerr: s.f_err,
            });
        }
    }
    Ok(ProfileCurve {
        label: label.to_string(),
        points,
        beta: None,
        budget: Some(t_total),
        n_runs: histories.len(),
        target: None,
    })
}

/// The feasibility GL curve for one total budget across the spec's
/// block sizes.
pub fn gl_feasibility_curve(
    histories: &[RunHistory],
    spec: &GlSpec,
    t_total: f64,
    label: &str,
) -> Result<ProfileCurve, ProfileError> {
    let mut points = Vec::new();
    for &m in &spec.subset_sizes {
        let s = gl_stats(histories, spec, t_total, m)?;
        points.push(ProfilePoint {
            x: m as f64,
            y: s.c_star,
            yerr: Some(s.c_err),
        });
    }
    Ok(ProfileCurve {
        label: label.to_string(),
        points,
        beta: None,
        budget: Some(t_total),
        n_runs: histories.len(),
        target: None,
    })
}

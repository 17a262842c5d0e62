//! Batch configuration: which instance to solve, which solvers, which
//! families of starting points, and the execution caps.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use shaper_opt::instance::StartKind;
use shaper_opt::solver::CostModel;
use shaper_opt::FeasibilityTolerances;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    BfgsSqp,
    SqpGs,
    Both,
}

impl SolverChoice {
    pub fn names(self) -> Vec<&'static str> {
        match self {
            SolverChoice::BfgsSqp => vec![shaper_opt::bfgs_sqp::SOLVER_NAME],
            SolverChoice::SqpGs => vec![shaper_opt::sqp_gs::SOLVER_NAME],
            SolverChoice::Both => vec![
                shaper_opt::bfgs_sqp::SOLVER_NAME,
                shaper_opt::sqp_gs::SOLVER_NAME,
            ],
        }
    }
}

/// One family of starting points drawn reproducibly from a seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSetSpec {
    pub kind: StartKind,
    pub count: usize,
    pub seed: u64,
}

impl StartSetSpec {
    /// Stable identifier used in file names and run labels.
    pub fn label(&self) -> String {
        format!("{}-s{}", self.kind.label(), self.seed)
    }
}

fn default_max_iters() -> usize {
    1000
}

fn default_workers() -> usize {
    1
}

fn default_solvers() -> SolverChoice {
    SolverChoice::Both
}

/// On-disk batch configuration (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub instance: PathBuf,
    #[serde(default = "default_solvers")]
    pub solvers: SolverChoice,
    pub start_sets: Vec<StartSetSpec>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub tolerances: FeasibilityTolerances,
    pub out_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub cost_model: CostModel,
}

impl BenchConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: BenchConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.start_sets.is_empty() {
            return Err(CliError::Usage("config: start_sets must be non-empty".into()));
        }
        if self.start_sets.iter().any(|s| s.count == 0) {
            return Err(CliError::Usage("config: start-set count must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(CliError::Usage("config: max_iters must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(CliError::Usage("config: workers must be >= 1".into()));
        }
        Ok(())
    }
}

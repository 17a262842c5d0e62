//! The `run` subcommand: executes every (solver, start) pair of the
//! batch on a bounded worker pool and writes one history file per run.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use shaper_opt::bfgs_sqp::{self, BfgsSqpConfig};
use shaper_opt::instance::{build_problem, instance_digest, InstanceFile};
use shaper_opt::sqp_gs::{self, SqpGsConfig};
use shaper_opt::Problem;

use crate::config::BenchConfig;
use crate::CliError;

struct Job {
    solver: &'static str,
    start_id: String,
    file: PathBuf,
    x0: DVector<f64>,
    /// Per-run RNG seed for the sampling solver, derived from the
    /// start-set seed and run index.
    run_seed: u64,
}

fn solve(job: &Job, problem: &Problem, cfg: &BenchConfig) -> Result<String, String> {
    let history = if job.solver == bfgs_sqp::SOLVER_NAME {
        let sc = BfgsSqpConfig {
            max_iters: cfg.max_iters,
            cost_model: cfg.cost_model,
            ..BfgsSqpConfig::default()
        };
        bfgs_sqp::run(problem, &job.x0, &sc, &job.start_id)
    } else {
        let sc = SqpGsConfig {
            max_iters: cfg.max_iters,
            cost_model: cfg.cost_model,
            seed: job.run_seed,
            ..SqpGsConfig::default()
        };
        sqp_gs::run(problem, &job.x0, &sc, &job.start_id)
    };
    history.map(|h| h.to_json()).map_err(|e| e.to_string())
}

pub fn cmd_run(
    config_path: &Path,
    seed_override: Option<u64>,
    max_iters_override: Option<usize>,
    out_override: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = BenchConfig::load(config_path)?;
    if let Some(s) = seed_override {
        for set in &mut cfg.start_sets {
            set.seed = s;
        }
    }
    if let Some(k) = max_iters_override {
        cfg.max_iters = k;
        cfg.validate()?;
    }
    if let Some(dir) = out_override {
        cfg.out_dir = dir;
    }

    let instance_text = std::fs::read_to_string(&cfg.instance).map_err(|e| {
        CliError::Data(format!("cannot read instance {}: {e}", cfg.instance.display()))
    })?;
    let file = InstanceFile::from_json(&instance_text)
        .map_err(|e| CliError::Data(format!("instance {}: {e}", cfg.instance.display())))?;
    let digest = instance_digest(&instance_text);
    let instance = file
        .build()
        .map_err(|e| CliError::Data(format!("instance {}: {e}", cfg.instance.display())))?;
    let problem = build_problem(&instance)
        .map_err(|e| CliError::Data(format!("instance {}: {e}", cfg.instance.display())))?;

    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.out_dir.display())))?;

    // Build the deterministic job list; jobs whose output file already
    // exists are skipped so interrupted batches resume.
    let mut jobs = Vec::new();
    let mut skipped = 0usize;
    for set in &cfg.start_sets {
        let starts =
            shaper_opt::instance::generate_starts(set.kind, problem.dim, set.count, set.seed);
        for solver in cfg.solvers.names() {
            for (i, x0) in starts.iter().enumerate() {
                let start_id = format!("{}-{i:03}", set.label());
                let file = cfg.out_dir.join(format!("{solver}__{start_id}.json"));
                if file.exists() {
                    skipped += 1;
                    continue;
                }
                jobs.push(Job {
                    solver,
                    start_id,
                    file,
                    x0: x0.clone(),
                    run_seed: set.seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
                });
            }
        }
    }
    if skipped > 0 {
        println!("resuming: {skipped} history files already present");
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;

    let failures: Vec<String> = pool.install(|| {
        jobs.par_iter()
            .filter_map(|job| match solve(job, &problem, &cfg) {
                Ok(json) => {
                    // Re-attach run metadata before persisting.
                    let mut h = shaper_opt::RunHistory::from_json(&json)
                        .expect("solver output round-trips");
                    h.seed = Some(job.run_seed);
                    h.instance_hash = Some(digest.clone());
                    match std::fs::write(&job.file, h.to_json()) {
                        Ok(()) => {
                            println!("wrote {}", job.file.display());
                            None
                        }
                        Err(e) => Some(format!("{}: write failed: {e}", job.file.display())),
                    }
                }
                Err(msg) => Some(format!("{} / {}: {msg}", job.solver, job.start_id)),
            })
            .collect()
    });

    if failures.is_empty() {
        println!("batch complete: {} runs, {skipped} resumed", jobs.len());
        Ok(())
    } else {
        Err(CliError::PartialBatch(format!(
            "{} of {} runs failed:\n  {}",
            failures.len(),
            jobs.len(),
            failures.join("\n  ")
        )))
    }
}

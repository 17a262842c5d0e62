//! The `summary` subcommand: per-(solver, start-set) cost statistics,
//! cross-solver ratios, and the sorted best-value listing.

use std::path::{Path, PathBuf};

use shaper_opt::svg::{panel_grid, sorted_best_plot};
use shaper_opt::{FeasibilityTolerances, RunHistory};

use crate::load::{group, load_histories};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct GroupStats {
    pub label: String,
    pub runs: usize,
    pub total_time: f64,
    pub total_iters: usize,
    pub time_per_iter: f64,
    pub feasible_runs: usize,
    pub best_objective: Option<f64>,
}

fn stats_for(label: &str, runs: &[RunHistory], tol: &FeasibilityTolerances) -> GroupStats {
    let total_time: f64 = runs.iter().map(|h| h.records.last().unwrap().cost).sum();
    let total_iters: usize = runs.iter().map(|h| h.records.last().unwrap().k).sum();
    let bests: Vec<Option<f64>> = runs
        .iter()
        .map(|h| h.best_feasible_within(f64::INFINITY, tol))
        .collect();
    GroupStats {
        label: label.to_string(),
        runs: runs.len(),
        total_time,
        total_iters,
        time_per_iter: if total_iters > 0 {
            total_time / total_iters as f64
        } else {
            0.0
        },
        feasible_runs: bests.iter().filter(|b| b.is_some()).count(),
        best_objective: bests.into_iter().flatten().reduce(f64::min),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |f| format!("{f:.6e}"))
}

pub fn cmd_summary(dir: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let out_dir = out.unwrap_or_else(|| dir.to_path_buf());
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let tol = FeasibilityTolerances::default();
    let groups = group(load_histories(dir)?);

    let stats: Vec<GroupStats> = groups
        .iter()
        .map(|(label, runs)| stats_for(label, runs, &tol))
        .collect();

    // Table and CSV.
    let header = format!(
        "{:<28} {:>5} {:>14} {:>12} {:>14} {:>9} {:>14}",
        "group", "runs", "total time", "total iters", "time/iter", "feasible", "best f"
    );
    println!("{header}");
    let mut csv = String::from(
        "group,runs,total_time,total_iters,time_per_iter,feasible_runs,best_objective\n",
    );
    for s in &stats {
        println!(
            "{:<28} {:>5} {:>14.6} {:>12} {:>14.6e} {:>9} {:>14}",
            s.label, s.runs, s.total_time, s.total_iters, s.time_per_iter, s.feasible_runs,
            opt(s.best_objective)
        );
        csv.push_str(&format!(
            "{},{},{:e},{},{:e},{},{}\n",
            s.label,
            s.runs,
            s.total_time,
            s.total_iters,
            s.time_per_iter,
            s.feasible_runs,
            s.best_objective.map_or(String::new(), |f| format!("{f:e}"))
        ));
    }

    // Cross-solver ratios per start set (sampling solver over the
    // quasi-Newton one), only where both solvers ran the set.
    let mut ratio_lines = Vec::new();
    for s in &stats {
        if let Some(set) = s.label.strip_prefix("sqp_gs ") {
            if let Some(base) = stats.iter().find(|b| b.label == format!("bfgs_sqp {set}")) {
                if base.total_time > 0.0 && base.total_iters > 0 && base.time_per_iter > 0.0 {
                    ratio_lines.push(format!(
                        "ratio {set}: time {:.3}, iters {:.3}, time/iter {:.3}",
                        s.total_time / base.total_time,
                        s.total_iters as f64 / base.total_iters as f64,
                        s.time_per_iter / base.time_per_iter
                    ));
                }
            }
        }
    }
    for line in &ratio_lines {
        println!("{line}");
    }
    write(&out_dir.join("summary.csv"), &csv)?;

    // Sorted best-value listing per group: infeasible runs first, then
    // feasible bests in decreasing order.
    let mut plots = Vec::new();
    for (label, runs) in &groups {
        let mut bests: Vec<(String, Option<f64>)> = runs
            .iter()
            .map(|h| (h.start_id.clone(), h.best_feasible_within(f64::INFINITY, &tol)))
            .collect();
        bests.sort_by(|a, b| match (a.1, b.1) {
            (None, None) => a.0.cmp(&b.0),
            (None, Some(_)) => std::cmp::Ordering::Less,
            (Some(_), None) => std::cmp::Ordering::Greater,
            (Some(x), Some(y)) => y.partial_cmp(&x).unwrap().then_with(|| a.0.cmp(&b.0)),
        });
        let mut c = String::from("rank,start_id,best_objective\n");
        for (i, (id, b)) in bests.iter().enumerate() {
            c.push_str(&format!(
                "{},{id},{}\n",
                i + 1,
                b.map_or_else(|| "infeasible".to_string(), |f| format!("{f:e}"))
            ));
        }
        let slug = label.replace(' ', "__");
        write(&out_dir.join(format!("best_values__{slug}.csv")), &c)?;
        plots.push(sorted_best_plot(&bests, label));
    }
    write(&out_dir.join("best_values.svg"), &panel_grid(&plots, 2))?;
    Ok(())
}

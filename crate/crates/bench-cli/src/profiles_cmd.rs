//! The `rmp` and `gl` subcommands: profile curves per (solver, start
//! set) group with multi-panel SVG output.

use std::path::{Path, PathBuf};

use shaper_opt::profiles::{
    gl_feasibility_curve, gl_objective_curve, rmp_curve, Budgets, GlSpec, RmpSpec, TargetMode,
};
use shaper_opt::svg::{gl_plot, panel_grid, rmp_plot};

use crate::load::{group, load_histories, Groups};
use crate::CliError;

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            if t.eq_ignore_ascii_case("inf") {
                Ok(f64::INFINITY)
            } else {
                t.parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("{what}: cannot parse `{t}`")))
            }
        })
        .collect()
}

fn parse_target(s: &str) -> Result<TargetMode, CliError> {
    match s {
        "best-known" => Ok(TargetMode::BestKnown),
        "best-known-scaled" => Ok(TargetMode::BestKnownScaled),
        "median-of-best" => Ok(TargetMode::MedianOfBest),
        other => match other.strip_prefix("fixed:") {
            Some(v) => v
                .parse::<f64>()
                .map(TargetMode::Fixed)
                .map_err(|_| CliError::Usage(format!("target: cannot parse `{v}`"))),
            None => Err(CliError::Usage(format!(
                "unknown target mode `{other}` (best-known, best-known-scaled, median-of-best, fixed:<v>)"
            ))),
        },
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn slug(label: &str) -> String {
    label.replace(' ', "__").replace('.', "_")
}

/// The largest final cumulative cost over all runs: a natural default
/// per-run budget under which every run counts in full.
fn max_final_cost(groups: &Groups) -> f64 {
    groups
        .values()
        .flatten()
        .map(|h| h.records.last().unwrap().cost)
        .fold(0.0, f64::max)
}

pub fn cmd_rmp(
    dir: &Path,
    budget: Option<f64>,
    betas_arg: &str,
    target_arg: &str,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let out_dir = out.unwrap_or_else(|| dir.to_path_buf());
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let betas = parse_floats(betas_arg, "betas")?;
    if betas.iter().any(|&b| !(b > 0.0)) {
        return Err(CliError::Usage("betas must be positive".into()));
    }
    let target = parse_target(target_arg)?;
    let groups = group(load_histories(dir)?);

    let b = match budget {
        Some(b) if b > 0.0 => b,
        Some(_) => return Err(CliError::Usage("budget must be positive".into())),
        None => {
            let b = max_final_cost(&groups);
            if b <= 0.0 {
                return Err(CliError::Data(
                    "histories carry no positive costs; pass --budget".into(),
                ));
            }
            b
        }
    };
    let spec = RmpSpec::new(betas.clone(), Budgets::Fixed(b), target);

    let mut plots = Vec::new();
    for &beta in &betas {
        let mut curves = Vec::new();
        for (label, runs) in &groups {
            let c = rmp_curve(runs, &spec, beta, label)
                .map_err(|e| CliError::Data(format!("rmp for {label}: {e}")))?;
            write(
                &out_dir.join(format!("rmp__beta{beta}__{}.csv", slug(label))),
                &c.to_csv(),
            )?;
            curves.push(c);
        }
        plots.push(rmp_plot(&curves, &format!("RMP, beta = {beta}")));
    }
    write(&out_dir.join("rmp_panel.svg"), &panel_grid(&plots, 2))?;
    Ok(())
}

pub fn cmd_gl(
    dir: &Path,
    budgets_arg: &str,
    subset_sizes_arg: Option<&str>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let out_dir = out.unwrap_or_else(|| dir.to_path_buf());
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let budgets = parse_floats(budgets_arg, "budgets")?;
    if budgets.iter().any(|&b| !(b > 0.0) || b.is_infinite()) {
        return Err(CliError::Usage("budgets must be positive and finite".into()));
    }
    let groups = group(load_histories(dir)?);

    let subset_sizes: Vec<usize> = match subset_sizes_arg {
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("subset-sizes: cannot parse `{t}`")))
            })
            .collect::<Result<_, _>>()?,
        None => {
            // Powers of two up to the smallest group size.
            let n = groups.values().map(|r| r.len()).min().unwrap_or(1);
            let mut v = Vec::new();
            let mut m = 1usize;
            while m <= n {
                v.push(m);
                m *= 2;
            }
            v
        }
    };
    if subset_sizes.iter().any(|&m| m == 0) {
        return Err(CliError::Usage("subset sizes must be >= 1".into()));
    }
    let spec = GlSpec::new(budgets.clone(), subset_sizes);

    let mut obj_plots = Vec::new();
    let mut feas_plots = Vec::new();
    for &t_total in &budgets {
        let mut obj_curves = Vec::new();
        let mut feas_curves = Vec::new();
        for (label, runs) in &groups {
            let oc = gl_objective_curve(runs, &spec, t_total, label)
                .map_err(|e| CliError::Data(format!("gl for {label}: {e}")))?;
            let fc = gl_feasibility_curve(runs, &spec, t_total, label)
                .map_err(|e| CliError::Data(format!("gl for {label}: {e}")))?;
            write(
                &out_dir.join(format!("gl_obj__T{t_total}__{}.csv", slug(label))),
                &oc.to_csv(),
            )?;
            write(
                &out_dir.join(format!("gl_feas__T{t_total}__{}.csv", slug(label))),
                &fc.to_csv(),
            )?;
            obj_curves.push(oc);
            feas_curves.push(fc);
        }
        obj_plots.push(gl_plot(
            &obj_curves,
            &format!("GL objective, T = {t_total}"),
            "expected best feasible f",
        ));
        feas_plots.push(gl_plot(
            &feas_curves,
            &format!("GL feasibility, T = {t_total}"),
            "feasibility probability",
        ));
    }
    write(&out_dir.join("gl_objective.svg"), &panel_grid(&obj_plots, 2))?;
    write(&out_dir.join("gl_feasibility.svg"), &panel_grid(&feas_plots, 2))?;
    Ok(())
}

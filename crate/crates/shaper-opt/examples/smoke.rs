use shaper_opt::bfgs_sqp::{self, BfgsSqpConfig};
use shaper_opt::instance::{generate_starts, paper_instance_file, StartKind};
use shaper_opt::problem::{is_feasible, FeasibilityTolerances};
use shaper_opt::solver::CostModel;
use shaper_opt::sqp_gs::{self, SqpGsConfig};
use std::time::Instant;

fn main() {
    let inst = paper_instance_file().build().unwrap();
    let problem = shaper_opt::instance::build_problem(&inst).unwrap();
    let starts = generate_starts(StartKind::Lc, 18, 2, 42);
    let tol = FeasibilityTolerances::default();

    for (i, x0) in starts.iter().enumerate() {
        let t0 = Instant::now();
        let cfg = BfgsSqpConfig { max_iters: 40, cost_model: CostModel::WallClock, ..Default::default() };
        let h = bfgs_sqp::run(&problem, x0, &cfg, &format!("lc{i}")).unwrap();
        let last = h.records.last().unwrap();
        println!(
            "bfgs_sqp start {i}: {:?} iters={} f={:.6e} viol_ineq_max={:.2e} eq={:.2e} feas={} rho={} wall={:?}",
            h.termination, h.records.len(), last.f,
            last.c_ineq.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            last.c_eq.iter().map(|c| c.abs()).sum::<f64>(),
            is_feasible(&last.c_ineq, &last.c_eq, &tol), last.rho, t0.elapsed()
        );
    }
    let t0 = Instant::now();
    let cfg = SqpGsConfig { max_iters: 15, seed: 1, ..Default::default() };
    let h = sqp_gs::run(&problem, &starts[0], &cfg, "lc0").unwrap();
    println!("sqp_gs termination {:?} records {}", h.termination, h.records.len());
    if h.records.is_empty() { return; }
    let last = h.records.last().unwrap();
    println!(
        "sqp_gs start 0: {:?} iters={} f={:.6e} feas={} wall={:?} per_iter={:?}",
        h.termination, h.records.len(), last.f,
        is_feasible(&last.c_ineq, &last.c_eq, &tol), t0.elapsed(),
        t0.elapsed() / h.records.len() as u32
    );
}

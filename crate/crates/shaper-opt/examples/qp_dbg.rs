use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shaper_opt::instance::{build_problem, generate_starts, paper_instance_file, StartKind};
use shaper_opt::qp::{assemble_sqpgs_qp, solve_qp, FunctionLinearization};

fn main() {
    let inst = paper_instance_file().build().unwrap();
    let problem = build_problem(&inst).unwrap();
    let x = generate_starts(StartKind::Lc, 18, 1, 42).remove(0);
    let obj = problem.eval_objective(&x).unwrap();
    let ineq = problem.eval_inequalities(&x).unwrap();
    let eq = problem.eval_equalities(&x).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ineq_lins = Vec::new();
    for (j, c) in problem.inequalities.iter().enumerate() {
        let mut grads = vec![ineq.jacobian.row(j).transpose()];
        if c.nonsmooth {
            let mut added = 0;
            while added < 36 {
                let mut u = DVector::from_fn(18, |_, _| rng.sample::<f64, _>(StandardNormal));
                u /= u.norm();
                let r = 0.1 * rng.gen::<f64>().powf(1.0 / 18.0);
                let y = &x + u * r;
                if let Ok(e) = (c.eval)(&y) {
                    grads.push(e.gradient);
                    added += 1;
                }
            }
        }
        ineq_lins.push(FunctionLinearization { value: ineq.values[j], gradients: grads });
    }
    let eq_lins: Vec<_> = (0..eq.values.len())
        .map(|j| FunctionLinearization::single(eq.values[j], eq.jacobian.row(j).transpose()))
        .collect();
    let obj_lin = FunctionLinearization::single(obj.value, obj.gradient.clone());
    let (qp, layout) = assemble_sqpgs_qp(&obj_lin, &ineq_lins, &eq_lins, 1.0, &nalgebra::DMatrix::identity(18, 18)).unwrap();
    println!("vars {} rows {}", qp.linear.len(), qp.a.nrows());
    match solve_qp(&qp) {
        Ok(s) => {
            println!("ok kkt={:.3e} obj={:.6e} |W|={} |d|={:.3e}", s.kkt_residual, s.objective, s.active_set.len(), layout.direction(&s).norm());
            let stat = (&qp.hessian * &s.x + &qp.linear + qp.a.transpose() * &s.multipliers).amax();
            let r = &qp.a * &s.x - &qp.b;
            let primal = r.iter().cloned().fold(0.0f64, |m, v| m.max(v));
            let compl = (0..r.len()).map(|i| (s.multipliers[i] * r[i]).abs()).fold(0.0f64, f64::max);
            println!("stat={stat:.3e} primal={primal:.3e} compl={compl:.3e} lam_max={:.3e}", s.multipliers.amax());
            for i in 0..r.len() {
                let c = (s.multipliers[i] * r[i]).abs();
                if c > 1e-10 || r[i] > 1e-10 {
                    println!("row {i} r={:.3e} lam={:.3e} active={}", r[i], s.multipliers[i], s.active_set.contains(&i));
                }
            }
        }
        Err(e) => println!("error {e:?}"),
    }
}

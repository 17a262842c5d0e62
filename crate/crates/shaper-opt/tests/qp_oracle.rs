//! Cross-checks the QP engine against an independent brute-force
//! oracle: exhaustive enumeration of candidate active sets, solving the
//! equality-constrained system for each and keeping the best KKT point.

mod common;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use shaper_opt::qp::{kkt_residual, solve_qp, KKT_TOL};

#[test]
fn qp_matches_enumeration_oracle_on_200_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..200 {
        let p = common::random_qp(&mut rng);
        let sol = solve_qp(&p).unwrap_or_else(|e| panic!("trial {trial}: solver failed: {e}"));
        let (ox, oobj) = common::enumerate_qp(&p.hessian, &p.linear, &p.a, &p.b)
            .unwrap_or_else(|| panic!("trial {trial}: oracle found no KKT point"));
        assert!(
            (sol.x.clone() - &ox).amax() <= 1e-8,
            "trial {trial}: x differs from oracle by {:.3e}",
            (sol.x.clone() - &ox).amax()
        );
        assert!(
            (sol.objective - oobj).abs() <= 1e-8,
            "trial {trial}: objective differs by {:.3e}",
            (sol.objective - oobj).abs()
        );
        assert!(
            sol.kkt_residual <= KKT_TOL,
            "trial {trial}: kkt residual {:.3e} exceeds {KKT_TOL:.0e}",
            sol.kkt_residual
        );
        // The certificate is recomputable from the returned data alone.
        let recomputed = kkt_residual(&p, &sol.x, &sol.multipliers);
        assert!(recomputed <= KKT_TOL.max(sol.kkt_residual * 1.01));
    }
}

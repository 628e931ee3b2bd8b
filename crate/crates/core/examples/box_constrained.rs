//! Speed and growth limits. With enough speed the bump moves and grows; with
//! too little the iteration diverges and is reported as likely infeasible.

use udot::alm::{solve, SolverConfig};
use udot::grid::{GridSpec, MeasurePair};
use udot::hamiltonian::HamiltonianSpec;
use udot::instance::{check_feasibility, Problem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::unit(1, 32, 32)?;
    let bump = |c: f64| {
        move |x: &[f64]| {
            let d = (x[0] - c).abs() / 0.1;
            if d < 1.0 { (1.0 - d * d).powi(2) } else { 0.0 }
        }
    };
    let measures = MeasurePair::from_densities(grid, bump(0.3), |x| 1.5 * bump(0.6)(x))?;

    for v_max in [1.0, 0.2] {
        let ham = HamiltonianSpec::BoxConstrained { delta: 1.0, v_max, w_min: 0.0, w_max: 1.0 };
        let cfg = SolverConfig { max_iters: 3000, divergence_bound: 1.0, ..SolverConfig::default() };
        let problem = Problem { grid, ham, measures: measures.clone(), solver: cfg };
        for w in check_feasibility(&problem)? {
            println!("warning: {w}");
        }
        let report = solve(&measures, &ham, &cfg)?;
        println!(
            "v_max = {v_max}: {:?} after {} iterations, cost {:.5}, dual {:.5}",
            report.termination,
            report.iterations.len(),
            report.primal_cost(),
            report.dual_value()
        );
    }
    Ok(())
}

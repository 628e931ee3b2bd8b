//! The occupation-measure linear program on a nine-node instance, compared
//! with the augmented Lagrangian solver on the same nodes.

use udot::alm::{solve, SolverConfig};
use udot::grid::{GridSpec, MeasurePair, SpatialBox};
use udot::hamiltonian::HamiltonianSpec;
use udot::oracle::{action_grid, build_lp, solve_lp};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ham = HamiltonianSpec::Wfr { delta: 1.0 };
    let mu0 = vec![0.0, 0.0, 0.1, 0.25, 0.3, 0.25, 0.1, 0.0, 0.0];
    let mu1: Vec<f64> = mu0.iter().map(|m| 2.0 * m).collect();

    let domain = SpatialBox::new(&[0.0], &[1.0])?;
    let actions = action_grid(1.0, 3, 0.0, 1.4, 8);
    let lp = build_lp(&domain, &mu0, &mu1, &actions, 8, &ham)?;
    let sol = solve_lp(&lp)?;
    println!("LP: {:?}, objective {:.5}, {} variables", sol.status, sol.objective, lp.variable_count());
    for step in [0, 4, 7] {
        let m: Vec<String> = sol.measure.node_mass(step).iter().map(|v| format!("{v:.3}")).collect();
        println!("  step {step}: {}", m.join(" "));
    }

    let grid = GridSpec::new(32, &[8], &[0.0], &[1.0])?;
    let report = solve(&MeasurePair::new(grid, mu0, mu1)?, &ham, &SolverConfig::default())?;
    let exact = 2.0 * (2.0_f64.sqrt() - 1.0).powi(2);
    println!("ALM: {:?}, cost {:.5}; pure growth closed form {exact:.5}", report.termination, report.primal_cost());
    Ok(())
}

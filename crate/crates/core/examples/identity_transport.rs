//! A bump that stays put: the optimal cost is zero and the solver should
//! find it within a few hundred iterations.

use udot::alm::{solve, SolverConfig};
use udot::grid::{GridSpec, MeasurePair};
use udot::hamiltonian::HamiltonianSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::unit(1, 32, 32)?;
    let bump = |x: &[f64]| (-(x[0] - 0.5).powi(2) / 0.02).exp();
    let measures = MeasurePair::from_densities(grid, bump, bump)?;

    let report = solve(&measures, &HamiltonianSpec::Balanced, &SolverConfig::default())?;
    println!(
        "{:?} after {} iterations: primal {:.3e}, dual {:.3e}, gap {:.3e}",
        report.termination,
        report.iterations.len(),
        report.primal_cost(),
        report.dual_value(),
        report.gap()
    );
    Ok(())
}

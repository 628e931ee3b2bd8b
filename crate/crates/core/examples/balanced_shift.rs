//! Mass-conserving transport of a narrow bump, checked against the
//! one-dimensional quantile formula.

use udot::alm::{solve, SolverConfig};
use udot::grid::{GridSpec, MeasurePair};
use udot::hamiltonian::HamiltonianSpec;
use udot::instance::{sample_component, MeasureComponent};
use udot::oracle::quantile_ot_1d;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::unit(1, 64, 64)?;
    // unit-mass bumps; the generator rescales the sampled density exactly
    let bump = |c: f64| sample_component(&grid, &MeasureComponent::Gaussian { center: vec![c], width: 0.05, mass: 1.0 });
    let measures = MeasurePair::new(grid, bump(0.3)?, bump(0.6)?)?;

    let x: Vec<f64> = (0..grid.spatial_nodes()).map(|s| grid.spatial_coords(s)[0]).collect();
    let reference = quantile_ot_1d(&x, &measures.mu0, &x, &measures.mu1)?;

    let cfg = SolverConfig { max_iters: 5000, ..SolverConfig::default() };
    let report = solve(&measures, &HamiltonianSpec::Balanced, &cfg)?;
    println!("{:?} after {} iterations", report.termination, report.iterations.len());
    println!(
        "cost {:.6}, quantile reference {reference:.6}, relative difference {:.2e}",
        report.primal_cost(),
        (report.primal_cost() - reference).abs() / reference
    );
    Ok(())
}

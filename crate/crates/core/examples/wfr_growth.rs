//! Pure growth under the Wasserstein–Fisher–Rao Hamiltonian. Mass quadruples
//! in place; the closed-form cost is `2δ²(√4 − 1)² = 2`.

use udot::alm::{hjb_residual, solve, SolverConfig};
use udot::grid::{GridSpec, MeasurePair};
use udot::hamiltonian::HamiltonianSpec;
use udot::output::density_at;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let delta = 1.0;
    let ham = HamiltonianSpec::Wfr { delta };
    let grid = GridSpec::unit(1, 64, 64)?;
    let bump = |x: &[f64]| (-(x[0] - 0.5).powi(2) / 0.02).exp();
    let raw = MeasurePair::from_densities(grid, bump, bump)?;
    // unit initial mass, so the cost can be read off directly
    let scale = 1.0 / raw.mass0();
    let mu0: Vec<f64> = raw.mu0.iter().map(|m| m * scale).collect();
    let mu1: Vec<f64> = mu0.iter().map(|m| 4.0 * m).collect();
    let measures = MeasurePair::new(grid, mu0, mu1)?;

    let cfg = SolverConfig { max_iters: 5000, ..SolverConfig::default() };
    let report = solve(&measures, &ham, &cfg)?;
    let exact = 2.0 * delta * delta * (4.0_f64.sqrt() - 1.0).powi(2);
    println!("{:?} after {} iterations", report.termination, report.iterations.len());
    println!("cost {:.6} (closed form {exact}), gap {:.2e}", report.primal_cost(), report.gap());
    println!("HJB residual {:.2e}, feasibility {:.2e}", hjb_residual(&report.phi, &ham)?, report.feas_residual());

    // the optimal mass path is (1 + t)² times the initial mass
    let sol = report.primal(&ham);
    let ws = grid.spatial_weights();
    let m0 = measures.mass0();
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let mass: f64 = density_at(&sol.mu, &measures, t).iter().zip(&ws).map(|(m, w)| m * w).sum();
        println!("  t = {t:.2}: mass {:.4}  expected {:.4}", mass / m0, (1.0 + t).powi(2));
    }
    Ok(())
}

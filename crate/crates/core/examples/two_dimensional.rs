//! A planar instance read from TOML, solved, and written out as report,
//! metrics and snapshots.

use std::path::Path;

use udot::alm::AlmSolver;
use udot::instance::{check_feasibility, InstanceFile};
use udot::output::{write_outputs, RunReport};

const INSTANCE: &str = r#"
[grid]
d = 2
n_t = 12
n_x = [16, 16]

[hamiltonian]
variant = "wfr"
delta = 0.5

[measures]
mu0 = [{ kind = "gaussian", center = [0.35, 0.35], width = 0.1, mass = 1.0 }]
mu1 = [{ kind = "gaussian", center = [0.6, 0.55], width = 0.1, mass = 1.5 }]

[solver]
max_iters = 3000
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (_, problem) = InstanceFile::load_str(INSTANCE, Path::new("planar.toml"))?;
    let warnings = check_feasibility(&problem)?;
    let report = AlmSolver::new(&problem.measures, &problem.ham, &problem.solver)?.run();
    let run = RunReport::new(&problem, &report, warnings)?;
    println!(
        "{:?} after {} iterations: cost {:.5}, dual {:.5}, gap {:.2e}",
        run.termination, run.iterations, run.primal_cost, run.dual_value, run.gap
    );
    println!("snapshot masses: {:?}", run.snapshot_masses.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>());

    let out = std::env::temp_dir().join("udot-two-dimensional");
    write_outputs(&out, &run, &report, &report.primal(&problem.ham), &problem.measures)?;
    println!("wrote {}", out.display());
    Ok(())
}

//! The `udot` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::alm::{AlmSolver, StepStatus, Termination};
use crate::error::{Result, UdotError};
use crate::grid::SpatialBox;
use crate::hamiltonian::{control_bounds, HamiltonianSpec};
use crate::instance::{check_feasibility, InstanceFile, Problem};
use crate::oracle::{action_grid, build_lp, dirac_pair_cost, quantile_ot_1d, solve_lp};
use crate::output::{write_outputs, RunReport};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_MAX_ITERS: i32 = 3;
pub const EXIT_INPUT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "udot", version, about = "Dynamical unbalanced optimal transport by augmented Lagrangian iteration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an instance and write report.json, metrics.csv and snapshots.
    Solve {
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        tol_feas: Option<f64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Parse an instance and report necessary-condition warnings.
    Check { instance: PathBuf },
    /// Reference solvers used to cross-check the main solver.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Optimal cost between two weighted points by direct transcription.
    Dirac {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long)]
        m0: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x1: Vec<f64>,
        #[arg(long)]
        m1: f64,
        #[command(flatten)]
        ham: HamArgs,
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
    /// Occupation-measure LP on a one-dimensional instance.
    Lp {
        instance: PathBuf,
        #[arg(long, default_value_t = 3)]
        nv: usize,
        #[arg(long, default_value_t = 5)]
        nw: usize,
        /// Velocity range of the action grid (default: the instance's control bounds).
        #[arg(long)]
        v_max: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        w_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        w_max: Option<f64>,
    },
    /// Balanced quadratic cost between two atomic measures on the line.
    Quantile {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        m0: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x1: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        m1: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Variant {
    Wfr,
    Balanced,
    Box,
}

#[derive(Debug, Args)]
pub struct HamArgs {
    #[arg(long, value_enum, default_value = "wfr")]
    variant: Variant,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long)]
    v_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    w_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    w_max: Option<f64>,
}

impl HamArgs {
    fn spec(&self) -> Result<HamiltonianSpec> {
        let spec = match self.variant {
            Variant::Wfr => HamiltonianSpec::Wfr { delta: self.delta },
            Variant::Balanced => HamiltonianSpec::Balanced,
            Variant::Box => {
                let need = |v: Option<f64>, name: &str| {
                    v.ok_or_else(|| UdotError::Config(format!("--variant box needs --{name}")))
                };
                HamiltonianSpec::BoxConstrained {
                    delta: self.delta,
                    v_max: need(self.v_max, "v-max")?,
                    w_min: need(self.w_min, "w-min")?,
                    w_max: need(self.w_max, "w-max")?,
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn input_error_code(e: &UdotError) -> i32 {
    match e {
        UdotError::Io(_) | UdotError::ConvergenceFailure { .. } | UdotError::ExitsDomain { .. } => EXIT_FAILURE,
        _ => EXIT_INPUT,
    }
}

pub fn exit_code(t: Termination) -> i32 {
    match t {
        Termination::Converged => EXIT_CONVERGED,
        Termination::LikelyInfeasible => EXIT_INFEASIBLE,
        Termination::MaxIters => EXIT_MAX_ITERS,
        Termination::NumericalFailure => EXIT_FAILURE,
    }
}

fn load(path: &Path) -> Result<Problem> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UdotError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(InstanceFile::load_str(&text, path)?.1)
}

fn solve_command(
    instance: &Path,
    out: &Path,
    max_iters: Option<usize>,
    r: Option<f64>,
    tol_feas: Option<f64>,
    quiet: bool,
) -> i32 {
    let prepared = (|| -> Result<(Problem, Vec<String>, AlmSolver)> {
        let mut problem = load(instance)?;
        if let Some(n) = max_iters {
            problem.solver.max_iters = n;
        }
        if let Some(r) = r {
            problem.solver.r = r;
        }
        if let Some(t) = tol_feas {
            problem.solver.tol_feas = t;
        }
        problem.solver.validate()?;
        let warnings = check_feasibility(&problem)?;
        let solver = AlmSolver::new(&problem.measures, &problem.ham, &problem.solver)?;
        Ok((problem, warnings, solver))
    })();
    let (problem, warnings, mut solver) = match prepared {
        Ok(p) => p,
        Err(e) => {
            eprintln!("udot: {e}");
            return input_error_code(&e);
        }
    };
    if !quiet {
        for w in &warnings {
            eprintln!("udot: warning: {w}");
        }
    }
    let termination = loop {
        let status = solver.step();
        if !quiet {
            let rec = solver.records().last().copied();
            if let Some(rec) = rec.filter(|r| r.iter % 100 == 0) {
                eprintln!(
                    "iter {:6}  dual {:+.6e}  primal {:+.6e}  gap {:.2e}  feas {:.2e}",
                    rec.iter, rec.dual_value, rec.primal_cost, rec.gap, rec.feas_residual
                );
            }
        }
        if let StepStatus::Done(t) = status {
            break t;
        }
    };
    let report = solver.into_report(termination);
    let written = (|| -> Result<RunReport> {
        let run = RunReport::new(&problem, &report, warnings)?;
        write_outputs(out, &run, &report, &report.primal(&problem.ham), &problem.measures)?;
        Ok(run)
    })();
    match written {
        Ok(run) => {
            if !quiet {
                println!(
                    "{:?} after {} iterations: primal {:.8e}  dual {:.8e}  gap {:.3e}",
                    run.termination, run.iterations, run.primal_cost, run.dual_value, run.gap
                );
            }
            exit_code(termination)
        }
        Err(e) => {
            eprintln!("udot: {e}");
            EXIT_FAILURE
        }
    }
}

fn check_command(instance: &Path) -> i32 {
    match load(instance).and_then(|p| check_feasibility(&p).map(|w| (p, w))) {
        Ok((p, warnings)) => {
            println!(
                "{}: d = {}, {} time cells, {} spatial nodes, masses {} -> {}",
                instance.display(),
                p.grid.dim(),
                p.grid.n_t,
                p.grid.spatial_nodes(),
                p.measures.mass0(),
                p.measures.mass1()
            );
            for w in &warnings {
                println!("warning: {w}");
            }
            EXIT_CONVERGED
        }
        Err(e) => {
            eprintln!("udot: {e}");
            input_error_code(&e)
        }
    }
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

fn oracle_command(cmd: &OracleCommand) -> i32 {
    let result = (|| -> Result<serde_json::Value> {
        match cmd {
            OracleCommand::Dirac { x0, m0, x1, m1, ham, steps } => {
                let cost = dirac_pair_cost(x0, *m0, x1, *m1, &ham.spec()?, *steps)?;
                Ok(serde_json::json!({ "cost": cost }))
            }
            OracleCommand::Quantile { x0, m0, x1, m1 } => {
                Ok(serde_json::json!({ "cost": quantile_ot_1d(x0, m0, x1, m1)? }))
            }
            OracleCommand::Lp { instance, nv, nw, v_max, w_min, w_max } => {
                let p = load(instance)?;
                let domain: SpatialBox = p.grid.domain;
                let b = control_bounds(&p.ham, &domain, p.measures.mass0(), p.measures.mass1());
                let actions = action_grid(
                    v_max.unwrap_or(b.v_max),
                    *nv,
                    w_min.unwrap_or(b.w_min),
                    w_max.unwrap_or(b.w_max),
                    *nw,
                );
                let lp = build_lp(&domain, &p.measures.mu0, &p.measures.mu1, &actions, p.grid.n_t, &p.ham)?;
                let sol = solve_lp(&lp)?;
                Ok(serde_json::json!({
                    "status": sol.status,
                    "objective": sol.objective,
                    "balance_residual": sol.balance_residual,
                    "variables": lp.variable_count(),
                }))
            }
        }
    })();
    match result {
        Ok(v) => {
            print_json(v);
            EXIT_CONVERGED
        }
        Err(e) => {
            eprintln!("udot: {e}");
            input_error_code(&e)
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_CONVERGED };
            let _ = e.print();
            return code;
        }
    };
    match &cli.command {
        Command::Solve { instance, out, max_iters, r, tol_feas, quiet } => {
            solve_command(instance, out, *max_iters, *r, *tol_feas, *quiet)
        }
        Command::Check { instance } => check_command(instance),
        Command::Oracle(cmd) => oracle_command(cmd),
    }
}

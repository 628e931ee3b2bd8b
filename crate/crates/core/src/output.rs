//! Files written by a solve: `report.json`, `metrics.csv` and the density
//! snapshots `mu_t{k}.f64`.
//!
//! A snapshot is a 32-byte ASCII header `UDOT d n_t n_x...` padded with
//! spaces and terminated by `\n`, followed by the density at every spatial
//! node (first axis fastest) as little-endian `f64`. Snapshot `k` is taken at
//! `t = k/10`.
//!
//! Central time differences couple only time nodes of equal parity, so the
//! density on the time nodes carries a free odd/even mode and the one-sided
//! boundary stencil halves it on the first and last node. The quantity the
//! discrete continuity equation transports is the average of two consecutive
//! time nodes, which lives at half-steps. Snapshots interpolate linearly
//! between these half-step averages, with the prescribed `μ₀` and `μ₁` at
//! `t = 0` and `t = 1`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alm::{hjb_residual, IterationRecord, SolveReport, Termination};
use crate::error::{Result, UdotError};
use crate::grid::{Field, GridSpec, MeasurePair};
use crate::hamiltonian::{ControlBounds, HamiltonianSpec};
use crate::instance::Problem;
use crate::primal::{continuity_residual, primal_cost, PrimalSolution};

pub const SNAPSHOT_COUNT: usize = 11;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub termination: Termination,
    pub iterations: usize,
    pub dual_value: f64,
    pub primal_cost: f64,
    /// `|primal_cost − dual_value| / max(1, |dual_value|)`.
    pub gap: f64,
    pub feas_residual: f64,
    pub hjb_residual: f64,
    pub continuity_residual: f64,
    pub mass0: f64,
    pub mass1: f64,
    /// `∫ μ(t_k, ·)` at the snapshot times.
    pub snapshot_masses: Vec<f64>,
    pub mass_floor: f64,
    pub control_bounds: ControlBounds,
    pub hamiltonian: HamiltonianSpec,
    pub grid: GridSpec,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(problem: &Problem, report: &SolveReport, warnings: Vec<String>) -> Result<Self> {
        let sol = report.primal(&problem.ham);
        let dual_value = report.dual_value();
        let cost = primal_cost(&sol, &problem.ham);
        let hjb = hjb_residual(&report.phi, &problem.ham)?;
        let ws = problem.grid.spatial_weights();
        let snapshot_masses = (0..SNAPSHOT_COUNT)
            .map(|k| snapshot(&sol.mu, &problem.measures, k).iter().zip(&ws).map(|(m, w)| m * w).sum())
            .collect();
        Ok(RunReport {
            termination: report.termination,
            iterations: report.iterations.len(),
            dual_value,
            primal_cost: cost,
            gap: (cost - dual_value).abs() / dual_value.abs().max(1.0),
            feas_residual: report.feas_residual(),
            hjb_residual: hjb,
            continuity_residual: continuity_residual(&sol, &problem.measures),
            mass0: problem.measures.mass0(),
            mass1: problem.measures.mass1(),
            snapshot_masses,
            mass_floor: report.mass_floor,
            control_bounds: report.bounds,
            hamiltonian: problem.ham,
            grid: problem.grid,
            warnings,
        })
    }
}

/// Write `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| UdotError::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Density at time `t ∈ [0, 1]`, one value per spatial node.
pub fn density_at(mu: &Field, measures: &MeasurePair, t: f64) -> Vec<f64> {
    let grid = mu.grid();
    let s = grid.spatial_nodes();
    let n_t = grid.n_t;
    let ws = grid.spatial_weights();
    // knot j sits at time (j − ½)/n_t for 1 ≤ j ≤ n_t, knots 0 and n_t + 1 at the ends
    let knot = |j: usize| -> Vec<f64> {
        if j == 0 {
            measures.mu0.iter().zip(&ws).map(|(m, w)| m / w).collect()
        } else if j == n_t + 1 {
            measures.mu1.iter().zip(&ws).map(|(m, w)| m / w).collect()
        } else {
            let a = &mu.values()[(j - 1) * s..j * s];
            let b = &mu.values()[j * s..(j + 1) * s];
            a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
        }
    };
    let knot_time = |j: usize| -> f64 {
        if j == 0 {
            0.0
        } else if j == n_t + 1 {
            1.0
        } else {
            (j as f64 - 0.5) / n_t as f64
        }
    };
    let t = t.clamp(0.0, 1.0);
    let hi = (1..=n_t + 1).find(|&j| knot_time(j) >= t).unwrap_or(n_t + 1);
    let lo = hi - 1;
    let frac = (t - knot_time(lo)) / (knot_time(hi) - knot_time(lo));
    knot(lo).iter().zip(knot(hi)).map(|(x, y)| (1.0 - frac) * x + frac * y).collect()
}

/// Density at `t = k/10`.
pub fn snapshot(mu: &Field, measures: &MeasurePair, k: usize) -> Vec<f64> {
    density_at(mu, measures, k as f64 / (SNAPSHOT_COUNT - 1) as f64)
}

pub fn snapshot_header(grid: &GridSpec) -> [u8; HEADER_LEN] {
    let mut text = format!("UDOT {} {}", grid.dim(), grid.n_t);
    for k in 0..grid.dim() {
        text.push_str(&format!(" {}", grid.n_x[k]));
    }
    let mut out = [b' '; HEADER_LEN];
    out[..text.len()].copy_from_slice(text.as_bytes());
    out[HEADER_LEN - 1] = b'\n';
    out
}

pub fn encode_snapshot(grid: &GridSpec, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    out.extend_from_slice(&snapshot_header(grid));
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_snapshot`]: the grid shape `(d, n_t, n_x)` and values.
pub fn decode_snapshot(bytes: &[u8]) -> Result<(usize, usize, Vec<usize>, Vec<f64>)> {
    let bad = |m: &str| UdotError::Config(format!("malformed snapshot: {m}"));
    if bytes.len() < HEADER_LEN || bytes[HEADER_LEN - 1] != b'\n' {
        return Err(bad("short or unterminated header"));
    }
    let header = std::str::from_utf8(&bytes[..HEADER_LEN - 1]).map_err(|_| bad("header is not ASCII"))?;
    let mut words = header.split_whitespace();
    if words.next() != Some("UDOT") {
        return Err(bad("missing UDOT tag"));
    }
    let nums: Vec<usize> = words.map(|w| w.parse().map_err(|_| bad("non-numeric header field"))).collect::<Result<_>>()?;
    if nums.len() < 3 || nums.len() != 2 + nums[0] {
        return Err(bad("header field count does not match d"));
    }
    let (d, n_t, n_x) = (nums[0], nums[1], nums[2..].to_vec());
    let nodes: usize = n_x.iter().map(|n| n + 1).product();
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * nodes {
        return Err(bad("payload length does not match header"));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((d, n_t, n_x, values))
}

pub fn metrics_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from("iter,dual_value,primal_cost,gap,feas_residual,cg_iterations\n");
    for r in records {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{}\n",
            r.iter, r.dual_value, r.primal_cost, r.gap, r.feas_residual, r.cg_iterations
        ));
    }
    out
}

/// Write every output file of a finished solve into `dir`.
pub fn write_outputs(
    dir: &Path,
    run: &RunReport,
    report: &SolveReport,
    sol: &PrimalSolution,
    measures: &MeasurePair,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(run).map_err(|e| UdotError::Config(e.to_string()))?;
    write_atomic(&dir.join("report.json"), json.as_bytes())?;
    write_atomic(&dir.join("metrics.csv"), metrics_csv(&report.iterations).as_bytes())?;
    for k in 0..SNAPSHOT_COUNT {
        let bytes = encode_snapshot(sol.grid(), &snapshot(&sol.mu, measures, k));
        write_atomic(&dir.join(format!("mu_t{k}.f64")), &bytes)?;
    }
    Ok(())
}

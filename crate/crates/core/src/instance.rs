//! Problem-instance files (TOML) and the necessary feasibility conditions
//! that can be checked before solving.
//!
//! ```toml
//! [grid]
//! d = 1
//! n_t = 64
//! n_x = 64            # or one count per axis: [64, 32]
//! lo = [0.0]
//! hi = [1.0]
//!
//! [hamiltonian]
//! variant = "wfr"     # "balanced" | "box"
//! delta = 1.0
//!
//! [measures]
//! mu0 = [{ kind = "gaussian", center = [0.5], width = 0.1, mass = 1.0 }]
//! mu1 = [{ kind = "gaussian", center = [0.5], width = 0.1, mass = 4.0 }]
//!
//! [solver]            # optional overrides
//! max_iters = 5000
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alm::{SolverConfig, MASS_BALANCE_TOL};
use crate::error::{Result, UdotError};
use crate::grid::{GridSpec, MeasurePair, MAX_DIM};
use crate::hamiltonian::HamiltonianSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub grid: GridSection,
    pub hamiltonian: HamiltonianSpec,
    pub measures: MeasuresSection,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    pub n_t: usize,
    pub n_x: CellCounts,
    #[serde(default)]
    pub lo: Option<Vec<f64>>,
    #[serde(default)]
    pub hi: Option<Vec<f64>>,
}

/// One count for every axis, or one per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellCounts {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuresSection {
    pub mu0: Vec<MeasureComponent>,
    pub mu1: Vec<MeasureComponent>,
}

/// A summand of a boundary measure. Generated components are sampled at the
/// spatial nodes and rescaled so that their node masses sum to `mass`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureComponent {
    /// Density `exp(−|x − center|² / (2 width²))`.
    Gaussian { center: Vec<f64>, width: f64, mass: f64 },
    /// Uniform density on the sub-box `[lo, hi]`.
    Box { lo: Vec<f64>, hi: Vec<f64>, mass: f64 },
    /// Compactly supported bump `(1 − |x − center|²/radius²)²`.
    DiracSmoothed { center: Vec<f64>, radius: f64, mass: f64 },
    /// Node masses listed in storage order (first axis fastest).
    Inline { values: Vec<f64> },
}

/// A validated instance, ready to solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub grid: GridSpec,
    pub ham: HamiltonianSpec,
    pub measures: MeasurePair,
    pub solver: SolverConfig,
}

fn section_line(text: &str, section: &str) -> usize {
    let header = format!("[{section}");
    let dotted = format!("{section}.");
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.starts_with(&header) || l.starts_with(&dotted)
        })
        .map_or(1, |i| i + 1)
}

impl InstanceFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].lines().count().max(1));
            let line = match e.span() {
                Some(s) if text[..s.start.min(text.len())].ends_with('\n') => line + 1,
                _ => line,
            };
            UdotError::Parse { path: path.to_path_buf(), line, message: e.message().to_string() }
        })
    }

    /// Parse and validate in one step; semantic errors point at the line of
    /// the offending section.
    pub fn load(path: &Path) -> Result<(Self, Problem)> {
        let text = std::fs::read_to_string(path)?;
        Self::load_str(&text, path)
    }

    pub fn load_str(text: &str, path: &Path) -> Result<(Self, Problem)> {
        let file = Self::parse(text, path)?;
        let problem = file.build_sections().map_err(|(section, err)| UdotError::Parse {
            path: path.to_path_buf(),
            line: section_line(text, section),
            message: err.to_string(),
        })?;
        Ok((file, problem))
    }

    pub fn build(&self) -> Result<Problem> {
        self.build_sections().map_err(|(_, e)| e)
    }

    fn build_sections(&self) -> std::result::Result<Problem, (&'static str, UdotError)> {
        let grid = self.grid.build().map_err(|e| ("grid", e))?;
        self.hamiltonian.validate().map_err(|e| ("hamiltonian", e))?;
        let mu0 = sample_components(&grid, &self.measures.mu0).map_err(|e| ("measures", e))?;
        let mu1 = sample_components(&grid, &self.measures.mu1).map_err(|e| ("measures", e))?;
        let measures = MeasurePair::new(grid, mu0, mu1).map_err(|e| ("measures", e))?;
        self.solver.validate().map_err(|e| ("solver", e))?;
        Ok(Problem { grid, ham: self.hamiltonian, measures, solver: self.solver })
    }

    /// Canonical TOML text; parsing it again yields an equal instance.
    pub fn to_canonical_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| UdotError::Config(format!("cannot serialise instance: {e}")))
    }
}

impl GridSection {
    pub fn build(&self) -> Result<GridSpec> {
        if self.d == 0 || self.d > MAX_DIM {
            return Err(UdotError::InvalidGrid(format!("d must be 1 or 2, got {}", self.d)));
        }
        let n_x = match &self.n_x {
            CellCounts::Uniform(n) => vec![*n; self.d],
            CellCounts::PerAxis(v) => v.clone(),
        };
        let lo = self.lo.clone().unwrap_or_else(|| vec![0.0; self.d]);
        let hi = self.hi.clone().unwrap_or_else(|| vec![1.0; self.d]);
        if n_x.len() != self.d || lo.len() != self.d || hi.len() != self.d {
            return Err(UdotError::InvalidGrid(format!("n_x, lo and hi must each have {} entries", self.d)));
        }
        GridSpec::new(self.n_t, &n_x, &lo, &hi)
    }
}

fn check_point(grid: &GridSpec, p: &[f64], what: &str) -> Result<()> {
    if p.len() != grid.dim() || p.iter().any(|v| !v.is_finite()) {
        return Err(UdotError::InvalidMeasure(format!("{what} needs {} finite coordinates", grid.dim())));
    }
    Ok(())
}

fn check_mass(mass: f64) -> Result<()> {
    if !(mass >= 0.0 && mass.is_finite()) {
        return Err(UdotError::InvalidMeasure(format!("mass must be finite and non-negative, got {mass}")));
    }
    Ok(())
}

/// Node masses of one component.
pub fn sample_component(grid: &GridSpec, comp: &MeasureComponent) -> Result<Vec<f64>> {
    let dim = grid.dim();
    let ws = grid.spatial_weights();
    let density = |f: &dyn Fn(&[f64]) -> f64, mass: f64| -> Result<Vec<f64>> {
        let raw: Vec<f64> =
            (0..grid.spatial_nodes()).map(|s| f(&grid.spatial_coords(s)[..dim]) * ws[s]).collect();
        let total: f64 = raw.iter().sum();
        if mass == 0.0 {
            return Ok(vec![0.0; raw.len()]);
        }
        if !(total > 0.0) {
            return Err(UdotError::InvalidMeasure("component has no grid node in its support".into()));
        }
        Ok(raw.iter().map(|m| m * mass / total).collect())
    };
    match comp {
        MeasureComponent::Gaussian { center, width, mass } => {
            check_point(grid, center, "gaussian center")?;
            check_mass(*mass)?;
            if !(*width > 0.0 && width.is_finite()) {
                return Err(UdotError::InvalidMeasure("gaussian width must be positive".into()));
            }
            let f = |x: &[f64]| {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                (-r2 / (2.0 * width * width)).exp()
            };
            density(&f, *mass)
        }
        MeasureComponent::Box { lo, hi, mass } => {
            check_point(grid, lo, "box lo")?;
            check_point(grid, hi, "box hi")?;
            check_mass(*mass)?;
            if lo.iter().zip(hi).any(|(a, b)| a > b) {
                return Err(UdotError::InvalidMeasure("box needs lo <= hi".into()));
            }
            let eps = 1e-12;
            let f = |x: &[f64]| {
                let inside = x.iter().enumerate().all(|(k, v)| *v >= lo[k] - eps && *v <= hi[k] + eps);
                if inside {
                    1.0
                } else {
                    0.0
                }
            };
            density(&f, *mass)
        }
        MeasureComponent::DiracSmoothed { center, radius, mass } => {
            check_point(grid, center, "dirac_smoothed center")?;
            check_mass(*mass)?;
            if !(*radius > 0.0 && radius.is_finite()) {
                return Err(UdotError::InvalidMeasure("dirac_smoothed radius must be positive".into()));
            }
            let f = |x: &[f64]| {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (radius * radius);
                if r2 < 1.0 {
                    (1.0 - r2).powi(2)
                } else {
                    0.0
                }
            };
            density(&f, *mass)
        }
        MeasureComponent::Inline { values } => {
            if values.len() != grid.spatial_nodes() {
                return Err(UdotError::InvalidMeasure(format!(
                    "inline measure needs {} node masses, got {}",
                    grid.spatial_nodes(),
                    values.len()
                )));
            }
            for v in values {
                check_mass(*v)?;
            }
            Ok(values.clone())
        }
    }
}

pub fn sample_components(grid: &GridSpec, comps: &[MeasureComponent]) -> Result<Vec<f64>> {
    let mut total = vec![0.0; grid.spatial_nodes()];
    for c in comps {
        for (t, v) in total.iter_mut().zip(sample_component(grid, c)?) {
            *t += v;
        }
    }
    Ok(total)
}

/// Relative threshold below which a node counts as outside the support.
pub const SUPPORT_REL: f64 = 1e-12;

/// Hausdorff distance in the sup-norm between the supports of the two
/// measures; `None` when either is empty.
pub fn support_distance(measures: &MeasurePair) -> Option<f64> {
    let grid = measures.grid();
    let dim = grid.dim();
    let support = |m: &[f64]| -> Vec<[f64; MAX_DIM]> {
        let max = m.iter().fold(0.0_f64, |a, b| a.max(*b));
        (0..m.len()).filter(|&s| max > 0.0 && m[s] > SUPPORT_REL * max).map(|s| grid.spatial_coords(s)).collect()
    };
    let s0 = support(&measures.mu0);
    let s1 = support(&measures.mu1);
    if s0.is_empty() || s1.is_empty() {
        return None;
    }
    let dist = |a: &[f64; MAX_DIM], b: &[f64; MAX_DIM]| (0..dim).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max);
    let directed = |from: &[[f64; MAX_DIM]], to: &[[f64; MAX_DIM]]| {
        from.iter().map(|p| to.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    Some(directed(&s0, &s1).max(directed(&s1, &s0)))
}

/// Necessary conditions for feasibility. A mass mismatch under the
/// mass-conserving Hamiltonian is an error; other violations are returned
/// as warnings.
pub fn check_feasibility(problem: &Problem) -> Result<Vec<String>> {
    let (m0, m1) = (problem.measures.mass0(), problem.measures.mass1());
    let mut warnings = Vec::new();
    if problem.ham.is_balanced() {
        if (m0 - m1).abs() > MASS_BALANCE_TOL * m0.max(m1) {
            return Err(UdotError::InfeasibleMassBalance { m0, m1 });
        }
        return Ok(warnings);
    }
    if (m0 == 0.0) != (m1 == 0.0) {
        warnings.push(format!(
            "one boundary measure is empty (masses {m0} and {m1}); growth is multiplicative and cannot create or fully remove mass"
        ));
    }
    if let HamiltonianSpec::BoxConstrained { v_max, w_min, w_max, .. } = problem.ham {
        if m0 > 0.0 && m1 > 0.0 {
            let rate = (m1 / m0).ln();
            if rate < w_min || rate > w_max {
                warnings.push(format!(
                    "total mass changes at log-rate {rate:.6}, outside the admissible growth range [{w_min}, {w_max}]"
                ));
            }
        }
        if let Some(d) = support_distance(&problem.measures) {
            if d > v_max {
                warnings.push(format!(
                    "supports are {d:.6} apart in the sup-norm but speed is limited to {v_max} over unit time"
                ));
            }
        }
    }
    Ok(warnings)
}

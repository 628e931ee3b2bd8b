//! The augmented Lagrangian outer loop: elliptic solve for the potential,
//! pointwise projection onto `K_H`, multiplier ascent.

use serde::{Deserialize, Serialize};

use crate::elliptic::{build_gvec, CgConfig, NormalSolver};
use crate::error::{Result, UdotError};
use crate::grid::{Delta, Field, GridSpec, MeasurePair, MAX_DIM};
use crate::hamiltonian::{control_bounds, evaluate, project_kh, ControlBounds, HamiltonianSpec, KPoint};
use crate::primal::{primal_cost, reconstruct, Multiplier, PrimalSolution};

/// Iterations over which the dual value must stagnate, and over which the
/// divergence test compares residuals.
pub const STAGNATION_WINDOW: usize = 25;

/// Relative mass mismatch tolerated by the mass-conserving variant.
pub const MASS_BALANCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub r: f64,
    pub max_iters: usize,
    pub tol_feas: f64,
    pub tol_obj: f64,
    pub divergence_bound: f64,
    pub cg: CgConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            r: 1.0,
            max_iters: 2000,
            tol_feas: 1e-5,
            tol_obj: 1e-7,
            divergence_bound: 1e8,
            cg: CgConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.r) {
            return Err(UdotError::Config(format!("r must be positive, got {}", self.r)));
        }
        if self.max_iters == 0 {
            return Err(UdotError::Config("max_iters must be at least 1".into()));
        }
        for (name, v) in [
            ("tol_feas", self.tol_feas),
            ("tol_obj", self.tol_obj),
            ("divergence_bound", self.divergence_bound),
        ] {
            if !positive(v) {
                return Err(UdotError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        self.cg.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    LikelyInfeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub dual_value: f64,
    pub feas_residual: f64,
    pub primal_cost: f64,
    pub gap: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    pub phi: Field,
    pub q: Field,
    pub lambda: Multiplier,
    /// Truncation of the control set used for certification.
    pub bounds: ControlBounds,
    pub mass_floor: f64,
}

impl SolveReport {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }

    pub fn dual_value(&self) -> f64 {
        self.last().map_or(0.0, |r| r.dual_value)
    }

    pub fn primal_cost(&self) -> f64 {
        self.last().map_or(0.0, |r| r.primal_cost)
    }

    pub fn gap(&self) -> f64 {
        self.last().map_or(0.0, |r| r.gap)
    }

    pub fn feas_residual(&self) -> f64 {
        self.last().map_or(0.0, |r| r.feas_residual)
    }

    pub fn primal(&self, ham: &HamiltonianSpec) -> PrimalSolution {
        reconstruct(&self.lambda, ham, self.mass_floor)
    }
}

/// `∫ φ(1, ·) dμ₁ − ∫ φ(0, ·) dμ₀`.
pub fn dual_value(phi: &Field, measures: &MeasurePair) -> f64 {
    let grid = measures.grid();
    let s = grid.spatial_nodes();
    let last = (grid.time_nodes() - 1) * s;
    let vals = phi.values();
    (0..s).map(|i| vals[last + i] * measures.mu1[i] - vals[i] * measures.mu0[i]).sum()
}

/// Starting iterates `(φ⁰, q⁰, λ¹)`: zero potential and constraint variable,
/// multiplier density interpolated linearly in time with the constant growth
/// rate `ln(m₁/m₀)` that carries `m₀` to `m₁`.
pub fn initialize(measures: &MeasurePair, ham: &HamiltonianSpec) -> (Field, Field, Multiplier) {
    let grid = *measures.grid();
    let dim = grid.dim();
    let s_nodes = grid.spatial_nodes();
    let ws = grid.spatial_weights();
    let phi = Field::scalar_zeros(grid);
    let q = Field::stacked_zeros(grid);
    let mut lambda = Multiplier::zeros(grid);
    let (m0, m1) = (measures.mass0(), measures.mass1());
    let rate = if !ham.is_balanced() && m0 > 0.0 && m1 > 0.0 { (m1 / m0).ln() } else { 0.0 };
    for it in 0..grid.time_nodes() {
        let t = grid.time(it);
        for s in 0..s_nodes {
            let n = it * s_nodes + s;
            let density = ((1.0 - t) * measures.mu0[s] + t * measures.mu1[s]) / ws[s];
            lambda.0.component_mut(0)[n] = density;
            lambda.0.component_mut(dim + 1)[n] = rate * density;
        }
    }
    (phi, q, lambda)
}

/// `max_n (∂_tφ + H(∇φ, φ))₊` with derivatives taken by the discrete gradient.
pub fn hjb_residual(phi: &Field, ham: &HamiltonianSpec) -> Result<f64> {
    let d = Delta::new(*phi.grid());
    let dphi = d.apply(phi)?;
    Ok(hjb_residual_of_gradient(&dphi, ham))
}

fn hjb_residual_of_gradient(dphi: &Field, ham: &HamiltonianSpec) -> f64 {
    let dim = dphi.grid().dim();
    let mut b = [0.0; MAX_DIM];
    let mut worst: f64 = 0.0;
    for n in 0..dphi.grid().node_count() {
        for (k, bk) in b.iter_mut().enumerate().take(dim) {
            *bk = dphi.component(1 + k)[n];
        }
        let value = dphi.component(0)[n] + evaluate(ham, &b[..dim], dphi.component(dim + 1)[n]);
        worst = worst.max(value);
    }
    worst
}

/// Largest violation `(a + H(b, c))₊` over the nodes of a stacked field.
pub fn constraint_violation(q: &Field, ham: &HamiltonianSpec) -> f64 {
    hjb_residual_of_gradient(q, ham)
}

/// Outcome of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepStatus {
    Continue,
    Done(Termination),
}

/// Iteration state, exposed so that callers can drive the loop one step at a
/// time. [`solve`] runs it to termination.
#[derive(Debug, Clone)]
pub struct AlmSolver {
    measures: MeasurePair,
    ham: HamiltonianSpec,
    cfg: SolverConfig,
    normal: NormalSolver,
    gvec: Field,
    phi: Field,
    q: Field,
    lambda: Multiplier,
    dphi: Field,
    rhs: Vec<f64>,
    records: Vec<IterationRecord>,
    abs_residuals: Vec<f64>,
    bounds: ControlBounds,
}

impl AlmSolver {
    pub fn new(measures: &MeasurePair, ham: &HamiltonianSpec, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        ham.validate()?;
        let (m0, m1) = (measures.mass0(), measures.mass1());
        if ham.is_balanced() && (m0 - m1).abs() > MASS_BALANCE_TOL * m0.max(m1) {
            return Err(UdotError::InfeasibleMassBalance { m0, m1 });
        }
        let grid = *measures.grid();
        let (phi, q, lambda) = initialize(measures, ham);
        Ok(AlmSolver {
            normal: NormalSolver::new(grid, cfg.cg)?,
            gvec: build_gvec(measures),
            dphi: Field::stacked_zeros(grid),
            rhs: vec![0.0; grid.node_count()],
            records: Vec::new(),
            abs_residuals: Vec::new(),
            bounds: control_bounds(ham, &grid.domain, m0, m1),
            measures: measures.clone(),
            ham: *ham,
            cfg: *cfg,
            phi,
            q,
            lambda,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.measures.grid()
    }

    pub fn phi(&self) -> &Field {
        &self.phi
    }

    pub fn q(&self) -> &Field {
        &self.q
    }

    pub fn lambda(&self) -> &Multiplier {
        &self.lambda
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    /// One pass of: potential solve, projection, multiplier update.
    pub fn step(&mut self) -> StepStatus {
        let r = self.cfg.r;
        let grid = *self.grid();
        let dim = grid.dim();
        let nodes = grid.node_count();

        self.normal.step1_rhs(self.q.values(), self.lambda.0.values(), self.gvec.values(), r, &mut self.rhs);
        let cg = match self.normal.solve(&self.rhs, r, self.phi.values_mut()) {
            Ok(outcome) => outcome,
            Err(_) => return StepStatus::Done(Termination::NumericalFailure),
        };
        self.normal.delta().apply_raw(self.phi.values(), self.dphi.values_mut());

        let dphi = self.dphi.values();
        let lam = self.lambda.0.values();
        let q = self.q.values_mut();
        let mut b = [0.0; MAX_DIM];
        for n in 0..nodes {
            let at = |c: usize| dphi[c * nodes + n] + lam[c * nodes + n] / r;
            for (k, bk) in b.iter_mut().enumerate().take(dim) {
                *bk = at(1 + k);
            }
            let y = KPoint::new(at(0), &b[..dim], at(dim + 1));
            let p = match project_kh(&self.ham, y) {
                Ok(p) => p,
                Err(_) => return StepStatus::Done(Termination::NumericalFailure),
            };
            q[n] = p.a;
            for k in 0..dim {
                q[(1 + k) * nodes + n] = p.b[k];
            }
            q[(dim + 1) * nodes + n] = p.c;
        }

        let lam = self.lambda.0.values_mut();
        let mut diff = vec![0.0; dphi.len()];
        for i in 0..dphi.len() {
            diff[i] = dphi[i] - q[i];
            lam[i] += r * diff[i];
        }

        let delta = self.normal.delta();
        let abs_res = delta.inner(&diff, &diff).sqrt();
        let q_norm = delta.inner(q, q).sqrt();
        let feas_residual = abs_res / q_norm.max(1.0);
        let dual = dual_value(&self.phi, &self.measures);
        let floor = self.lambda.default_mass_floor();
        let cost = primal_cost(&reconstruct(&self.lambda, &self.ham, floor), &self.ham);
        let record = IterationRecord {
            iter: self.records.len() + 1,
            dual_value: dual,
            feas_residual,
            primal_cost: cost,
            gap: (cost - dual).abs() / dual.abs().max(1.0),
            cg_iterations: cg.iterations,
        };
        self.records.push(record);
        self.abs_residuals.push(abs_res);

        if !(dual.is_finite() && cost.is_finite() && feas_residual.is_finite())
            || !self.phi.is_finite()
            || !self.lambda.0.is_finite()
        {
            return StepStatus::Done(Termination::NumericalFailure);
        }

        let k = self.records.len();
        if k > STAGNATION_WINDOW {
            let earlier = self.records[k - 1 - STAGNATION_WINDOW].dual_value;
            let change = (dual - earlier).abs() / dual.abs().max(1.0);
            if feas_residual <= self.cfg.tol_feas && change <= self.cfg.tol_obj {
                return StepStatus::Done(Termination::Converged);
            }
            // the relative residual shrinks as q grows, so compare absolute ones
            if dual.abs() > self.cfg.divergence_bound
                && abs_res >= self.abs_residuals[k - 1 - STAGNATION_WINDOW]
            {
                return StepStatus::Done(Termination::LikelyInfeasible);
            }
        }
        if k >= self.cfg.max_iters {
            return StepStatus::Done(Termination::MaxIters);
        }
        StepStatus::Continue
    }

    /// Iterate until a termination condition holds.
    pub fn run(mut self) -> SolveReport {
        let termination = loop {
            if let StepStatus::Done(t) = self.step() {
                break t;
            }
        };
        self.into_report(termination)
    }

    pub fn into_report(self, termination: Termination) -> SolveReport {
        let mass_floor = self.lambda.default_mass_floor();
        SolveReport {
            iterations: self.records,
            termination,
            phi: self.phi,
            q: self.q,
            lambda: self.lambda,
            bounds: self.bounds,
            mass_floor,
        }
    }
}

pub fn solve(measures: &MeasurePair, ham: &HamiltonianSpec, cfg: &SolverConfig) -> Result<SolveReport> {
    Ok(AlmSolver::new(measures, ham, cfg)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(center: f64, width: f64) -> impl Fn(&[f64]) -> f64 {
        move |x: &[f64]| (-(x[0] - center).powi(2) / (2.0 * width * width)).exp()
    }

    fn normalized(grid: GridSpec, f: impl Fn(&[f64]) -> f64, g: impl Fn(&[f64]) -> f64, m0: f64, m1: f64) -> MeasurePair {
        let raw = MeasurePair::from_densities(grid, f, g).unwrap();
        let (a, b) = (raw.mass0(), raw.mass1());
        MeasurePair::new(
            grid,
            raw.mu0.iter().map(|v| v * m0 / a).collect(),
            raw.mu1.iter().map(|v| v * m1 / b).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_measures_initialize_to_zero() {
        let g = GridSpec::unit(1, 4, 4).unwrap();
        let m = MeasurePair::new(g, vec![0.0; 5], vec![0.0; 5]).unwrap();
        let (phi, q, lam) = initialize(&m, &HamiltonianSpec::Wfr { delta: 1.0 });
        assert!(phi.values().iter().chain(q.values()).chain(lam.0.values()).all(|v| *v == 0.0));
    }

    #[test]
    fn equal_masses_give_zero_initial_growth() {
        let g = GridSpec::unit(1, 8, 8).unwrap();
        let m = normalized(g, bump(0.3, 0.1), bump(0.6, 0.1), 1.0, 1.0);
        let (_, _, lam) = initialize(&m, &HamiltonianSpec::Wfr { delta: 1.0 });
        assert!(lam.lambda_c().iter().all(|v| v.abs() < 1e-12));
        assert!(lam.lambda_b(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn initial_multiplier_interpolates_masses() {
        let g = GridSpec::unit(1, 10, 16).unwrap();
        let m = normalized(g, bump(0.5, 0.1), bump(0.5, 0.1), 1.0, 3.0);
        let (_, _, lam) = initialize(&m, &HamiltonianSpec::Wfr { delta: 1.0 });
        let sol = reconstruct(&lam, &HamiltonianSpec::Wfr { delta: 1.0 }, 0.0);
        for (it, mass) in sol.slice_masses().iter().enumerate() {
            let t = g.time(it);
            assert!((mass - (1.0 + 2.0 * t)).abs() < 1e-12);
        }
        assert!(sol.w.values().iter().zip(sol.mu.values()).all(|(w, m)| *m == 0.0 || (w - 3f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn warm_start_weak_residual_is_moderate() {
        let g = GridSpec::unit(1, 32, 32).unwrap();
        let m = normalized(g, bump(0.3, 0.08), bump(0.6, 0.08), 1.0, 1.0);
        let (_, _, lam) = initialize(&m, &HamiltonianSpec::Balanced);
        let sol = reconstruct(&lam, &HamiltonianSpec::Balanced, 0.0);
        let res = crate::primal::continuity_residual(&sol, &m);
        // with zero velocity and growth the defect is |∫ cos(iπt) dt · ∫ ψ_j d(μ₁ − μ₀)| / 2
        let predicted = (0..crate::primal::BATTERY_MODES)
            .map(|j| {
                let psi = |s: usize| (j as f64 * std::f64::consts::PI * g.spatial_coords(s)[0]).cos();
                (0..g.spatial_nodes()).map(|s| psi(s) * (m.mu1[s] - m.mu0[s])).sum::<f64>().abs() / 2.0
            })
            .fold(0.0, f64::max);
        assert!((res - predicted).abs() <= 1e-2, "{res} vs {predicted}");
        assert!(res <= 0.7, "{res}");
    }

    #[test]
    fn hjb_residual_examples() {
        let g = GridSpec::unit(1, 16, 8).unwrap();
        let w = HamiltonianSpec::Wfr { delta: 1.0 };
        assert_eq!(hjb_residual(&Field::scalar_zeros(g), &w).unwrap(), 0.0);
        let down = Field::scalar_from_fn(g, |t, _| -t);
        assert_eq!(hjb_residual(&down, &w).unwrap(), 0.0);
        let up = Field::scalar_from_fn(g, |t, _| 2.0 * t);
        assert!((hjb_residual(&up, &w).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unbalanced_masses_for_balanced_variant() {
        let g = GridSpec::unit(1, 8, 8).unwrap();
        let m = normalized(g, bump(0.5, 0.1), bump(0.5, 0.1), 1.0, 2.0);
        let err = solve(&m, &HamiltonianSpec::Balanced, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, UdotError::InfeasibleMassBalance { .. }));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = SolverConfig::default();
        cfg.r = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::default();
        cfg.max_iters = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn multiplier_update_and_projection_invariants() {
        let g = GridSpec::unit(1, 12, 12).unwrap();
        let m = normalized(g, bump(0.35, 0.1), bump(0.6, 0.1), 1.0, 1.5);
        let ham = HamiltonianSpec::Wfr { delta: 0.5 };
        let mut s = AlmSolver::new(&m, &ham, &SolverConfig::default()).unwrap();
        for _ in 0..20 {
            let before = s.lambda().clone();
            assert_eq!(s.step(), StepStatus::Continue);
            let dphi = Delta::new(g).apply(s.phi()).unwrap();
            for i in 0..dphi.values().len() {
                let expect = before.0.values()[i] + (dphi.values()[i] - s.q().values()[i]);
                assert_eq!(s.lambda().0.values()[i], expect);
            }
            assert!(constraint_violation(s.q(), &ham) <= 1e-9);
        }
    }

    #[test]
    fn identity_transport_costs_nothing() {
        let g = GridSpec::unit(1, 32, 32).unwrap();
        let m = normalized(g, bump(0.5, 0.1), bump(0.5, 0.1), 1.0, 1.0);
        let rep = solve(&m, &HamiltonianSpec::Balanced, &SolverConfig::default()).unwrap();
        assert!(rep.dual_value().abs() <= 1e-3);
        assert!(rep.primal_cost().abs() <= 1e-3);
    }
}

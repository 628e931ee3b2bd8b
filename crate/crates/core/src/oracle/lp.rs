//! Occupation-measure linear program on a tiny space-time lattice.
//!
//! Mass sits at `J` equispaced positions and moves over `T` time steps of
//! length `Δt = 1/T`. During a step, mass at node `j` choosing action
//! `(α, β)` is displaced by `αΔt`, split linearly between the two nearest
//! nodes, and multiplied by `e^{βΔt}`. Its running cost is `L(α, β)` times
//! the mass integrated over the step, `m·Δt·(e^{βΔt} − 1)/(βΔt)`.

use serde::{Deserialize, Serialize};

use super::simplex::{simplex_solve, LpStatus};
use crate::error::{Result, UdotError};
use crate::grid::SpatialBox;
use crate::hamiltonian::{feasible_f, lagrangian_cost, HamiltonianSpec};

pub const MAX_STEPS: usize = 16;
pub const MAX_CELLS: usize = 32;
pub const MAX_ACTIONS: usize = 25;
/// Largest admissible violation of the balance rows at an optimum.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub velocity: f64,
    pub growth: f64,
}

impl Action {
    pub fn new(velocity: f64, growth: f64) -> Self {
        Action { velocity, growth }
    }
}

/// Tensor grid of actions: `nv` velocities in `[−v_max, v_max]` and `nw`
/// growth rates in `[w_min, w_max]` (a single value when `nw = 1`).
pub fn action_grid(v_max: f64, nv: usize, w_min: f64, w_max: f64, nw: usize) -> Vec<Action> {
    let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        }
    };
    let vs = lin(-v_max, v_max, nv);
    let ws = lin(w_min, w_max, nw);
    vs.iter().flat_map(|&v| ws.iter().map(move |&w| Action::new(v, w))).collect()
}

/// Fraction of a step's integrated mass relative to its starting mass.
fn step_integral(beta: f64, dt: f64) -> f64 {
    let z = beta * dt;
    if z.abs() < 1e-8 {
        1.0 + z / 2.0
    } else {
        z.exp_m1() / z
    }
}

#[derive(Debug, Clone)]
struct Variable {
    step: usize,
    node: usize,
    action: usize,
    /// `(destination node, weight)` pairs, weight including growth.
    targets: [(usize, f64); 2],
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub steps: usize,
    pub positions: Vec<f64>,
    pub actions: Vec<Action>,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    variables: Vec<Variable>,
    cost: Vec<f64>,
}

/// Relaxed measure: mass per (step, node, action); zero where an action is
/// unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRelaxedMeasure {
    pub steps: usize,
    pub positions: Vec<f64>,
    pub actions: Vec<Action>,
    pub mass: Vec<f64>,
}

impl DiscreteRelaxedMeasure {
    pub fn get(&self, step: usize, node: usize, action: usize) -> f64 {
        let (j, a) = (self.positions.len(), self.actions.len());
        self.mass[(step * j + node) * a + action]
    }

    /// Mass present at each node at the start of `step`.
    ///
    /// # Panics
    ///
    /// If `step >= self.steps`.
    pub fn node_mass(&self, step: usize) -> Vec<f64> {
        (0..self.positions.len())
            .map(|j| (0..self.actions.len()).map(|a| self.get(step, j, a)).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub measure: DiscreteRelaxedMeasure,
    /// Largest violation of a balance row.
    pub balance_residual: f64,
}

pub fn build_lp(
    domain: &SpatialBox,
    mu0: &[f64],
    mu1: &[f64],
    actions: &[Action],
    steps: usize,
    ham: &HamiltonianSpec,
) -> Result<LpProblem> {
    ham.validate()?;
    if domain.dim != 1 {
        return Err(UdotError::InvalidGrid("the occupation LP is one-dimensional".into()));
    }
    let cells = mu0.len();
    if !(1..=MAX_STEPS).contains(&steps) || !(2..=MAX_CELLS).contains(&cells) || mu1.len() != cells {
        return Err(UdotError::Config(format!(
            "need 1 ≤ T ≤ {MAX_STEPS} and 2 ≤ J ≤ {MAX_CELLS} with matching measures"
        )));
    }
    if actions.is_empty() || actions.len() > MAX_ACTIONS {
        return Err(UdotError::Config(format!("need between 1 and {MAX_ACTIONS} actions")));
    }
    if mu0.iter().chain(mu1).any(|m| !(*m >= 0.0 && m.is_finite())) {
        return Err(UdotError::InvalidMeasure("node masses must be finite and non-negative".into()));
    }
    let (lo, hi) = (domain.lo[0], domain.hi[0]);
    let h = (hi - lo) / (cells - 1) as f64;
    let dt = 1.0 / steps as f64;
    let positions: Vec<f64> = (0..cells).map(|j| lo + h * j as f64).collect();

    let mut variables = Vec::new();
    let mut cost = Vec::new();
    for step in 0..steps {
        for node in 0..cells {
            for (ai, act) in actions.iter().enumerate() {
                if !feasible_f(ham, &[act.velocity], act.growth) {
                    continue;
                }
                let frac = node as f64 + act.velocity * dt / h;
                if frac < -1e-12 || frac > (cells - 1) as f64 + 1e-12 {
                    continue;
                }
                let frac = frac.clamp(0.0, (cells - 1) as f64);
                let left = (frac.floor() as usize).min(cells - 2);
                let theta = frac - left as f64;
                let gain = (act.growth * dt).exp();
                variables.push(Variable {
                    step,
                    node,
                    action: ai,
                    targets: [(left, gain * (1.0 - theta)), (left + 1, gain * theta)],
                });
                cost.push(lagrangian_cost(ham, &[act.velocity], act.growth) * dt * step_integral(act.growth, dt));
            }
        }
    }
    Ok(LpProblem { steps, positions, actions: actions.to_vec(), mu0: mu0.to_vec(), mu1: mu1.to_vec(), variables, cost })
}

impl LpProblem {
    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    /// Rows: departures at each step equal arrivals from the previous step
    /// (or `μ₀` at the first), and arrivals after the last step equal `μ₁`.
    fn constraints(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let cells = self.positions.len();
        let rows = cells * (self.steps + 1);
        let n = self.variables.len();
        let mut a = vec![vec![0.0; n]; rows];
        let mut b = vec![0.0; rows];
        b[..cells].copy_from_slice(&self.mu0);
        b[self.steps * cells..].copy_from_slice(&self.mu1);
        for (k, var) in self.variables.iter().enumerate() {
            a[var.step * cells + var.node][k] += 1.0;
            for &(dest, wgt) in &var.targets {
                a[(var.step + 1) * cells + dest][k] -= wgt;
            }
        }
        // terminal rows read "arrivals = μ₁"
        for row in a.iter_mut().skip(self.steps * cells) {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        (a, b)
    }
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    let (a, b) = problem.constraints();
    let result = simplex_solve(&a, &b, &problem.cost);
    let cells = problem.positions.len();
    let na = problem.actions.len();
    let mut mass = vec![0.0; problem.steps * cells * na];
    for (var, x) in problem.variables.iter().zip(&result.x) {
        mass[(var.step * cells + var.node) * na + var.action] = *x;
    }
    let measure = DiscreteRelaxedMeasure {
        steps: problem.steps,
        positions: problem.positions.clone(),
        actions: problem.actions.clone(),
        mass,
    };
    let balance_residual = if result.status == LpStatus::Optimal {
        a.iter()
            .zip(&b)
            .map(|(row, bi)| (row.iter().zip(&result.x).map(|(r, x)| r * x).sum::<f64>() - bi).abs())
            .fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    if result.status == LpStatus::Optimal && balance_residual > BALANCE_TOL {
        return Err(UdotError::Infeasible(format!("simplex optimum violates balance by {balance_residual:e}")));
    }
    Ok(LpSolution { status: result.status, objective: result.objective, measure, balance_residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> SpatialBox {
        SpatialBox::new(&[0.0], &[1.0]).unwrap()
    }

    #[test]
    fn staying_put_is_free() {
        let mut mu = vec![0.0; 5];
        mu[2] = 1.0;
        let acts = action_grid(1.0, 3, 0.0, 0.0, 1);
        let p = build_lp(&unit(), &mu, &mu, &acts, 4, &HamiltonianSpec::Balanced).unwrap();
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.objective.abs() < 1e-14);
        assert!(s.balance_residual <= BALANCE_TOL);
    }

    #[test]
    fn exact_shift_costs_half_v_squared() {
        // one cell per step at speed 1 over four steps: x 0 → 1
        let mut mu0 = vec![0.0; 5];
        let mut mu1 = vec![0.0; 5];
        mu0[0] = 2.0;
        mu1[4] = 2.0;
        let acts = action_grid(1.0, 3, 0.0, 0.0, 1);
        let p = build_lp(&unit(), &mu0, &mu1, &acts, 4, &HamiltonianSpec::Balanced).unwrap();
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 0.5 * 2.0).abs() < 1e-12);
        // two-cell shift over two steps at speed 0.5, one cell per step
        let mut mu1 = vec![0.0; 5];
        mu1[2] = 2.0;
        let acts = vec![Action::new(0.0, 0.0), Action::new(0.5, 0.0), Action::new(-0.5, 0.0)];
        let p = build_lp(&unit(), &mu0, &mu1, &acts, 2, &HamiltonianSpec::Balanced).unwrap();
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 0.5 * 0.25 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let mut mu0 = vec![0.0; 5];
        let mut mu1 = vec![0.0; 5];
        mu0[0] = 1.0;
        mu1[4] = 1.0;
        let acts = vec![Action::new(0.0, 0.0)];
        let p = build_lp(&unit(), &mu0, &mu1, &acts, 4, &HamiltonianSpec::Balanced).unwrap();
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn balanced_variant_drops_growth_actions() {
        let acts = action_grid(1.0, 3, -1.0, 1.0, 3);
        let mu = vec![0.5, 0.5, 0.0];
        let bal = build_lp(&unit(), &mu, &mu, &acts, 2, &HamiltonianSpec::Balanced).unwrap();
        let wfr = build_lp(&unit(), &mu, &mu, &acts, 2, &HamiltonianSpec::Wfr { delta: 1.0 }).unwrap();
        assert!(bal.variable_count() * 3 == wfr.variable_count());
    }

    #[test]
    fn rejects_oversized_problems() {
        let mu = vec![0.0; 40];
        let acts = vec![Action::new(0.0, 0.0)];
        assert!(build_lp(&unit(), &mu, &mu, &acts, 4, &HamiltonianSpec::Balanced).is_err());
    }

    /// Minimum over every vertex of the single-node growth LP: pure action
    /// sequences, plus one step where mass splits between two actions.
    fn enumerate_growth(m0: f64, m1: f64, betas: &[f64], steps: usize, delta: f64) -> f64 {
        let dt = 1.0 / steps as f64;
        let gain = |b: f64| (b * dt).exp();
        let step_cost = |b: f64, m: f64| 0.5 * delta * delta * b * b * m * dt * step_integral(b, dt);
        let k = betas.len();
        let mut best = f64::INFINITY;
        let total = k.pow(steps as u32);
        for code in 0..total {
            let seq: Vec<usize> = (0..steps).map(|s| (code / k.pow(s as u32)) % k).collect();
            let mut m = m0;
            let mut c = 0.0;
            for &a in &seq {
                c += step_cost(betas[a], m);
                m *= gain(betas[a]);
            }
            if (m - m1).abs() <= 1e-12 * m1 {
                best = best.min(c);
            }
            for split in 0..steps {
                for other in 0..k {
                    let (a1, a2) = (seq[split], other);
                    if a1 >= a2 {
                        continue;
                    }
                    let before: f64 = seq[..split].iter().map(|&a| gain(betas[a])).product();
                    let after: f64 = seq[split + 1..].iter().map(|&a| gain(betas[a])).product();
                    let (ms, me) = (m0 * before, m1 / after);
                    let (g1, g2) = (gain(betas[a1]), gain(betas[a2]));
                    let x1 = (me - g2 * ms) / (g1 - g2);
                    let x2 = ms - x1;
                    if x1 < -1e-15 || x2 < -1e-15 {
                        continue;
                    }
                    let mut c = 0.0;
                    let mut m = m0;
                    for (s, &a) in seq.iter().enumerate() {
                        if s == split {
                            c += step_cost(betas[a1], x1) + step_cost(betas[a2], x2);
                            m = me;
                        } else {
                            c += step_cost(betas[a], m);
                            m *= gain(betas[a]);
                        }
                    }
                    best = best.min(c);
                }
            }
        }
        best
    }

    #[test]
    fn single_node_growth_matches_vertex_enumeration() {
        let delta = 1.0;
        let betas = [-0.5, 0.0, 0.6, 1.3, 2.0];
        for ratio in [1.8, 3.0, 4.0] {
            let mu0 = vec![1.0, 0.0];
            let mu1 = vec![ratio, 0.0];
            let acts: Vec<Action> = betas.iter().map(|&b| Action::new(0.0, b)).collect();
            let p = build_lp(&unit(), &mu0, &mu1, &acts, 4, &HamiltonianSpec::Wfr { delta }).unwrap();
            let s = solve_lp(&p).unwrap();
            let oracle = enumerate_growth(1.0, ratio, &betas, 4, delta);
            assert!((s.objective - oracle).abs() <= 1e-9, "ratio {ratio}: {} vs {oracle}", s.objective);
            let exact = 2.0 * delta * delta * (f64::sqrt(ratio) - 1.0).powi(2);
            assert!(s.objective >= exact - 1e-12);
            assert!(s.objective <= 1.25 * exact, "{} vs {exact}", s.objective);
        }
    }

    #[test]
    fn relaxed_measure_reports_node_masses() {
        let mu0 = vec![1.0, 0.0];
        let mu1 = vec![2.0, 0.0];
        let acts: Vec<Action> = [0.0, 0.5, 1.0].iter().map(|&b| Action::new(0.0, b)).collect();
        let p = build_lp(&unit(), &mu0, &mu1, &acts, 2, &HamiltonianSpec::Wfr { delta: 1.0 }).unwrap();
        let s = solve_lp(&p).unwrap();
        assert!((s.measure.node_mass(0)[0] - 1.0).abs() < 1e-12);
        assert!(s.measure.mass.iter().all(|m| *m >= 0.0));
    }
}

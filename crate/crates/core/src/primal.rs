//! Recovering `(μ, v, w)` from the multiplier of the augmented Lagrangian
//! iteration, the transport cost of a primal triple, and how well it solves
//! the continuity equation with source in the weak sense.

use std::f64::consts::PI;

use crate::grid::{Field, GridSpec, MeasurePair, MAX_DIM};
use crate::hamiltonian::{clamp_into_f, lagrangian_cost, HamiltonianSpec};

/// Relative mass floor: nodes with `λ_a ≤ MASS_FLOOR_REL · max λ_a` carry no
/// velocity or growth.
pub const MASS_FLOOR_REL: f64 = 1e-9;

/// The multiplier `λ = (λ_a, λ_b, λ_c)`, stored as a stacked field. At a
/// saddle point `λ_a` is the space-time density, `λ_b = μv` and `λ_c = μw`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplier(pub Field);

impl Multiplier {
    pub fn zeros(grid: GridSpec) -> Self {
        Multiplier(Field::stacked_zeros(grid))
    }

    pub fn grid(&self) -> &GridSpec {
        self.0.grid()
    }

    pub fn lambda_a(&self) -> &[f64] {
        self.0.component(0)
    }

    pub fn lambda_b(&self, axis: usize) -> &[f64] {
        self.0.component(1 + axis)
    }

    pub fn lambda_c(&self) -> &[f64] {
        self.0.component(self.grid().dim() + 1)
    }

    pub fn field(&self) -> &Field {
        &self.0
    }

    /// Default floor: `MASS_FLOOR_REL × max λ_a`.
    pub fn default_mass_floor(&self) -> f64 {
        let max = self.lambda_a().iter().fold(0.0_f64, |m, v| m.max(*v));
        MASS_FLOOR_REL * max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    /// Space-time density, one value per node.
    pub mu: Field,
    /// Velocity, `dim` components.
    pub v: Field,
    /// Growth rate.
    pub w: Field,
    pub mass_floor: f64,
}

impl PrimalSolution {
    pub fn grid(&self) -> &GridSpec {
        self.mu.grid()
    }

    /// `∫_X μ(t_k, ·)` for every time node.
    pub fn slice_masses(&self) -> Vec<f64> {
        let grid = self.grid();
        let ws = grid.spatial_weights();
        self.mu
            .values()
            .chunks(grid.spatial_nodes())
            .map(|slice| slice.iter().zip(&ws).map(|(m, w)| m * w).sum())
            .collect()
    }
}

pub fn reconstruct(lambda: &Multiplier, ham: &HamiltonianSpec, mass_floor: f64) -> PrimalSolution {
    let grid = *lambda.grid();
    let dim = grid.dim();
    let n = grid.node_count();
    let mut mu = Field::scalar_zeros(grid);
    let mut v = Field::zeros(grid, dim);
    let mut w = Field::scalar_zeros(grid);
    let la = lambda.lambda_a();
    let lc = lambda.lambda_c();
    for i in 0..n {
        let a = la[i];
        mu.values_mut()[i] = a.max(0.0);
        if a <= mass_floor || a <= 0.0 {
            continue;
        }
        let mut vel = [0.0; MAX_DIM];
        for (k, vk) in vel.iter_mut().enumerate().take(dim) {
            *vk = lambda.lambda_b(k)[i] / a;
        }
        let mut growth = lc[i] / a;
        clamp_into_f(ham, &mut vel[..dim], &mut growth);
        for (k, vk) in vel.iter().enumerate().take(dim) {
            v.component_mut(k)[i] = *vk;
        }
        w.values_mut()[i] = growth;
    }
    PrimalSolution { mu, v, w, mass_floor }
}

/// `∫∫ L(v, w) dμ dt` by trapezoidal quadrature.
pub fn primal_cost(sol: &PrimalSolution, ham: &HamiltonianSpec) -> f64 {
    let grid = sol.grid();
    let dim = grid.dim();
    let weights = grid.node_weights();
    let mut vel = [0.0; MAX_DIM];
    let mut total = 0.0;
    for (i, wt) in weights.iter().enumerate() {
        let m = sol.mu.values()[i];
        if m == 0.0 {
            continue;
        }
        for (k, vk) in vel.iter_mut().enumerate().take(dim) {
            *vk = sol.v.component(k)[i];
        }
        total += wt * m * lagrangian_cost(ham, &vel[..dim], sol.w.values()[i]);
    }
    total
}

/// Number of cosine modes per variable in the residual battery.
pub const BATTERY_MODES: usize = 5;

/// Largest weak-form defect of the continuity equation with source over the
/// fixed test battery `φ_ij(t, x) = cos(iπt) Πₖ cos(jπ(xₖ − loₖ)/(hiₖ − loₖ))`,
/// `i, j ∈ 0..5`, each defect divided by `1 + ‖φ_ij‖_∞`.
pub fn continuity_residual(sol: &PrimalSolution, measures: &MeasurePair) -> f64 {
    let grid = *sol.grid();
    let dim = grid.dim();
    let s_nodes = grid.spatial_nodes();
    let weights = grid.node_weights();
    let lengths: Vec<f64> = (0..dim).map(|k| grid.domain.hi[k] - grid.domain.lo[k]).collect();

    let mut worst: f64 = 0.0;
    for i in 0..BATTERY_MODES {
        for j in 0..BATTERY_MODES {
            let (fi, fj) = (i as f64 * PI, j as f64 * PI);
            let space = |s: usize| -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
                let x = grid.spatial_coords(s);
                let mut c = [1.0; MAX_DIM];
                let mut sn = [0.0; MAX_DIM];
                for k in 0..dim {
                    let xi = (x[k] - grid.domain.lo[k]) / lengths[k];
                    c[k] = (fj * xi).cos();
                    sn[k] = (fj * xi).sin();
                }
                (c, sn)
            };
            let mut lhs = 0.0;
            for it in 0..grid.time_nodes() {
                let t = grid.time(it);
                let (ct, st) = ((fi * t).cos(), (fi * t).sin());
                for s in 0..s_nodes {
                    let n = it * s_nodes + s;
                    let m = sol.mu.values()[n];
                    if m == 0.0 {
                        continue;
                    }
                    let (c, sn) = space(s);
                    let prod: f64 = c[..dim].iter().product();
                    let phi = ct * prod;
                    let mut integrand = -fi * st * prod + sol.w.values()[n] * phi;
                    for k in 0..dim {
                        let others: f64 = (0..dim).filter(|&l| l != k).map(|l| c[l]).product();
                        let dphi = ct * (-fj / lengths[k]) * sn[k] * others;
                        integrand += dphi * sol.v.component(k)[n];
                    }
                    lhs += weights[n] * m * integrand;
                }
            }
            let c1 = (fi).cos();
            let mut rhs = 0.0;
            for s in 0..s_nodes {
                let (c, _) = space(s);
                let prod: f64 = c[..dim].iter().product();
                rhs += c1 * prod * measures.mu1[s] - prod * measures.mu0[s];
            }
            // every battery member attains ‖φ‖_∞ = 1 at t = 0, x = lo
            worst = worst.max((lhs - rhs).abs() / 2.0);
        }
    }
    worst
}

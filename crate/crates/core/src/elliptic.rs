//! The φ-update of the augmented Lagrangian iteration: the exact minimiser of
//! the discrete augmented Lagrangian over φ, i.e. the normal equations
//!
//! ```text
//! r δᵀδ φ = δᵀ(r q − λ) − g
//! ```
//!
//! solved by preconditioned conjugate gradients in the trapezoid-weighted
//! inner product, where `δᵀδ` is self-adjoint and positive definite.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UdotError};
use crate::grid::{diff_matrix, Delta, Field, GridSpec, MeasurePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Diagonal,
    /// Exact inverse of `δᵀδ` through per-axis eigendecompositions of the
    /// one-dimensional operators (`δᵀδ` is a Kronecker sum). CG then
    /// converges in one or two iterations.
    #[default]
    Separable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgConfig {
    pub tol_rel: f64,
    /// `None` means `10 × node_count`.
    pub max_cg_iters: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig { tol_rel: 1e-10, max_cg_iters: None, preconditioner: Preconditioner::default() }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0 && self.tol_rel < 1.0) {
            return Err(UdotError::Config("tol_rel must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// `g` with `⟨g, φ⟩_w = ∫φ(0,·)dμ₀ − ∫φ(1,·)dμ₁` for every node field φ.
pub fn build_gvec(measures: &MeasurePair) -> Field {
    let grid = *measures.grid();
    let mut g = Field::scalar_zeros(grid);
    let wt = grid.time_weights();
    let ws = grid.spatial_weights();
    let s_nodes = grid.spatial_nodes();
    let last = grid.n_t * s_nodes;
    let vals = g.values_mut();
    for s in 0..s_nodes {
        vals[s] = measures.mu0[s] / (wt[0] * ws[s]);
        vals[last + s] = -measures.mu1[s] / (wt[grid.n_t] * ws[s]);
    }
    g
}

/// Eigen-factorisation of one axis of `δᵀδ`: `A = V Λ V⁻¹`.
#[derive(Debug, Clone)]
struct AxisEigen {
    len: usize,
    /// row-major `V`
    v: Vec<f64>,
    /// row-major `V⁻¹`
    v_inv: Vec<f64>,
    eig: Vec<f64>,
}

impl AxisEigen {
    fn new(len: usize, h: f64, w: &[f64]) -> Self {
        let d = diff_matrix(len, h);
        // S = Dᵀ W D, symmetrised as W^{-1/2} S W^{-1/2}
        let sq: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        let b = DMatrix::from_fn(len, len, |i, j| {
            let s: f64 = (0..len).map(|k| d[k][i] * w[k] * d[k][j]).sum();
            s / (sq[i] * sq[j])
        });
        let eig = b.symmetric_eigen();
        let q = eig.eigenvectors;
        let mut v = vec![0.0; len * len];
        let mut v_inv = vec![0.0; len * len];
        for i in 0..len {
            for j in 0..len {
                v[i * len + j] = q[(i, j)] / sq[i];
                v_inv[i * len + j] = q[(j, i)] * sq[j];
            }
        }
        AxisEigen { len, v, v_inv, eig: eig.eigenvalues.iter().copied().collect() }
    }
}

#[derive(Debug, Clone)]
struct SeparableInverse {
    axes: Vec<AxisEigen>,
    /// `1 / (1 + Σ eigenvalues)` per node
    inv_spectrum: Vec<f64>,
}

impl SeparableInverse {
    fn new(grid: &GridSpec) -> Self {
        let mut axes = vec![AxisEigen::new(grid.time_nodes(), grid.h_t(), &grid.time_weights())];
        for a in 0..grid.dim() {
            axes.push(AxisEigen::new(grid.axis_nodes(a), grid.h_x(a), &grid.axis_weights(a)));
        }
        let s_nodes = grid.spatial_nodes();
        let mut inv_spectrum = Vec::with_capacity(grid.node_count());
        for it in 0..grid.time_nodes() {
            for s in 0..s_nodes {
                let idx = grid.spatial_index(s);
                let mut lam = 1.0 + axes[0].eig[it];
                for a in 0..grid.dim() {
                    lam += axes[a + 1].eig[idx[a]];
                }
                inv_spectrum.push(1.0 / lam);
            }
        }
        SeparableInverse { axes, inv_spectrum }
    }

    /// `x ← (δᵀδ)⁻¹ x`
    fn apply(&self, grid: &GridSpec, x: &mut [f64], line: &mut Vec<f64>) {
        for (axis, e) in self.axes.iter().enumerate() {
            transform_lines(grid, axis, &e.v_inv, e.len, x, line);
        }
        for (xi, s) in x.iter_mut().zip(&self.inv_spectrum) {
            *xi *= s;
        }
        for (axis, e) in self.axes.iter().enumerate() {
            transform_lines(grid, axis, &e.v, e.len, x, line);
        }
    }
}

fn transform_lines(grid: &GridSpec, axis: usize, m: &[f64], len: usize, x: &mut [f64], line: &mut Vec<f64>) {
    grid.for_each_line(axis, |base, stride, n, _| {
        debug_assert_eq!(n, len);
        line.clear();
        line.extend((0..n).map(|j| x[base + j * stride]));
        for i in 0..n {
            let row = &m[i * n..(i + 1) * n];
            x[base + i * stride] = row.iter().zip(line.iter()).map(|(a, b)| a * b).sum();
        }
    });
}

/// Reusable solver for `r δᵀδ φ = rhs` on one grid.
#[derive(Debug, Clone)]
pub struct NormalSolver {
    delta: Delta,
    cfg: CgConfig,
    diag_inv: Vec<f64>,
    separable: Option<SeparableInverse>,
    stacked: Vec<f64>,
    line: Vec<f64>,
}

impl NormalSolver {
    pub fn new(grid: GridSpec, cfg: CgConfig) -> Result<Self> {
        cfg.validate()?;
        let delta = Delta::new(grid);
        let diag_inv = match cfg.preconditioner {
            Preconditioner::Diagonal => delta.normal_diagonal().iter().map(|d| 1.0 / d).collect(),
            _ => Vec::new(),
        };
        let separable = match cfg.preconditioner {
            Preconditioner::Separable => Some(SeparableInverse::new(&grid)),
            _ => None,
        };
        Ok(NormalSolver {
            stacked: vec![0.0; grid.node_count() * grid.stacked_components()],
            line: Vec::new(),
            delta,
            cfg,
            diag_inv,
            separable,
        })
    }

    pub fn delta(&self) -> &Delta {
        &self.delta
    }

    pub fn config(&self) -> &CgConfig {
        &self.cfg
    }

    fn apply_normal(&mut self, r: f64, x: &[f64], out: &mut [f64]) {
        self.delta.normal_raw(x, out, &mut self.stacked);
        out.iter_mut().for_each(|v| *v *= r);
    }

    fn precondition(&mut self, r: f64, res: &[f64], z: &mut [f64]) {
        z.copy_from_slice(res);
        match self.cfg.preconditioner {
            Preconditioner::None => {}
            Preconditioner::Diagonal => {
                for (zi, d) in z.iter_mut().zip(&self.diag_inv) {
                    *zi *= d / r;
                }
            }
            Preconditioner::Separable => {
                let grid = *self.delta.grid();
                if let Some(sep) = &self.separable {
                    sep.apply(&grid, z, &mut self.line);
                }
                z.iter_mut().for_each(|v| *v /= r);
            }
        }
    }

    /// Solve `r δᵀδ x = rhs` in place, using the incoming `x` as the
    /// starting guess.
    pub fn solve(&mut self, rhs: &[f64], r: f64, x: &mut [f64]) -> Result<CgOutcome> {
        let n = rhs.len();
        let rhs_norm = self.delta.inner(rhs, rhs).sqrt();
        if rhs_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(CgOutcome { iterations: 0, rel_residual: 0.0 });
        }
        let max_iters = self.cfg.max_cg_iters.unwrap_or(10 * n);
        let target = self.cfg.tol_rel * rhs_norm;

        let mut res = vec![0.0; n];
        self.apply_normal(r, x, &mut res);
        for (ri, bi) in res.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        let mut res_norm = self.delta.inner(&res, &res).sqrt();
        if res_norm <= target {
            return Ok(CgOutcome { iterations: 0, rel_residual: res_norm / rhs_norm });
        }
        let mut z = vec![0.0; n];
        self.precondition(r, &res, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = self.delta.inner(&res, &z);
        for it in 1..=max_iters {
            self.apply_normal(r, &p, &mut ap);
            let alpha = rz / self.delta.inner(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                res[i] -= alpha * ap[i];
            }
            res_norm = self.delta.inner(&res, &res).sqrt();
            if !res_norm.is_finite() {
                break;
            }
            if res_norm <= target {
                return Ok(CgOutcome { iterations: it, rel_residual: res_norm / rhs_norm });
            }
            self.precondition(r, &res, &mut z);
            let rz_new = self.delta.inner(&res, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(UdotError::ConvergenceFailure { iterations: max_iters, residual: res_norm / rhs_norm })
    }

    /// `δᵀ(r q − λ) − g` on raw storage.
    pub fn step1_rhs(&self, q: &[f64], lambda: &[f64], gvec: &[f64], r: f64, out: &mut [f64]) {
        let combined: Vec<f64> = q.iter().zip(lambda).map(|(qi, li)| r * qi - li).collect();
        self.delta.adjoint_raw(&combined, out);
        for (o, g) in out.iter_mut().zip(gvec) {
            *o -= g;
        }
    }
}

/// Minimise the augmented Lagrangian over φ for fixed `q`, `λ` (cold start).
pub fn solve_step1(
    q_prev: &Field,
    lambda: &Field,
    measures: &MeasurePair,
    r: f64,
    cfg: &CgConfig,
) -> Result<Field> {
    let grid = *measures.grid();
    let comps = grid.stacked_components();
    for f in [q_prev, lambda] {
        if *f.grid() != grid || f.components() != comps {
            return Err(UdotError::InvalidField("q and λ must be stacked fields on the measure grid".into()));
        }
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(UdotError::Config("augmentation parameter r must be positive".into()));
    }
    let mut solver = NormalSolver::new(grid, *cfg)?;
    let g = build_gvec(measures);
    let mut rhs = vec![0.0; grid.node_count()];
    solver.step1_rhs(q_prev.values(), lambda.values(), g.values(), r, &mut rhs);
    let mut phi = Field::scalar_zeros(grid);
    solver.solve(&rhs, r, phi.values_mut())?;
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(grid: GridSpec, comps: usize, rng: &mut ChaCha8Rng) -> Field {
        Field::from_values(grid, comps, (0..comps * grid.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn all_preconditioners() -> [CgConfig; 3] {
        [Preconditioner::None, Preconditioner::Diagonal, Preconditioner::Separable]
            .map(|p| CgConfig { preconditioner: p, ..CgConfig::default() })
    }

    fn augmented_lagrangian(phi: &Field, q: &Field, lambda: &Field, g: &Field, r: f64) -> f64 {
        let d = Delta::new(*phi.grid());
        let mut dphi = d.apply(phi).unwrap();
        dphi.add_scaled(-1.0, q).unwrap();
        inner(g, phi).unwrap() + inner(lambda, &dphi).unwrap() + 0.5 * r * norm(&dphi).powi(2)
    }

    #[test]
    fn gvec_zero_for_zero_measures() {
        let g = GridSpec::unit(1, 4, 6).unwrap();
        let m = MeasurePair::new(g, vec![0.0; 7], vec![0.0; 7]).unwrap();
        assert!(build_gvec(&m).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gvec_represents_boundary_functional() {
        let g = GridSpec::new(5, &[4, 3], &[0.0, 0.0], &[2.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = g.spatial_nodes();
        let m = MeasurePair::new(
            g,
            (0..s).map(|_| rng.gen_range(0.0..1.0)).collect(),
            (0..s).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let gv = build_gvec(&m);
        for _ in 0..100 {
            let phi = random(g, 1, &mut rng);
            let direct: f64 = (0..s)
                .map(|j| phi.values()[j] * m.mu0[j] - phi.values()[g.n_t * s + j] * m.mu1[j])
                .sum();
            let via = inner(&gv, &phi).unwrap();
            assert!((direct - via).abs() <= 1e-12 * direct.abs().max(1.0));
        }
        // φ = t with masses 1 and 2
        let g1 = GridSpec::unit(1, 4, 4).unwrap();
        let m = MeasurePair::from_densities(g1, |_| 1.0, |_| 2.0).unwrap();
        let t = Field::scalar_from_fn(g1, |t, _| t);
        assert!((inner(&build_gvec(&m), &t).unwrap() + 2.0).abs() < 1e-13);
    }

    #[test]
    fn zero_data_gives_zero_potential() {
        let g = GridSpec::unit(1, 6, 6).unwrap();
        let m = MeasurePair::new(g, vec![0.0; 7], vec![0.0; 7]).unwrap();
        let z = Field::stacked_zeros(g);
        let phi = solve_step1(&z, &z, &m, 1.0, &CgConfig::default()).unwrap();
        assert!(phi.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn manufactured_discrete_solution_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for grid in [GridSpec::unit(1, 12, 10).unwrap(), GridSpec::unit(2, 6, 5).unwrap()] {
            let m = MeasurePair::new(grid, vec![0.0; grid.spatial_nodes()], vec![0.0; grid.spatial_nodes()]).unwrap();
            let r = 1.7;
            let phi_star = random(grid, 1, &mut rng);
            let lambda = random(grid, grid.stacked_components(), &mut rng);
            let mut q = Delta::new(grid).apply(&phi_star).unwrap();
            q.add_scaled(1.0 / r, &lambda).unwrap();
            for cfg in all_preconditioners() {
                let phi = solve_step1(&q, &lambda, &m, r, &cfg).unwrap();
                let mut err = phi.clone();
                err.add_scaled(-1.0, &phi_star).unwrap();
                // κ(δᵀδ) is modest on these grids
                assert!(norm(&err) <= 1e-7 * norm(&phi_star), "{:?}", cfg.preconditioner);
            }
        }
    }

    #[test]
    fn returned_potential_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let grid = GridSpec::unit(1, 10, 12).unwrap();
        let s = grid.spatial_nodes();
        let m = MeasurePair::new(
            grid,
            (0..s).map(|_| rng.gen_range(0.0..0.2)).collect(),
            (0..s).map(|_| rng.gen_range(0.0..0.2)).collect(),
        )
        .unwrap();
        let q = random(grid, 3, &mut rng);
        let lambda = random(grid, 3, &mut rng);
        let r = 0.8;
        let phi = solve_step1(&q, &lambda, &m, r, &CgConfig::default()).unwrap();
        let g = build_gvec(&m);
        let eps = 1e-3;
        for _ in 0..20 {
            let psi = random(grid, 1, &mut rng);
            let mut plus = phi.clone();
            plus.add_scaled(eps, &psi).unwrap();
            let mut minus = phi.clone();
            minus.add_scaled(-eps, &psi).unwrap();
            let dd = (augmented_lagrangian(&plus, &q, &lambda, &g, r)
                - augmented_lagrangian(&minus, &q, &lambda, &g, r))
                / (2.0 * eps);
            assert!(dd.abs() <= 1e-8 * norm(&psi), "directional derivative {dd}");
        }
    }

    #[test]
    fn normal_operator_is_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = GridSpec::unit(2, 5, 4).unwrap();
        let d = Delta::new(grid);
        let n = grid.node_count();
        let mut out = vec![0.0; n];
        let mut st = vec![0.0; n * grid.stacked_components()];
        for _ in 0..50 {
            let psi = random(grid, 1, &mut rng);
            d.normal_raw(psi.values(), &mut out, &mut st);
            assert!(d.inner(&out, psi.values()) > 0.0);
        }
    }

    #[test]
    fn separable_inverse_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let grid = GridSpec::new(7, &[5, 4], &[0.0, -1.0], &[1.0, 1.0]).unwrap();
        let sep = SeparableInverse::new(&grid);
        let d = Delta::new(grid);
        let n = grid.node_count();
        let x = random(grid, 1, &mut rng);
        let mut ax = vec![0.0; n];
        let mut st = vec![0.0; n * 4];
        d.normal_raw(x.values(), &mut ax, &mut st);
        sep.apply(&grid, &mut ax, &mut Vec::new());
        for (a, b) in ax.iter().zip(x.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn solves_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let grid = GridSpec::unit(1, 8, 8).unwrap();
        let m = MeasurePair::from_densities(grid, |x| 1.0 + x[0], |x| 2.0 - x[0]).unwrap();
        let q = random(grid, 3, &mut rng);
        let l = random(grid, 3, &mut rng);
        for cfg in all_preconditioners() {
            let a = solve_step1(&q, &l, &m, 1.0, &cfg).unwrap();
            let b = solve_step1(&q, &l, &m, 1.0, &cfg).unwrap();
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grid = GridSpec::unit(1, 16, 16).unwrap();
        let m = MeasurePair::new(grid, vec![0.0; 17], vec![0.0; 17]).unwrap();
        let q = random(grid, 3, &mut rng);
        let l = Field::stacked_zeros(grid);
        let cfg = CgConfig { max_cg_iters: Some(2), preconditioner: Preconditioner::None, ..CgConfig::default() };
        match solve_step1(&q, &l, &m, 1.0, &cfg) {
            Err(UdotError::ConvergenceFailure { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-10);
            }
            other => panic!("expected ConvergenceFailure, got {other:?}"),
        }
    }
}

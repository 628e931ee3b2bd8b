//! Optimal control of a single weighted particle: piecewise-constant
//! velocity and growth on `N` steps, endpoints pinned, solved by projected
//! gradient descent with Barzilai–Borwein steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, UdotError};
use crate::grid::MAX_DIM;
use crate::hamiltonian::{lagrangian_cost, HamiltonianSpec};

/// Stopping threshold on the projected-gradient mapping.
pub const GRADIENT_TOL: f64 = 1e-8;
/// Number of perturbed restarts beyond the straight-line start.
pub const RESTARTS: usize = 5;
const MAX_ITERS: usize = 200_000;
const SEED: u64 = 0x0d1a_c0de;

/// One control sequence `c₀ … c_{N−1}` constrained to `mean(c) = target`
/// and `lo ≤ cₖ ≤ hi`.
#[derive(Debug, Clone, Copy)]
struct Channel {
    target: f64,
    lo: f64,
    hi: f64,
}

impl Channel {
    /// Euclidean projection onto the channel's constraint set.
    fn project(&self, y: &mut [f64]) {
        let n = y.len() as f64;
        if self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY {
            let shift = y.iter().sum::<f64>() / n - self.target;
            y.iter_mut().for_each(|v| *v -= shift);
            return;
        }
        let mean_at = |tau: f64| y.iter().map(|v| (v - tau).clamp(self.lo, self.hi)).sum::<f64>() / n;
        let lo_y = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi_y = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // mean_at is non-increasing in τ
        let (mut a, mut b) = (lo_y - self.target - 1.0, hi_y - self.target + 1.0);
        while mean_at(a) < self.target {
            a -= (b - a).max(1.0);
        }
        while mean_at(b) > self.target {
            b += (b - a).max(1.0);
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if mean_at(m) > self.target {
                a = m;
            } else {
                b = m;
            }
        }
        let tau = 0.5 * (a + b);
        y.iter_mut().for_each(|v| *v = (*v - tau).clamp(self.lo, self.hi));
    }
}

/// `(eᶻ − 1)/z` and its derivative, with series near zero.
fn growth_factor(z: f64) -> (f64, f64) {
    if z.abs() < 1e-4 {
        (1.0 + z / 2.0 + z * z / 6.0, 0.5 + z / 3.0 + z * z / 8.0)
    } else {
        let e = z.exp();
        ((e - 1.0) / z, (z * e - e + 1.0) / (z * z))
    }
}

struct Problem {
    ham: HamiltonianSpec,
    dim: usize,
    m0: f64,
    dt: f64,
    steps: usize,
    delta2: f64,
    channels: Vec<Channel>,
}

impl Problem {
    /// Controls are stored channel-major: `dim` velocity channels, then growth.
    fn cost_and_gradient(&self, u: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (n, d, dt) = (self.steps, self.dim, self.dt);
        let w = &u[d * n..];
        let mut running = vec![0.0; n];
        let mut weight = vec![0.0; n];
        let mut dweight = vec![0.0; n];
        let mut log_mass = self.m0.ln();
        let mut total = 0.0;
        let mut v = [0.0; MAX_DIM];
        for k in 0..n {
            for (c, vc) in v.iter_mut().enumerate().take(d) {
                *vc = u[c * n + k];
            }
            let (f, df) = growth_factor(w[k] * dt);
            let base = log_mass.exp() * dt;
            running[k] = lagrangian_cost(&self.ham, &v[..d], w[k]);
            weight[k] = base * f;
            dweight[k] = base * df * dt;
            total += running[k] * weight[k];
            log_mass += w[k] * dt;
        }
        if let Some(g) = grad {
            for c in 0..d {
                for k in 0..n {
                    g[c * n + k] = u[c * n + k] * weight[k] / dt;
                }
            }
            // later steps scale with e^{Σ_{j<k} w_j Δt}
            let mut tail = 0.0;
            for k in (0..n).rev() {
                let own = self.delta2 * w[k] * weight[k] + running[k] * dweight[k];
                g[d * n + k] = (own + dt * tail) / dt;
                tail += running[k] * weight[k];
            }
        }
        total
    }

    fn project(&self, u: &mut [f64]) {
        for (c, ch) in self.channels.iter().enumerate() {
            ch.project(&mut u[c * self.steps..(c + 1) * self.steps]);
        }
    }

    fn norm(&self, u: &[f64]) -> f64 {
        (self.dt * u.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    /// Projected gradient with BB steps and Armijo backtracking.
    fn descend(&self, mut u: Vec<f64>) -> Result<f64> {
        let len = u.len();
        let mut g = vec![0.0; len];
        let mut f = self.cost_and_gradient(&u, Some(&mut g));
        let mut alpha = 1.0;
        let mut trial = vec![0.0; len];
        let mut g_trial = vec![0.0; len];
        for _ in 0..MAX_ITERS {
            let mut mapped: Vec<f64> = u.iter().zip(&g).map(|(x, gi)| x - gi).collect();
            self.project(&mut mapped);
            let step: Vec<f64> = u.iter().zip(&mapped).map(|(a, b)| a - b).collect();
            if self.norm(&step) <= GRADIENT_TOL {
                return Ok(f);
            }
            let mut a = alpha;
            let f_trial = loop {
                for i in 0..len {
                    trial[i] = u[i] - a * g[i];
                }
                self.project(&mut trial);
                let diff: Vec<f64> = trial.iter().zip(&u).map(|(p, q)| p - q).collect();
                let ft = self.cost_and_gradient(&trial, Some(&mut g_trial));
                let decrease = self.norm(&diff).powi(2) / a;
                if ft <= f - 1e-4 * decrease || a < 1e-14 {
                    break ft;
                }
                a *= 0.5;
            };
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..len {
                let s = trial[i] - u[i];
                ss += s * s;
                sy += s * (g_trial[i] - g[i]);
            }
            alpha = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { 1.0 };
            std::mem::swap(&mut u, &mut trial);
            std::mem::swap(&mut g, &mut g_trial);
            f = f_trial;
        }
        Err(UdotError::ConvergenceFailure { iterations: MAX_ITERS, residual: f64::NAN })
    }
}

/// Least cost of moving a single particle of mass `m0` at `x0` to mass `m1`
/// at `x1`, using `steps` piecewise-constant controls.
pub fn dirac_pair_cost(
    x0: &[f64],
    m0: f64,
    x1: &[f64],
    m1: f64,
    ham: &HamiltonianSpec,
    steps: usize,
) -> Result<f64> {
    ham.validate()?;
    let dim = x0.len();
    if dim == 0 || dim > MAX_DIM || x1.len() != dim {
        return Err(UdotError::InvalidMeasure("endpoints must share a dimension of 1 or 2".into()));
    }
    if !(m0 > 0.0 && m1 > 0.0) {
        return Err(UdotError::InvalidMeasure("endpoint masses must be positive".into()));
    }
    if steps == 0 {
        return Err(UdotError::Config("steps must be at least 1".into()));
    }
    let log_ratio = (m1 / m0).ln();
    let (v_lim, w_lo, w_hi, delta2) = match *ham {
        HamiltonianSpec::Wfr { delta } => (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, delta * delta),
        HamiltonianSpec::Balanced => (f64::INFINITY, 0.0, 0.0, 0.0),
        HamiltonianSpec::BoxConstrained { delta, v_max, w_min, w_max } => (v_max, w_min, w_max, delta * delta),
    };
    let mut channels: Vec<Channel> =
        (0..dim).map(|k| Channel { target: x1[k] - x0[k], lo: -v_lim, hi: v_lim }).collect();
    channels.push(Channel { target: log_ratio, lo: w_lo, hi: w_hi });
    let tol = 1e-12;
    for ch in &channels {
        if ch.target < ch.lo - tol || ch.target > ch.hi + tol {
            return Err(UdotError::Infeasible(format!(
                "endpoint rate {} outside the admissible range [{}, {}]",
                ch.target, ch.lo, ch.hi
            )));
        }
    }
    let problem = Problem { ham: *ham, dim, m0, dt: 1.0 / steps as f64, steps, delta2, channels };

    let straight: Vec<f64> =
        problem.channels.iter().flat_map(|ch| std::iter::repeat(ch.target.clamp(ch.lo, ch.hi)).take(steps)).collect();
    let mut best = problem.descend(straight.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..RESTARTS {
        let mut start = straight.clone();
        for (c, ch) in problem.channels.iter().enumerate() {
            let amp = 0.5 * (1.0 + ch.target.abs());
            for x in &mut start[c * steps..(c + 1) * steps] {
                *x += amp * rng.gen_range(-1.0..1.0);
            }
        }
        problem.project(&mut start);
        best = best.min(problem.descend(start)?);
    }
    Ok(best)
}

//! Dense two-phase simplex for `min cᵀx` subject to `Ax = b`, `x ≥ 0`, with
//! Bland's anti-cycling rule.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-12;

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows × (cols + 1)`, last column is the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.at(r, c);
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                for (j, pv) in pivot_row.iter().enumerate() {
                    self.t[i * w + j] -= f * pv;
                }
                self.t[i * w + c] = 0.0;
            }
        }
        // roundoff must not leave basic variables negative
        for i in 0..self.rows {
            let rhs = &mut self.t[i * w + self.cols];
            if *rhs < 0.0 && *rhs > -1e-12 {
                *rhs = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj -= cb * self.at(i, j);
                }
            }
        }
        d
    }

    /// Runs Bland-rule pivots over the columns allowed by `eligible`.
    /// Returns `false` when the objective is unbounded below.
    fn optimize(&mut self, cost: &[f64], eligible: &dyn Fn(usize) -> bool) -> bool {
        let scale = cost.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
        loop {
            let d = self.reduced_costs(cost);
            let entering = (0..self.cols).find(|&j| eligible(j) && d[j] < -COST_TOL * scale);
            let Some(c) = entering else {
                return true;
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    let better = match best {
                        None => true,
                        Some((r, _, b)) => ratio < r - 1e-14 || (ratio <= r + 1e-14 && self.basis[i] < b),
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            match best {
                None => return false,
                Some((_, r, _)) => self.pivot(r, c),
            }
        }
    }
}

/// Solve `min cᵀx` s.t. `Ax = b`, `x ≥ 0`, with `A` given as dense rows.
pub fn simplex_solve(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> SimplexResult {
    let m = a.len();
    let n = c.len();
    let cols = n + m;
    let w = cols + 1;
    let mut t = vec![0.0; m * w];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = sign * a[i][j];
        }
        t[i * w + n + i] = 1.0;
        t[i * w + cols] = sign * b[i];
    }
    let mut tab = Tableau { rows: m, cols, t, basis: (n..n + m).collect(), pivots: 0 };

    let mut phase1 = vec![0.0; cols];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    tab.optimize(&phase1, &|_| true);
    let infeasibility: f64 = (0..m).filter(|&i| tab.basis[i] >= n).map(|i| tab.rhs(i)).sum();
    let b_scale = b.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    if infeasibility > 1e-9 * b_scale {
        return SimplexResult { status: LpStatus::Infeasible, x: vec![0.0; n], objective: f64::NAN, pivots: tab.pivots };
    }

    // drive remaining artificials out; rows where that is impossible are redundant
    let mut keep = vec![true; m];
    for i in 0..m {
        if tab.basis[i] >= n {
            match (0..n).find(|&j| tab.at(i, j).abs() > PIVOT_TOL) {
                Some(j) => tab.pivot(i, j),
                None => keep[i] = false,
            }
        }
    }
    if keep.iter().any(|k| !k) {
        let mut t2 = Vec::new();
        let mut basis2 = Vec::new();
        for i in 0..m {
            if keep[i] {
                t2.extend_from_slice(&tab.t[i * w..(i + 1) * w]);
                basis2.push(tab.basis[i]);
            }
        }
        tab.rows = basis2.len();
        tab.t = t2;
        tab.basis = basis2;
    }

    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(c);
    if !tab.optimize(&phase2, &|j| j < n) {
        return SimplexResult { status: LpStatus::Unbounded, x: vec![0.0; n], objective: f64::NEG_INFINITY, pivots: tab.pivots };
    }
    let mut x = vec![0.0; n];
    for i in 0..tab.rows {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.rhs(i).max(0.0);
        }
    }
    let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    SimplexResult { status: LpStatus::Optimal, x, objective, pivots: tab.pivots }
}

//! Uniform node-sited space-time grids on `[0,1] × X`, fields living on
//! them, and the discrete operator `φ ↦ (∂_t φ, ∇_x φ, φ)` together with its
//! exact adjoint under the trapezoidal inner product.
//!
//! Nodes are stored time-major: node `(it, ix, iy)` sits at index
//! `it * S + ix + (n_x[0] + 1) * iy` where `S` is the number of spatial nodes.
//! Multi-component fields are stored component-major, one contiguous block of
//! `node_count` values per component.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UdotError};

pub const MAX_DIM: usize = 2;

/// Axis-aligned spatial box `X ⊂ R^d`, `d ∈ {1, 2}`. Unused trailing entries
/// are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialBox {
    pub dim: usize,
    pub lo: [f64; MAX_DIM],
    pub hi: [f64; MAX_DIM],
}

impl SpatialBox {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let dim = lo.len();
        if dim == 0 || dim > MAX_DIM || hi.len() != dim {
            return Err(UdotError::InvalidGrid(format!(
                "box bounds must have matching length 1 or 2 (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        let mut b = SpatialBox { dim, lo: [0.0; MAX_DIM], hi: [1.0; MAX_DIM] };
        for i in 0..dim {
            if !(lo[i].is_finite() && hi[i].is_finite() && hi[i] > lo[i]) {
                return Err(UdotError::InvalidGrid(format!(
                    "axis {i}: need finite lo < hi, got [{}, {}]",
                    lo[i], hi[i]
                )));
            }
            b.lo[i] = lo[i];
            b.hi[i] = hi[i];
        }
        Ok(b)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|i| (self.hi[i] - self.lo[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_t: usize,
    pub n_x: [usize; MAX_DIM],
    pub domain: SpatialBox,
}

impl GridSpec {
    pub fn new(n_t: usize, n_x: &[usize], lo: &[f64], hi: &[f64]) -> Result<Self> {
        let domain = SpatialBox::new(lo, hi)?;
        if n_x.len() != domain.dim {
            return Err(UdotError::InvalidGrid(format!(
                "{} spatial cell counts for a {}-dimensional box",
                n_x.len(),
                domain.dim
            )));
        }
        if n_t < 2 || n_x.iter().any(|&n| n < 2) {
            return Err(UdotError::InvalidGrid(
                "every axis needs at least 2 cells".into(),
            ));
        }
        let mut cells = [0; MAX_DIM];
        cells[..n_x.len()].copy_from_slice(n_x);
        Ok(GridSpec { n_t, n_x: cells, domain })
    }

    /// `[0,1]^d` with `n_x` cells per axis.
    pub fn unit(dim: usize, n_t: usize, n_x: usize) -> Result<Self> {
        let lo = vec![0.0; dim];
        let hi = vec![1.0; dim];
        Self::new(n_t, &vec![n_x; dim], &lo, &hi)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn h_t(&self) -> f64 {
        1.0 / self.n_t as f64
    }

    pub fn h_x(&self, axis: usize) -> f64 {
        (self.domain.hi[axis] - self.domain.lo[axis]) / self.n_x[axis] as f64
    }

    pub fn time_nodes(&self) -> usize {
        self.n_t + 1
    }

    pub fn axis_nodes(&self, axis: usize) -> usize {
        self.n_x[axis] + 1
    }

    pub fn spatial_nodes(&self) -> usize {
        (0..self.dim()).map(|a| self.axis_nodes(a)).product()
    }

    pub fn node_count(&self) -> usize {
        self.time_nodes() * self.spatial_nodes()
    }

    /// Components of a stacked `(a, b, c)` field.
    pub fn stacked_components(&self) -> usize {
        self.dim() + 2
    }

    pub fn time(&self, it: usize) -> f64 {
        it as f64 * self.h_t()
    }

    /// Multi-index of a spatial node.
    pub fn spatial_index(&self, s: usize) -> [usize; MAX_DIM] {
        let nx0 = self.axis_nodes(0);
        if self.dim() == 1 {
            [s, 0]
        } else {
            [s % nx0, s / nx0]
        }
    }

    pub fn spatial_coords(&self, s: usize) -> [f64; MAX_DIM] {
        let idx = self.spatial_index(s);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim() {
            x[a] = self.domain.lo[a] + idx[a] as f64 * self.h_x(a);
        }
        x
    }

    pub fn time_weights(&self) -> Vec<f64> {
        trapezoid(self.time_nodes(), self.h_t())
    }

    pub fn axis_weights(&self, axis: usize) -> Vec<f64> {
        trapezoid(self.axis_nodes(axis), self.h_x(axis))
    }

    /// Trapezoidal weights of the spatial nodes (sum = volume of `X`).
    pub fn spatial_weights(&self) -> Vec<f64> {
        let wx0 = self.axis_weights(0);
        if self.dim() == 1 {
            return wx0;
        }
        let wx1 = self.axis_weights(1);
        let mut w = Vec::with_capacity(self.spatial_nodes());
        for b in &wx1 {
            for a in &wx0 {
                w.push(a * b);
            }
        }
        w
    }

    /// Space-time trapezoidal weights, one per node.
    pub fn node_weights(&self) -> Vec<f64> {
        let ws = self.spatial_weights();
        let mut w = Vec::with_capacity(self.node_count());
        for wt in self.time_weights() {
            w.extend(ws.iter().map(|s| wt * s));
        }
        w
    }

    /// Visit every grid line parallel to `axis` (0 = time, 1.. = space) as
    /// `(base index, stride, length, spacing)`.
    pub(crate) fn for_each_line(&self, axis: usize, mut f: impl FnMut(usize, usize, usize, f64)) {
        let s_nodes = self.spatial_nodes();
        let nt = self.time_nodes();
        match axis {
            0 => {
                for base in 0..s_nodes {
                    f(base, s_nodes, nt, self.h_t());
                }
            }
            1 => {
                let nx0 = self.axis_nodes(0);
                for base in (0..nt * s_nodes).step_by(nx0) {
                    f(base, 1, nx0, self.h_x(0));
                }
            }
            2 => {
                let nx0 = self.axis_nodes(0);
                let nx1 = self.axis_nodes(1);
                for it in 0..nt {
                    for ix in 0..nx0 {
                        f(it * s_nodes + ix, nx0, nx1, self.h_x(1));
                    }
                }
            }
            _ => unreachable!("axis out of range"),
        }
    }
}

fn trapezoid(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Node-sited values with one or more components.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    components: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec, components: usize) -> Self {
        Field { grid, components, values: vec![0.0; components * grid.node_count()] }
    }

    pub fn scalar_zeros(grid: GridSpec) -> Self {
        Self::zeros(grid, 1)
    }

    pub fn stacked_zeros(grid: GridSpec) -> Self {
        Self::zeros(grid, grid.stacked_components())
    }

    pub fn from_values(grid: GridSpec, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 || values.len() != components * grid.node_count() {
            return Err(UdotError::InvalidField(format!(
                "expected {} values for {} component(s), got {}",
                components * grid.node_count(),
                components,
                values.len()
            )));
        }
        Ok(Field { grid, components, values })
    }

    /// Sample `f(t, x)` at every node.
    pub fn scalar_from_fn(grid: GridSpec, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let s_nodes = grid.spatial_nodes();
        let dim = grid.dim();
        let mut values = Vec::with_capacity(grid.node_count());
        for it in 0..grid.time_nodes() {
            let t = grid.time(it);
            for s in 0..s_nodes {
                let x = grid.spatial_coords(s);
                values.push(f(t, &x[..dim]));
            }
        }
        Field { grid, components: 1, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.node_count();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.node_count();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Field) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid || self.components != other.components {
            return Err(UdotError::InvalidField(format!(
                "field shapes differ ({} vs {} components, grids equal: {})",
                self.components,
                other.components,
                self.grid == other.grid
            )));
        }
        Ok(())
    }
}

/// Trapezoid-weighted space-time inner product of two fields of equal shape.
pub fn inner(u: &Field, v: &Field) -> Result<f64> {
    u.check_compatible(v)?;
    let w = u.grid.node_weights();
    Ok(weighted_dot(&w, &u.values, &v.values))
}

pub fn norm(u: &Field) -> f64 {
    let w = u.grid.node_weights();
    weighted_dot(&w, &u.values, &u.values).sqrt()
}

/// `Σ w[n mod N] · u[n] · v[n]` over all components.
pub(crate) fn weighted_dot(w: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let n = w.len();
    u.chunks(n)
        .zip(v.chunks(n))
        .map(|(uc, vc)| {
            uc.iter()
                .zip(vc)
                .zip(w)
                .map(|((a, b), w)| w * a * b)
                .sum::<f64>()
        })
        .sum()
}

/// Initial and terminal measures as non-negative node masses
/// (density × spatial trapezoid weight) on the spatial nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurePair {
    grid: GridSpec,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
}

impl MeasurePair {
    pub fn new(grid: GridSpec, mu0: Vec<f64>, mu1: Vec<f64>) -> Result<Self> {
        let s = grid.spatial_nodes();
        if mu0.len() != s || mu1.len() != s {
            return Err(UdotError::InvalidMeasure(format!(
                "expected {s} node masses, got {} and {}",
                mu0.len(),
                mu1.len()
            )));
        }
        if mu0.iter().chain(&mu1).any(|m| !m.is_finite() || *m < 0.0) {
            return Err(UdotError::InvalidMeasure(
                "node masses must be finite and non-negative".into(),
            ));
        }
        Ok(MeasurePair { grid, mu0, mu1 })
    }

    /// Build node masses from densities sampled at the spatial nodes.
    pub fn from_densities(
        grid: GridSpec,
        rho0: impl Fn(&[f64]) -> f64,
        rho1: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let w = grid.spatial_weights();
        let dim = grid.dim();
        let sample = |rho: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
            (0..grid.spatial_nodes())
                .map(|s| rho(&grid.spatial_coords(s)[..dim]) * w[s])
                .collect()
        };
        let mu0 = sample(&rho0);
        let mu1 = sample(&rho1);
        Self::new(grid, mu0, mu1)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn mass0(&self) -> f64 {
        self.mu0.iter().sum()
    }

    pub fn mass1(&self) -> f64 {
        self.mu1.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.mu0.iter().chain(&self.mu1).all(|m| *m == 0.0)
    }
}

/// The operator `δφ = (∂_t φ, ∇_x φ, φ)` on a fixed grid, with cached
/// quadrature weights.
///
/// Derivatives use central differences in the interior and second-order
/// one-sided differences at boundary nodes. The adjoint is the exact transpose
/// under the trapezoid-weighted inner product, so
/// `⟨δφ, q⟩_w = ⟨φ, δᵀq⟩_w` holds to rounding for every `φ`, `q`.
#[derive(Debug, Clone)]
pub struct Delta {
    grid: GridSpec,
    weights: Vec<f64>,
    axis_weights: Vec<Vec<f64>>,
}

impl Delta {
    pub fn new(grid: GridSpec) -> Self {
        let mut axis_weights = vec![grid.time_weights()];
        for a in 0..grid.dim() {
            axis_weights.push(grid.axis_weights(a));
        }
        Delta { weights: grid.node_weights(), axis_weights, grid }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of differentiated axes (time plus space).
    fn axes(&self) -> usize {
        self.grid.dim() + 1
    }

    pub fn apply(&self, phi: &Field) -> Result<Field> {
        self.check(phi, 1)?;
        let mut out = Field::stacked_zeros(self.grid);
        self.apply_raw(phi.values(), out.values_mut());
        Ok(out)
    }

    pub fn adjoint(&self, q: &Field) -> Result<Field> {
        self.check(q, self.grid.stacked_components())?;
        let mut out = Field::scalar_zeros(self.grid);
        self.adjoint_raw(q.values(), out.values_mut());
        Ok(out)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        weighted_dot(&self.weights, u, v)
    }

    fn check(&self, f: &Field, comps: usize) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(UdotError::InvalidField("field lives on a different grid".into()));
        }
        if f.components() != comps {
            return Err(UdotError::InvalidField(format!(
                "expected {comps} component(s), got {}",
                f.components()
            )));
        }
        Ok(())
    }

    /// `out = δφ` on raw storage (`out` has `dim + 2` components).
    pub fn apply_raw(&self, phi: &[f64], out: &mut [f64]) {
        let n = self.grid.node_count();
        for axis in 0..self.axes() {
            let dst = &mut out[axis * n..(axis + 1) * n];
            self.grid.for_each_line(axis, |base, stride, len, h| {
                diff_line(phi, dst, base, stride, len, h);
            });
        }
        let last = self.axes();
        out[last * n..(last + 1) * n].copy_from_slice(phi);
    }

    /// `out = δᵀq` on raw storage.
    pub fn adjoint_raw(&self, q: &[f64], out: &mut [f64]) {
        let n = self.grid.node_count();
        let last = self.axes();
        out.copy_from_slice(&q[last * n..(last + 1) * n]);
        let mut scratch = Vec::new();
        for axis in 0..self.axes() {
            let src = &q[axis * n..(axis + 1) * n];
            let w = &self.axis_weights[axis];
            self.grid.for_each_line(axis, |base, stride, len, h| {
                diff_line_adjoint_add(src, out, base, stride, len, h, w, &mut scratch);
            });
        }
    }

    /// `out = δᵀδ φ`, reusing `stacked` as scratch of `dim + 2` components.
    pub fn normal_raw(&self, phi: &[f64], out: &mut [f64], stacked: &mut [f64]) {
        self.apply_raw(phi, stacked);
        self.adjoint_raw(stacked, out);
    }

    /// Diagonal of `δᵀδ` (strictly positive).
    pub fn normal_diagonal(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = (0..self.axes())
            .map(|axis| {
                let len = self.axis_weights[axis].len();
                let h = if axis == 0 { self.grid.h_t() } else { self.grid.h_x(axis - 1) };
                let d = diff_matrix(len, h);
                let w = &self.axis_weights[axis];
                (0..len)
                    .map(|k| (0..len).map(|i| d[i][k] * d[i][k] * w[i]).sum::<f64>() / w[k])
                    .collect()
            })
            .collect();
        let s_nodes = self.grid.spatial_nodes();
        let mut diag = Vec::with_capacity(self.grid.node_count());
        for it in 0..self.grid.time_nodes() {
            for s in 0..s_nodes {
                let idx = self.grid.spatial_index(s);
                let mut v = 1.0 + per_axis[0][it];
                for a in 0..self.grid.dim() {
                    v += per_axis[a + 1][idx[a]];
                }
                diag.push(v);
            }
        }
        diag
    }
}

/// Dense 1-D difference matrix with `len` nodes at spacing `h`.
pub(crate) fn diff_matrix(len: usize, h: f64) -> Vec<Vec<f64>> {
    let inv = 0.5 / h;
    let mut d = vec![vec![0.0; len]; len];
    d[0][0] = -3.0 * inv;
    d[0][1] = 4.0 * inv;
    d[0][2] = -inv;
    for i in 1..len - 1 {
        d[i][i - 1] = -inv;
        d[i][i + 1] = inv;
    }
    let n = len - 1;
    d[n][n - 2] = inv;
    d[n][n - 1] = -4.0 * inv;
    d[n][n] = 3.0 * inv;
    d
}

fn diff_line(src: &[f64], dst: &mut [f64], base: usize, stride: usize, len: usize, h: f64) {
    let inv = 0.5 / h;
    let at = |i: usize| base + i * stride;
    dst[at(0)] = (-3.0 * src[at(0)] + 4.0 * src[at(1)] - src[at(2)]) * inv;
    for i in 1..len - 1 {
        dst[at(i)] = (src[at(i + 1)] - src[at(i - 1)]) * inv;
    }
    let n = len - 1;
    dst[at(n)] = (3.0 * src[at(n)] - 4.0 * src[at(n - 1)] + src[at(n - 2)]) * inv;
}

/// `out[k] += (1/w_k) Σ_i D[i,k] w_i y_i` along one line.
#[allow(clippy::too_many_arguments)]
fn diff_line_adjoint_add(
    y: &[f64],
    out: &mut [f64],
    base: usize,
    stride: usize,
    len: usize,
    h: f64,
    w: &[f64],
    acc: &mut Vec<f64>,
) {
    let inv = 0.5 / h;
    let at = |i: usize| base + i * stride;
    acc.clear();
    acc.resize(len, 0.0);
    let z0 = w[0] * y[at(0)] * inv;
    acc[0] -= 3.0 * z0;
    acc[1] += 4.0 * z0;
    acc[2] -= z0;
    for i in 1..len - 1 {
        let z = w[i] * y[at(i)] * inv;
        acc[i + 1] += z;
        acc[i - 1] -= z;
    }
    let n = len - 1;
    let zn = w[n] * y[at(n)] * inv;
    acc[n - 2] += zn;
    acc[n - 1] -= 4.0 * zn;
    acc[n] += 3.0 * zn;
    for k in 0..len {
        out[at(k)] += acc[k] / w[k];
    }
}

pub fn apply_delta(phi: &Field) -> Result<Field> {
    Delta::new(*phi.grid()).apply(phi)
}

pub fn apply_delta_adjoint(q: &Field) -> Result<Field> {
    Delta::new(*q.grid()).adjoint(q)
}

//! Particle trajectories `ẋ = v(t, x)`, `d(ln m)/dt = w(t, x)` by classical
//! fourth-order Runge–Kutta.

use crate::error::{Result, UdotError};
use crate::grid::{SpatialBox, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub t: f64,
    pub x: [f64; MAX_DIM],
    pub logm: f64,
}

impl ParticleState {
    pub fn mass(&self) -> f64 {
        self.logm.exp()
    }
}

/// Trajectory on `[0, 1]` from `x0` carrying mass `m0`, sampled at
/// `steps + 1` equispaced times.
pub fn characteristic_solve<V, W>(
    domain: &SpatialBox,
    x0: &[f64],
    m0: f64,
    v_fn: V,
    w_fn: W,
    steps: usize,
) -> Result<Vec<ParticleState>>
where
    V: Fn(f64, &[f64]) -> [f64; MAX_DIM],
    W: Fn(f64, &[f64]) -> f64,
{
    if !(m0 > 0.0) {
        return Err(UdotError::InvalidMeasure(format!("particle mass must be positive, got {m0}")));
    }
    integrate(domain, 0.0, 1.0, x0, m0.ln(), v_fn, w_fn, steps)
}

/// Trajectory from time `t0` to `t1` (either order) with `steps` RK4 steps,
/// starting from log-mass `logm0`.
#[allow(clippy::too_many_arguments)]
pub fn integrate<V, W>(
    domain: &SpatialBox,
    t0: f64,
    t1: f64,
    x0: &[f64],
    logm0: f64,
    v_fn: V,
    w_fn: W,
    steps: usize,
) -> Result<Vec<ParticleState>>
where
    V: Fn(f64, &[f64]) -> [f64; MAX_DIM],
    W: Fn(f64, &[f64]) -> f64,
{
    let dim = domain.dim;
    if steps == 0 {
        return Err(UdotError::Config("steps must be at least 1".into()));
    }
    if x0.len() != dim {
        return Err(UdotError::InvalidMeasure(format!("expected a {dim}-dimensional position")));
    }
    let mut x = [0.0; MAX_DIM];
    x[..dim].copy_from_slice(x0);
    let exits = |t: f64, x: &[f64; MAX_DIM]| UdotError::ExitsDomain { t, x: x[..dim].to_vec() };
    if !domain.contains(&x[..dim]) {
        return Err(exits(t0, &x));
    }

    // right-hand side (ẋ, d ln m / dt)
    let rhs = |t: f64, x: &[f64; MAX_DIM]| -> ([f64; MAX_DIM], f64) {
        let mut v = v_fn(t, &x[..dim]);
        v[dim..].iter_mut().for_each(|c| *c = 0.0);
        (v, w_fn(t, &x[..dim]))
    };
    let shifted = |x: &[f64; MAX_DIM], k: &[f64; MAX_DIM], h: f64| {
        let mut out = *x;
        for i in 0..dim {
            out[i] += h * k[i];
        }
        out
    };

    let h = (t1 - t0) / steps as f64;
    let mut logm = logm0;
    let mut path = Vec::with_capacity(steps + 1);
    path.push(ParticleState { t: t0, x, logm });
    for n in 0..steps {
        let t = t0 + n as f64 * h;
        let (k1, l1) = rhs(t, &x);
        let (k2, l2) = rhs(t + 0.5 * h, &shifted(&x, &k1, 0.5 * h));
        let (k3, l3) = rhs(t + 0.5 * h, &shifted(&x, &k2, 0.5 * h));
        let (k4, l4) = rhs(t + h, &shifted(&x, &k3, h));
        for i in 0..dim {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        logm += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
        let t_next = if n + 1 == steps { t1 } else { t + h };
        if !domain.contains(&x[..dim]) {
            return Err(exits(t_next, &x));
        }
        path.push(ParticleState { t: t_next, x, logm });
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> SpatialBox {
        SpatialBox::new(&[-2.0], &[2.0]).unwrap()
    }

    #[test]
    fn constant_velocity_moves_rigidly() {
        let p = characteristic_solve(&line(), &[0.0], 1.0, |_, _| [0.7, 0.0], |_, _| 0.0, 10).unwrap();
        let end = p.last().unwrap();
        assert!((end.x[0] - 0.7).abs() < 1e-14);
        assert!((end.mass() - 1.0).abs() < 1e-14);
        assert_eq!(end.t, 1.0);
        assert_eq!(p.len(), 11);
    }

    #[test]
    fn unit_growth_multiplies_by_e() {
        let p = characteristic_solve(&line(), &[0.0], 2.0, |_, _| [0.0; 2], |_, _| 1.0, 5).unwrap();
        assert!((p.last().unwrap().mass() - 2.0 * std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn linear_velocity_field() {
        let p = characteristic_solve(&line(), &[0.1], 1.0, |_, x| [x[0], 0.0], |_, _| 0.0, 100).unwrap();
        assert!((p.last().unwrap().x[0] - 0.1 * std::f64::consts::E).abs() <= 1e-8);
    }

    #[test]
    fn fourth_order_convergence() {
        let end = |n: usize| {
            let p = characteristic_solve(
                &line(),
                &[0.2],
                1.0,
                |t, x| [(x[0] + t).sin(), 0.0],
                |t, x| x[0] * t,
                n,
            )
            .unwrap();
            let e = p.last().unwrap();
            (e.x[0], e.logm)
        };
        let (a, b, c) = (end(10), end(20), end(40));
        let d1 = (a.0 - b.0).abs().max((a.1 - b.1).abs());
        let d2 = (b.0 - c.0).abs().max((b.1 - c.1).abs());
        assert!(d1 <= 16.0 * d2 * 1.2, "{d1} {d2}");
        assert!(d1 / d2 > 12.0, "{}", d1 / d2);
    }

    #[test]
    fn leaving_the_box_is_reported() {
        let err = characteristic_solve(&line(), &[1.5], 1.0, |_, _| [1.0, 0.0], |_, _| 0.0, 20).unwrap_err();
        match err {
            UdotError::ExitsDomain { t, x } => {
                assert!(t > 0.45 && t < 0.6);
                assert!(x[0] > 2.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn backward_integration_inverts_forward() {
        let v = |t: f64, x: &[f64]| [0.3 * (x[0] + t).cos(), 0.2 * x[1]];
        let w = |_: f64, x: &[f64]| x[0] - x[1];
        let sq = SpatialBox::new(&[-3.0, -3.0], &[3.0, 3.0]).unwrap();
        let fwd = integrate(&sq, 0.0, 1.0, &[0.1, 0.4], 0.0, v, w, 200).unwrap();
        let end = fwd.last().unwrap();
        let back = integrate(&sq, 1.0, 0.0, &end.x, end.logm, v, w, 200).unwrap();
        let start = back.last().unwrap();
        assert!((start.x[0] - 0.1).abs() < 1e-10 && (start.x[1] - 0.4).abs() < 1e-10);
        assert!(start.logm.abs() < 1e-10);
    }
}

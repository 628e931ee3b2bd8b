//! Balanced quadratic transport on the line by monotone rearrangement.

use crate::error::{Result, UdotError};

/// Relative mass mismatch accepted by [`quantile_ot_1d`].
pub const MASS_TOL: f64 = 1e-9;

/// `½ ∫₀^m |F₀⁻¹(s) − F₁⁻¹(s)|² ds` for two discrete measures given as atoms
/// (`positions`, `masses`) of equal total mass `m`.
pub fn quantile_ot_1d(x0: &[f64], m0: &[f64], x1: &[f64], m1: &[f64]) -> Result<f64> {
    let atoms = |x: &[f64], m: &[f64]| -> Result<Vec<(f64, f64)>> {
        if x.len() != m.len() {
            return Err(UdotError::InvalidMeasure("positions and masses differ in length".into()));
        }
        if m.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || x.iter().any(|v| !v.is_finite()) {
            return Err(UdotError::InvalidMeasure("atoms must be finite with non-negative mass".into()));
        }
        let mut a: Vec<(f64, f64)> = x.iter().copied().zip(m.iter().copied()).filter(|p| p.1 > 0.0).collect();
        a.sort_by(|p, q| p.0.total_cmp(&q.0));
        Ok(a)
    };
    let a = atoms(x0, m0)?;
    let b = atoms(x1, m1)?;
    let total0: f64 = a.iter().map(|p| p.1).sum();
    let total1: f64 = b.iter().map(|p| p.1).sum();
    if (total0 - total1).abs() > MASS_TOL * total0.max(total1) {
        return Err(UdotError::InfeasibleMassBalance { m0: total0, m1: total1 });
    }

    // sweep both quantile functions over merged breakpoints
    let (mut i, mut j) = (0, 0);
    let (mut left0, mut left1) = (a.first().map_or(0.0, |p| p.1), b.first().map_or(0.0, |p| p.1));
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let piece = left0.min(left1);
        cost += 0.5 * piece * (a[i].0 - b[j].0).powi(2);
        left0 -= piece;
        left1 -= piece;
        if left0 <= 0.0 {
            i += 1;
            left0 = a.get(i).map_or(0.0, |p| p.1);
        }
        if left1 <= 0.0 {
            j += 1;
            left1 = b.get(j).map_or(0.0, |p| p.1);
        }
    }
    Ok(cost)
}

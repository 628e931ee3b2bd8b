//! Single-particle costs by direct transcription, against closed forms.

use udot::hamiltonian::HamiltonianSpec;
use udot::oracle::dirac_pair_cost;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let wfr = HamiltonianSpec::Wfr { delta: 1.0 };
    let growth = dirac_pair_cost(&[0.5], 1.0, &[0.5], 4.0, &wfr, 200)?;
    println!("growth ×4 in place:   {growth:.6} (closed form 2)");

    let shift = dirac_pair_cost(&[0.2], 1.0, &[0.5], 1.0, &HamiltonianSpec::Balanced, 50)?;
    println!("balanced shift by 0.3: {shift:.6} (closed form 0.045)");

    // moving and growing at once: 2δ²(m0 + m1 − 2√(m0 m1) cos(|Δx| / 2δ))
    let both = dirac_pair_cost(&[0.2, 0.2], 1.0, &[0.5, 0.6], 2.0, &wfr, 200)?;
    let closed = 2.0 * (3.0 - 2.0 * 2.0_f64.sqrt() * (0.5_f64 / 2.0).cos());
    println!("planar move with growth: {both:.6} (closed form {closed:.6})");

    let slow = HamiltonianSpec::BoxConstrained { delta: 1.0, v_max: 0.2, w_min: -1.0, w_max: 1.0 };
    match dirac_pair_cost(&[0.2], 1.0, &[0.5], 1.0, &slow, 50) {
        Ok(c) => println!("speed-limited: {c}"),
        Err(e) => println!("speed-limited: {e}"),
    }
    Ok(())
}

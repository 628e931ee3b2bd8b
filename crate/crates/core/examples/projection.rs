//! Euclidean projection onto `{(a, b, c) : a + H(b, c) ≤ 0}` for each
//! Hamiltonian variant.

use udot::hamiltonian::{project_kh, HamiltonianSpec, KPoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let variants = [
        HamiltonianSpec::Wfr { delta: 1.0 },
        HamiltonianSpec::Balanced,
        HamiltonianSpec::BoxConstrained { delta: 1.0, v_max: 0.5, w_min: -0.2, w_max: 0.4 },
    ];
    let y = KPoint::new(1.0, &[2.0], -1.5);
    for spec in variants {
        let p = project_kh(&spec, y)?;
        println!(
            "{spec:?}\n  ({:.6}, {:.6}, {:.6})  distance {:.6}  constraint {:.1e}",
            p.a,
            p.b[0],
            p.c,
            y.dist(&p),
            p.constraint(&spec)
        );
    }
    Ok(())
}

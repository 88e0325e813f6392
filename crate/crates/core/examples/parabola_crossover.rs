//! Scale function at the apex of the parabola exterior: local exponent near
//! 1 at small radii, near 1/2 at large radii.

use tracelab::measures::{harmonic_profile_with, interior_green};
use tracelab::naimtrace::{scale_function, ScaleSource};
use tracelab::{build_domain, DomainSpec, Family};

fn main() -> tracelab::Result<()> {
    let spec = DomainSpec::new(Family::ParabolaExterior, 192, [0.0, -0.75]).with_truncation(5.9);
    let g = build_domain(&spec)?;
    let gu = interior_green(&g)?;
    let h = harmonic_profile_with(&g, &gu, g.base_vertex().expect("base point"))?;
    let apex = g.nearest_vertex([0.0, 0.0]);
    let table = scale_function(&g, &ScaleSource::Profile(&h), &[apex], 2.0 * g.mesh(), f64::INFINITY)?;
    let e = &table.entries[0];
    for (r, psi) in e.radii.iter().zip(&e.values) {
        println!("r = {r:<8} Psi = {psi:.5e}");
    }
    for (r, x) in e.local_exponents() {
        println!("local exponent at r = {r}: {x:.3}");
    }
    Ok(())
}

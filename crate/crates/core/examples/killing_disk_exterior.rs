//! Outside a disk the walk can escape: the trace killing equals the escape
//! probability times the elliptic measure.

use tracelab::measures::{elliptic_from_profile, harmonic_profile_with, interior_green};
use tracelab::naimtrace::trace_form;
use tracelab::{build_domain, DomainSpec, Family};

fn main() -> tracelab::Result<()> {
    let spec = DomainSpec::new(Family::DiskExterior, 128, [16.0, 0.0]).with_truncation(63.0);
    let g = build_domain(&spec)?;
    let gu = interior_green(&g)?;
    let h = harmonic_profile_with(&g, &gu, g.base_vertex().expect("base point"))?;
    let nu = elliptic_from_profile(&g, &h);
    let tf = trace_form(&g, &nu)?;
    let ratios: Vec<f64> = tf.kappa.iter().zip(&nu.values).map(|(k, n)| k / n).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    println!("{} boundary vertices, {} absorbing", g.boundary().len(), g.absorbing().len());
    println!("kappa / nu in [{lo:.6}, {hi:.6}]");
    println!("escape probability from x0: {:.6}", h.escape_probability);
    Ok(())
}

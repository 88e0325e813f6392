//! Random-walk estimate of the harmonic measure against the exact solve.

use tracelab::measures::{harmonic_measure_with, interior_green};
use tracelab::montecarlo::{compare_report, sample_hitting, WalkConfig};
use tracelab::{build_domain, DomainSpec, Family};

fn main() -> tracelab::Result<()> {
    let spec = DomainSpec::new(Family::HalfPlane, 64, [0.0, 16.0]).with_truncation(32.0);
    let g = build_domain(&spec)?;
    let x0 = g.base_vertex().expect("base point");
    let omega = harmonic_measure_with(&g, &interior_green(&g)?, x0)?;
    let cfg = WalkConfig { seed: 7, n_paths: 100_000, max_steps: 10_000_000 };
    let emp = sample_hitting(&g, x0, &cfg)?;
    let r = compare_report("mc-hitting", &g, &emp, &omega.values, 0.02);
    println!("escaped {} of {}", emp.escaped, emp.n_paths);
    println!("fraction beyond 3 sigma: {:.4}", r.metrics["fraction_outside_3sigma"]);
    println!("exact escape probability {:.4}", 1.0 - omega.total());
    Ok(())
}

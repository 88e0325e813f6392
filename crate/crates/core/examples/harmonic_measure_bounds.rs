//! Harmonic measure of boundary balls against `g(x0, xi_r) Cap(B_r, B_2r)`.

use tracelab::measures::{central_window, hmeas_estimate_check, interior_green, HmeasParams};
use tracelab::{build_domain, DomainSpec, Family};

fn main() -> tracelab::Result<()> {
    let spec = DomainSpec::new(Family::HalfPlane, 128, [0.0, 48.0]).with_truncation(64.0);
    let g = build_domain(&spec)?;
    let gu = interior_green(&g)?;
    let params = HmeasParams {
        scales: vec![4.0, 8.0, 16.0],
        a: 2.0,
        constant: 10.0,
        centers: central_window(&g, 1.0 / 3.0),
    };
    let r = hmeas_estimate_check(&g, &gu, g.base_vertex().expect("base point"), &params)?;
    println!("{} balls, ratio in [{:.4}, {:.4}], spread {:.3}", r.rows.len(), r.min_ratio, r.max_ratio, r.max_ratio / r.min_ratio);
    Ok(())
}

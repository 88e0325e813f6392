//! Condenser capacities of boundary balls and the capacity density check.

use tracelab::potential::{capacity, cdc_check, CdcParams};
use tracelab::{build_domain, DomainSpec, Family};

fn main() -> tracelab::Result<()> {
    let g = build_domain(&DomainSpec::new(Family::Rectangle, 64, [32.0, 32.0]))?;
    let xi = g.nearest_vertex([32.0, 0.0]);
    for r in [2.0, 4.0, 8.0, 16.0] {
        let eq = capacity(&g, &g.ball(xi, r), &g.ball(xi, 2.0 * r))?;
        println!("Cap(B({r}), B({})) = {:.4}", 2.0 * r, eq.capacity);
    }
    let r = cdc_check(&g, &CdcParams { a0: 4.0, scales: vec![2.0, 4.0, 8.0], constant: 10.0, centers: None })?;
    println!("capacity density ratio in [{:.3}, {:.3}], pass {}", r.min_ratio, r.max_ratio, r.pass);
    Ok(())
}

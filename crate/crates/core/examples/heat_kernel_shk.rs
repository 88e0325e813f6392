//! Trace heat kernel on the half-plane against the stable-like two-sided
//! bound, plus the on-diagonal decay rate.

use serde_json::json;
use tracelab::experiment::{run_check, Check, Workspace};
use tracelab::{DomainSpec, Family};

fn main() -> tracelab::Result<()> {
    let spec = DomainSpec::new(Family::HalfPlane, 128, [0.0, 48.0]).with_truncation(64.0);
    let ws = Workspace::new(&spec, 0)?;
    let r = run_check(&ws, &Check::parse("shk-check", &json!({"window": 64.0}))?)?;
    println!("{} (t, xi, eta) triples", r.rows.len());
    println!("p_t / bound in [{:.3}, {:.3}]", r.min_ratio, r.max_ratio);
    println!("on-diagonal slope {:.3}", r.metrics["diagonal_slope"]);
    println!("Chapman-Kolmogorov residual {:.2e}", r.metrics["chapman_kolmogorov_residual"]);
    Ok(())
}

//! Jump kernel decay on the weighted half-plane: the fitted slope of
//! `J_mu(xi, eta)` against distance approaches `-(1 + alpha)`.

use serde_json::json;
use tracelab::experiment::{run_check, Check, Workspace};
use tracelab::{DomainSpec, Family};

fn main() -> tracelab::Result<()> {
    for alpha in [0.5, 1.0, 1.5] {
        let spec = DomainSpec::new(Family::HalfPlane, 128, [0.0, 48.0]).with_alpha(alpha).with_truncation(64.0);
        let ws = Workspace::new(&spec, 0)?;
        let check = Check::parse("jump-check", &json!({"min_distance": 4.0, "fit_range": [4.0, 16.0]}))?;
        let r = run_check(&ws, &check)?;
        println!("alpha {alpha}: slope {:.3}, expected {:.1}", r.metrics["jump_slope"], -1.0 - alpha);
    }
    Ok(())
}

//! Slit plane: inner distances go around the tip, and the profile follows
//! `sqrt((|z| + x) / 2)`.

use serde_json::json;
use tracelab::experiment::{run_check, Check, Workspace};
use tracelab::{DomainSpec, Family};

fn main() -> tracelab::Result<()> {
    let spec = DomainSpec::new(Family::SlitPlane, 128, [8.0, 8.0]).with_truncation(63.0);
    let ws = Workspace::new(&spec, 0)?;
    let g = &ws.graph;
    for x in [2.0, 8.0] {
        let (a, b) = (g.nearest_vertex([-x, 1.0]), g.nearest_vertex([-x, -1.0]));
        println!("d((-{x}, 1), (-{x}, -1)) = {:.4}", g.distance(a, b));
    }
    let c = Check::parse("profile", &json!({"region": [[-8.0, -8.0], [8.0, 8.0]], "tolerance": 0.2}))?;
    let r = run_check(&ws, &c)?;
    println!("profile ratio on [-8, 8]^2: [{:.3}, {:.3}]", r.min_ratio, r.max_ratio);
    Ok(())
}

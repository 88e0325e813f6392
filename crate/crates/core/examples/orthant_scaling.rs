//! Quadrant: harmonic profile against `x y` and exit-time exponents at the
//! corner (2) and on a face (1).

use serde_json::json;
use tracelab::experiment::{run_check, Check, Workspace};
use tracelab::{DomainSpec, Family};

fn main() -> tracelab::Result<()> {
    let spec = DomainSpec::new(Family::Quadrant, 128, [16.0, 16.0]).with_truncation(128.0);
    let ws = Workspace::new(&spec, 0)?;
    let prof = run_check(&ws, &Check::parse("profile", &json!({"region": [[16.0, 16.0], [48.0, 48.0]]}))?)?;
    println!("h / (x y) on [16, 48]^2: [{:.4}, {:.4}]", prof.min_ratio, prof.max_ratio);
    for (name, center, radii) in [("corner", [0.0, 0.0], vec![8.0, 16.0, 32.0, 64.0]), ("face", [64.0, 0.0], vec![8.0, 16.0, 32.0])] {
        let c = Check::parse("exit-time", &json!({"centers": [center], "radii": radii}))?;
        let r = run_check(&ws, &c)?;
        for (k, v) in &r.metrics {
            println!("{name} {k}: {v:.3}");
        }
    }
    Ok(())
}

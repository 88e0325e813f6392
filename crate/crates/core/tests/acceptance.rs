//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::fs;
use std::path::Path;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tracelab::experiment::{run, run_check, Check, ExperimentConfig, Workspace};
use tracelab::measures::{
    elliptic_from_hitting, elliptic_from_profile, harmonic_measure_with, harmonic_profile_with, hitting_columns,
    interior_green, laplacian_identity_check, BoundaryMeasure, MeasureRole,
};
use tracelab::naimtrace::{doob_naim_verify, naim_kernel, trace_form, trace_schur};
use tracelab::traceheat::trace_green_invariance;
use tracelab::{DomainGraph, DomainSpec, EstimateReport, Family};

type Verdict = Result<(bool, String), String>;

fn check(ws: &Workspace, name: &str, params: Value) -> Result<EstimateReport, String> {
    let c = Check::parse(name, &params).map_err(|e| e.to_string())?;
    run_check(ws, &c).map_err(|e| e.to_string())
}

fn workspace(spec: DomainSpec) -> Result<Workspace, String> {
    Workspace::new(&spec, 0).map_err(|e| e.to_string())
}

fn metric(r: &EstimateReport, prefix: &str) -> Result<f64, String> {
    r.metrics
        .iter()
        .find(|(k, _)| k.starts_with(prefix))
        .map(|(_, v)| *v)
        .ok_or_else(|| format!("{}: no metric {prefix}", r.check))
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn e(err: tracelab::Error) -> String {
    err.to_string()
}

/// Specs of every lattice family at side 64.
fn families_64() -> Vec<DomainSpec> {
    vec![
        DomainSpec::new(Family::Rectangle, 64, [32.0, 32.0]),
        DomainSpec::new(Family::HalfPlane, 64, [0.0, 16.0]).with_truncation(32.0),
        DomainSpec::new(Family::Quadrant, 64, [8.0, 8.0]).with_truncation(64.0),
        DomainSpec::new(Family::ParabolaExterior, 64, [0.0, -0.5]).with_truncation(1.95),
        DomainSpec::new(Family::SlitPlane, 64, [4.0, 4.0]).with_truncation(31.0),
        DomainSpec::new(Family::DiskExterior, 64, [8.0, 0.0]).with_truncation(31.0),
    ]
}

fn doob_naim_exact() -> Verdict {
    let start = Instant::now();
    let mut graphs: Vec<DomainGraph> = (0..25).map(|s| random_graph(1000 + s, 12 + (s as usize * 2) % 49, false, 0)).collect();
    graphs.extend([path3(), cycle4(), star3(), kite()]);
    graphs.extend((0..10).map(|s| random_graph(2000 + s, 20 + s as usize * 4, true, 0)));
    let mut worst: f64 = 0.0;
    for g in &graphs {
        let gu = interior_green(g).map_err(e)?;
        let x0 = g.interior()[0];
        let omega = harmonic_measure_with(g, &gu, x0).map_err(e)?;
        let tf = trace_form(g, &omega).map_err(e)?;
        let nk = naim_kernel(g, &gu, x0).map_err(e)?;
        let r = doob_naim_verify(g, &tf, &nk, None, 1e-9);
        worst = worst.max(r.max_ratio);
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((worst <= 1e-9 && secs < 5.0, format!("{} graphs, max deviation {worst:.2e}, {secs:.2}s", graphs.len())))
}

fn laplacian_identities() -> Verdict {
    let start = Instant::now();
    let (mut om, mut nu_dev) = (0.0f64, 0.0f64);
    for spec in families_64() {
        let g = tracelab::build_domain(&spec).map_err(e)?;
        let x0 = g.base_vertex().ok_or("no base vertex")?;
        om = om.max(laplacian_identity_check(&g, x0).map_err(e)?);
        if !g.absorbing().is_empty() {
            let gu = interior_green(&g).map_err(e)?;
            let h = harmonic_profile_with(&g, &gu, x0).map_err(e)?;
            let nu = elliptic_from_profile(&g, &h);
            let cols = hitting_columns(&g, &gu).map_err(e)?;
            let alt = elliptic_from_hitting(&g, &gu, &cols, &h);
            nu_dev = nu_dev.max(max_rel(&alt.values, &nu.values));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        om <= 1e-10 && nu_dev <= 1e-10 && secs < 30.0,
        format!("omega {om:.2e}, nu {nu_dev:.2e} (relative), 6 families, {secs:.2}s"),
    ))
}

fn trace_green() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut balls = 0;
    for spec in families_64() {
        let g = tracelab::build_domain(&spec).map_err(e)?;
        let s = trace_schur(&g, Default::default()).map_err(e)?;
        let mu = BoundaryMeasure { role: MeasureRole::Reference, values: vec![1.0; g.boundary().len()], base_point: None };
        let tf = tracelab::naimtrace::trace_form_from_schur(s, &mu).map_err(e)?;
        let h = g.mesh();
        for _ in 0..10 {
            let xi = g.boundary()[rng.random_range(0..g.boundary().len())];
            let r = h * rng.random_range(2.0..8.0);
            let b = g.boundary_ball(xi, r);
            worst = worst.max(trace_green_invariance(&g, &tf, &b).map_err(e)?);
            balls += 1;
        }
    }
    Ok((worst <= 1e-9, format!("{balls} balls, max relative deviation {worst:.2e}")))
}

fn half_plane(alpha: f64) -> Result<Workspace, String> {
    workspace(DomainSpec::new(Family::HalfPlane, 128, [0.0, 48.0]).with_alpha(alpha).with_truncation(64.0))
}

fn jump_slope(ws: &Workspace) -> Result<f64, String> {
    let r = check(ws, "jump-check", json!({"min_distance": 4.0, "fit_range": [4.0, 16.0]}))?;
    metric(&r, "jump_slope")
}

fn stable_recovery(hp1: &Workspace) -> Verdict {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (alpha, band) in [(0.5, 0.2), (1.0, 0.15), (1.5, 0.2)] {
        let slope = if alpha == 1.0 { jump_slope(hp1)? } else { jump_slope(&half_plane(alpha)?)? };
        ok &= (slope + 1.0 + alpha).abs() <= band;
        parts.push(format!("J slope a={alpha}: {slope:.3} (target {:.1})", -1.0 - alpha));
    }
    let shk = check(hp1, "shk-check", json!({"window": 64.0}))?;
    let diag = metric(&shk, "diagonal_slope")?;
    ok &= (diag + 1.0).abs() <= 0.2;
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    parts.push(format!("heat-kernel diagonal slope {diag:.3} (target -1)"));
    Ok((ok, format!("{}, {secs:.1}s", parts.join(", "))))
}

fn profile_deviation(r: &EstimateReport) -> f64 {
    (r.max_ratio - 1.0).abs().max((1.0 - r.min_ratio).abs())
}

fn orthant() -> Verdict {
    let ws = workspace(DomainSpec::new(Family::Quadrant, 128, [16.0, 16.0]).with_truncation(128.0))?;
    let prof = check(&ws, "profile", json!({"region": [[16.0, 16.0], [48.0, 48.0]], "tolerance": 0.05}))?;
    let dev = profile_deviation(&prof);
    let corner = check(&ws, "exit-time", json!({"centers": [[0.0, 0.0]], "radii": [8.0, 16.0, 32.0, 64.0]}))?;
    let face = check(&ws, "exit-time", json!({"centers": [[64.0, 0.0]], "radii": [8.0, 16.0, 32.0]}))?;
    let (c, f) = (metric(&corner, "exponent_")?, metric(&face, "exponent_")?);
    Ok((
        dev <= 0.05 && within(c, 1.8, 2.2) && within(f, 0.9, 1.1),
        format!("profile deviation {:.1}%, corner exponent {c:.3}, face exponent {f:.3}", 100.0 * dev),
    ))
}

fn parabola() -> Verdict {
    let ws = workspace(DomainSpec::new(Family::ParabolaExterior, 192, [0.0, -0.75]).with_truncation(5.9))?;
    let r = check(&ws, "scale", json!({"centers": [[0.0, 0.0]]}))?;
    let (small, large) = (metric(&r, "exponent_small_")?, metric(&r, "exponent_large_")?);
    Ok((
        within(small, 0.85, 1.15) && within(large, 0.35, 0.65),
        format!("small-scale exponent {small:.3}, large-scale exponent {large:.3}"),
    ))
}

fn harmonic_measure_bounds(hp1: &Workspace) -> Verdict {
    let quadrant = workspace(DomainSpec::new(Family::Quadrant, 128, [48.0, 48.0]).with_truncation(128.0))?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, ws) in [("half_plane", hp1), ("quadrant", &quadrant)] {
        let hm = check(ws, "hmeas-check", json!({"scales": [4.0, 8.0, 16.0], "a": 2.0, "constant": 10.0}))?;
        let db = check(ws, "doubling-check", json!({"measure": "harmonic", "constant": 16.0}))?;
        let spread = hm.max_ratio / hm.min_ratio;
        ok &= !hm.rows.is_empty() && spread <= 100.0 && db.max_ratio <= 16.0;
        parts.push(format!("{name}: spread {spread:.2} over {} balls, doubling {:.2}", hm.rows.len(), db.max_ratio));
    }
    Ok((ok, parts.join("; ")))
}

fn killing_dichotomy() -> Verdict {
    let mut kmax: f64 = 0.0;
    let bounded = [
        tracelab::build_domain(&DomainSpec::new(Family::Rectangle, 64, [32.0, 32.0])).map_err(e)?,
        path3(),
        kite(),
        random_graph(77, 50, true, 0),
    ];
    for g in &bounded {
        let s = trace_schur(g, Default::default()).map_err(e)?;
        let scale = s.amax();
        for i in 0..s.nrows() {
            kmax = kmax.max(s.row(i).iter().sum::<f64>().abs() / scale);
        }
    }
    let ws = workspace(DomainSpec::new(Family::DiskExterior, 128, [16.0, 0.0]).with_truncation(63.0))?;
    let r = check(&ws, "killing-check", json!({"tolerance": 0.1}))?;
    let cv = metric(&r, "coefficient_of_variation")?;
    let err = metric(&r, "escape_relative_error")?;
    Ok((
        kmax <= 1e-10 && cv <= 0.1 && err <= 0.1,
        format!("bounded max |kappa| {kmax:.2e}; disk exterior CV {:.2}%, escape error {:.2}%", 100.0 * cv, 100.0 * err),
    ))
}

fn shk(hp1: &Workspace) -> Verdict {
    let r = check(hp1, "shk-check", json!({"window": 64.0, "constant": 50.0}))?;
    let ck = metric(&r, "chapman_kolmogorov_residual")?;
    let ok = !r.rows.is_empty() && r.min_ratio >= 1.0 / 50.0 && r.max_ratio <= 50.0 && ck <= 1e-8;
    Ok((ok, format!("{} triples, ratios [{:.3}, {:.3}], CK residual {ck:.2e}", r.rows.len(), r.min_ratio, r.max_ratio)))
}

fn monte_carlo() -> Verdict {
    let mut ws = workspace(DomainSpec::new(Family::HalfPlane, 64, [0.0, 16.0]).with_truncation(32.0))?;
    ws.seed = 7;
    let hit = check(&ws, "mc-hitting", json!({"n_paths": 100000, "max_outside": 0.02}))?;
    let watched = check(&ws, "mc-watched", json!({"n_paths": 100000, "start": [0.0, 0.0], "tolerance": 1e-9}))?;
    let frac = metric(&hit, "fraction_outside_3sigma")?;
    let res = metric(&watched, "generator_residual")?;
    Ok((
        hit.pass && frac <= 0.02 && res <= 1e-9,
        format!("{:.2}% outside 3 sigma, watched generator residual {res:.2e}", 100.0 * frac),
    ))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|x| x.to_string())?;
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut files = 0;
    for name in ["half_plane_alpha1.json", "monte_carlo.json", "p3_doob_naim.json"] {
        let mut outputs = Vec::new();
        for (k, parallel) in [false, true].into_iter().enumerate() {
            let mut cfg = ExperimentConfig::load(&configs.join(name)).map_err(e)?;
            cfg.output_dir = dir.path().join(format!("{name}.{k}"));
            cfg.parallel = parallel;
            run(&cfg).map_err(e)?;
            outputs.push(cfg.output_dir);
        }
        let mut names: Vec<_> = fs::read_dir(&outputs[0]).map_err(|x| x.to_string())?.map(|d| d.unwrap().file_name()).collect();
        names.sort();
        for n in names {
            let a = fs::read(outputs[0].join(&n)).map_err(|x| x.to_string())?;
            let b = fs::read(outputs[1].join(&n)).map_err(|x| x.to_string())?;
            if a != b {
                return Ok((false, format!("{name}: {n:?} differs between runs")));
            }
            files += 1;
        }
    }
    Ok((true, format!("3 configs run twice (serial, parallel), {files} files byte-identical")))
}

fn main() {
    let hp1 = half_plane(1.0);
    let with_hp1 = |f: fn(&Workspace) -> Verdict| -> Verdict {
        match &hp1 {
            Ok(ws) => f(ws),
            Err(err) => Err(err.clone()),
        }
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("exact Doob-Naim identity", Box::new(doob_naim_exact)),
        ("Laplacian identities", Box::new(laplacian_identities)),
        ("trace-Green invariance", Box::new(trace_green)),
        ("Cauchy/stable recovery", Box::new(move || with_hp1(stable_recovery))),
        ("orthant scaling", Box::new(orthant)),
        ("parabola crossover", Box::new(parabola)),
        ("harmonic-measure bounds and doubling", Box::new(move || with_hp1(harmonic_measure_bounds))),
        ("pure-jump / killing dichotomy", Box::new(killing_dichotomy)),
        ("heat-kernel bound", Box::new(move || with_hp1(shk))),
        ("Monte Carlo consistency", Box::new(monte_carlo)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail) = match f() {
            Ok(v) => v,
            Err(err) => (false, format!("error: {err}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {:>2} {}: {name}: {detail}", k + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! The boundary trace form, its Naïm-kernel representation and the scale
//! function that governs its jump kernel.
//!
//! Two routes to the same boundary coupling are kept apart on purpose:
//! [`naim_kernel`] assembles `Q = C_FU g_U C_UF` from Green rows of the
//! first interior layer, while [`trace_form`] eliminates `U` by solving
//! against the columns of `L_UF`. [`doob_naim_verify`] compares them.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphdomain::DomainGraph;
use crate::measures::{BoundaryMeasure, ProfileVector};
use crate::potential::GreenFunction;
use crate::report::{log_log_slope, EstimateReport};
use crate::solvers::{schur_complement, SolverOptions};

/// Naïm kernel with base point `x0`. Matrices are indexed by boundary slot.
#[derive(Debug, Clone)]
pub struct NaimKernel {
    pub x0: usize,
    /// `omega_{x0}` in boundary order.
    pub omega: Vec<f64>,
    /// `Q(xi, eta) = sum_{x,y in U} c_{xi x} g_U(x, y) c_{y eta}`.
    pub coupling: DMatrix<f64>,
    /// `Theta(xi, eta) = Q(xi, eta) / (omega(xi) omega(eta))`.
    pub theta: DMatrix<f64>,
}

fn require_interior(g: &DomainGraph, x: usize) -> Result<()> {
    if x >= g.vertex_count() || !g.is_interior(x) {
        return Err(Error::InvalidArgument(format!("vertex {x} is not interior")));
    }
    Ok(())
}

fn flux(g: &DomainGraph, gu: &GreenFunction, row: &[f64]) -> Vec<f64> {
    crate::measures::boundary_flux(g, gu, row)
}

/// Boundary values of the Naïm kernel by the discrete normal-derivative
/// formula.
pub fn naim_kernel(g: &DomainGraph, gu: &GreenFunction, x0: usize) -> Result<NaimKernel> {
    require_interior(g, x0)?;
    let nf = g.boundary().len();
    let mut layer: Vec<usize> = g
        .boundary()
        .iter()
        .flat_map(|&b| g.neighbors(b).iter().map(|p| p.0))
        .filter(|&x| g.is_interior(x))
        .collect();
    layer.sort_unstable();
    layer.dedup();
    let nu = gu.domain().len();
    // Boundary flux of g_U(x, .) for every first-layer vertex x.
    let fluxes: Vec<Vec<f64>> = layer
        .par_iter()
        .map(|&x| {
            let mut e = vec![0.0; nu];
            e[gu.local(x).expect("interior")] = 1.0;
            gu.solve(&e).map(|row| flux(g, gu, &row))
        })
        .collect::<Result<_>>()?;
    let slot: HashMap<usize, usize> = layer.iter().enumerate().map(|(k, &x)| (x, k)).collect();
    let mut q = DMatrix::zeros(nf, nf);
    for (i, &xi) in g.boundary().iter().enumerate() {
        for &(x, c) in g.neighbors(xi) {
            if let Some(&k) = slot.get(&x) {
                for j in 0..nf {
                    q[(i, j)] += c * fluxes[k][j];
                }
            }
        }
    }
    let q = (&q + q.transpose()) * 0.5;
    let omega = flux(g, gu, &gu.row(x0)?);
    let theta = DMatrix::from_fn(nf, nf, |i, j| q[(i, j)] / (omega[i] * omega[j]));
    Ok(NaimKernel { x0, omega, coupling: q, theta })
}

impl NaimKernel {
    /// Interior values `g_U(x, y) / (g_U(x0, x) g_U(x0, y))`.
    pub fn interior(&self, gu: &GreenFunction, x: usize, y: usize) -> Result<f64> {
        if x == self.x0 || y == self.x0 {
            return Err(Error::InvalidArgument("Naïm kernel is undefined at the base point".into()));
        }
        Ok(gu.value(x, y)? / (gu.value(self.x0, x)? * gu.value(self.x0, y)?))
    }

    /// Mixed values `omega_x(eta) / (g_U(x0, x) omega_{x0}(eta))`.
    pub fn mixed(&self, g: &DomainGraph, gu: &GreenFunction, x: usize, eta: usize) -> Result<f64> {
        if x == self.x0 {
            return Err(Error::InvalidArgument("Naïm kernel is undefined at the base point".into()));
        }
        let k = g
            .boundary_slot(eta)
            .ok_or_else(|| Error::InvalidArgument(format!("vertex {eta} is not a boundary vertex")))?;
        let row = gu.row(x)?;
        let omega_x: f64 = g.neighbors(eta).iter().filter_map(|&(y, c)| gu.local(y).map(|l| c * row[l])).sum();
        Ok(omega_x / (gu.value(self.x0, x)? * self.omega[k]))
    }

    pub fn boundary_value(&self, g: &DomainGraph, xi: usize, eta: usize) -> Option<f64> {
        Some(self.theta[(g.boundary_slot(xi)?, g.boundary_slot(eta)?)])
    }
}

/// Corkscrew comparison value `g_U(xi_r, eta_r) / (g_U(x0, xi_r) g_U(x0, eta_r))`.
pub fn naim_corkscrew_estimate(
    g: &DomainGraph,
    gu: &GreenFunction,
    x0: usize,
    xi: usize,
    eta: usize,
    r: f64,
    c0: f64,
) -> Result<f64> {
    if xi == eta {
        return Err(Error::InvalidArgument("corkscrew estimate needs distinct boundary points".into()));
    }
    let limit = c0 * g.distance(x0, xi).min(g.distance(x0, eta)).min(g.distance(xi, eta));
    if r > limit {
        return Err(Error::InvalidArgument(format!("radius {r} exceeds {limit}")));
    }
    let a = g.corkscrew(xi, r)?.xi_r;
    let b = g.corkscrew(eta, r)?.xi_r;
    gu.prefetch(&[x0, a])?;
    Ok(gu.value(a, b)? / (gu.value(x0, a)? * gu.value(x0, b)?))
}

/// Discrete boundary trace form.
#[derive(Debug, Clone)]
pub struct TraceForm {
    /// Schur complement of the generator onto `F`, in boundary order.
    pub s: DMatrix<f64>,
    /// Jump conductances `-S_{xi eta}` (zero diagonal).
    pub c_hat: DMatrix<f64>,
    /// Killing `sum_eta S_{xi eta}`.
    pub kappa: Vec<f64>,
    /// Reference measure.
    pub mu: Vec<f64>,
    /// `c_hat / (mu x mu)`.
    pub j_mu: DMatrix<f64>,
}

/// Schur complement of the killed generator on `U ∪ F` onto `F`.
pub fn trace_schur(g: &DomainGraph, opts: SolverOptions) -> Result<DMatrix<f64>> {
    let set: Vec<usize> = g.boundary().iter().chain(g.interior()).copied().collect();
    let l = g.killed_generator(&set);
    let nf = g.boundary().len();
    let keep: Vec<usize> = (0..nf).collect();
    let eliminate: Vec<usize> = (nf..set.len()).collect();
    schur_complement(&l, &keep, &eliminate, opts)
}

pub fn trace_form(g: &DomainGraph, mu: &BoundaryMeasure) -> Result<TraceForm> {
    trace_form_from_schur(trace_schur(g, SolverOptions::default())?, mu)
}

pub fn trace_form_from_schur(s: DMatrix<f64>, mu: &BoundaryMeasure) -> Result<TraceForm> {
    let n = s.nrows();
    if mu.values.len() != n {
        return Err(Error::InvalidArgument("measure does not match the boundary".into()));
    }
    if let Some(m) = mu.values.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::InvalidArgument(format!("reference measure must be positive on F, found {m}")));
    }
    let c_hat = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { -s[(i, j)] });
    let kappa = (0..n).map(|i| s.row(i).iter().sum()).collect();
    let j_mu = DMatrix::from_fn(n, n, |i, j| c_hat[(i, j)] / (mu.values[i] * mu.values[j]));
    Ok(TraceForm { s, c_hat, kappa, mu: mu.values.clone(), j_mu })
}

/// Compares jump conductances with the Naïm representation:
/// `c_hat(xi, eta) - c_{xi eta} = omega(xi) omega(eta) Theta(xi, eta)`.
/// The ratio column is the deviation relative to `c_hat`. A second base
/// point checks that the product does not depend on the base point.
pub fn doob_naim_verify(
    g: &DomainGraph,
    tf: &TraceForm,
    nk: &NaimKernel,
    other: Option<&NaimKernel>,
    tol: f64,
) -> EstimateReport {
    let mut report = EstimateReport::new(
        "doob-naim-verify",
        &["xi", "eta", "c_hat", "direct", "omega_theta", "deviation"],
        2,
        "deviation",
    );
    let f = g.boundary();
    let mut base_dev: f64 = 0.0;
    for i in 0..f.len() {
        for j in 0..f.len() {
            if i == j {
                continue;
            }
            let c_hat = tf.c_hat[(i, j)];
            let direct = g.conductance(f[i], f[j]);
            let prod = nk.omega[i] * nk.omega[j] * nk.theta[(i, j)];
            let dev = (c_hat - direct - prod).abs() / c_hat.abs().max(f64::MIN_POSITIVE);
            report.push(vec![f[i].into(), f[j].into(), c_hat.into(), direct.into(), prod.into(), dev.into()]);
            if let Some(o) = other {
                let p2 = o.omega[i] * o.omega[j] * o.theta[(i, j)];
                base_dev = base_dev.max((p2 - prod).abs() / prod.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    report.metric("base_point_deviation", base_dev);
    report.pass_if_max_at_most(tol);
    report.pass &= base_dev <= tol;
    report
}

/// Dyadic scale function table, one entry per tested boundary vertex.
#[derive(Debug, Clone)]
pub struct ScaleTable {
    pub entries: Vec<ScaleEntry>,
    index: HashMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEntry {
    pub xi: usize,
    /// Knots `r0 2^k`.
    pub radii: Vec<f64>,
    pub corkscrews: Vec<usize>,
    /// `g_U(x0, xi_r)` (bounded) or `h(xi_r)` (unbounded) at the knots.
    pub values: Vec<f64>,
}

impl ScaleEntry {
    /// Piecewise-linear interpolation in `(log r, log Psi)`; end segments are
    /// extended linearly. `Psi(0) = 0`.
    pub fn psi(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let n = self.radii.len();
        if n == 1 {
            return self.values[0] * r / self.radii[0];
        }
        let k = match self.radii.iter().position(|&k| k >= r) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => n - 2,
        };
        let (r0, r1) = (self.radii[k].ln(), self.radii[k + 1].ln());
        let (p0, p1) = (self.values[k].ln(), self.values[k + 1].ln());
        (p0 + (p1 - p0) * (r.ln() - r0) / (r1 - r0)).exp()
    }

    /// Inverse of [`Self::psi`] by bisection on `log r`; the flag reports
    /// whether `t` lies outside the sampled range.
    pub fn psi_inverse(&self, t: f64) -> (f64, bool) {
        let lo_knot = self.radii[0];
        let hi_knot = *self.radii.last().expect("non-empty");
        let clipped = t < self.values[0] || t > *self.values.last().expect("non-empty");
        let (mut lo, mut hi) = ((lo_knot / 1e6).ln(), (hi_knot * 1e6).ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.psi(mid.exp()) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        ((0.5 * (lo + hi)).exp(), clipped)
    }

    /// `log2(Psi(r_{k+1}) / Psi(r_k))` between consecutive knots, keyed by
    /// the lower knot.
    pub fn local_exponents(&self) -> Vec<(f64, f64)> {
        self.radii
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(r, v)| (r[0], (v[1] / v[0]).ln() / (r[1] / r[0]).ln()))
            .collect()
    }
}

impl ScaleTable {
    pub fn get(&self, xi: usize) -> Option<&ScaleEntry> {
        self.index.get(&xi).map(|&k| &self.entries[k])
    }

    pub fn psi(&self, xi: usize, r: f64) -> Option<f64> {
        self.get(xi).map(|e| e.psi(r))
    }

    /// Smallest and largest local exponent over all entries.
    pub fn exponent_bracket(&self) -> (f64, f64) {
        self.entries
            .iter()
            .flat_map(|e| e.local_exponents())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, b)| (lo.min(b), hi.max(b)))
    }
}

/// Source of raw scale values.
pub enum ScaleSource<'a> {
    /// `g_U(x0, .)` for bounded domains.
    Green(&'a GreenFunction, usize),
    /// `h_{x0}` for unbounded domains.
    Profile(&'a ProfileVector),
}

/// Builds the table on dyadic knots `r0 2^k < r_max` for each center.
pub fn scale_function(g: &DomainGraph, source: &ScaleSource, centers: &[usize], r0: f64, r_max: f64) -> Result<ScaleTable> {
    let row = match source {
        ScaleSource::Green(gu, x0) => Some((gu, gu.row(*x0)?)),
        ScaleSource::Profile(_) => None,
    };
    let limit = r_max.min(g.diameter() / 4.0);
    let mut entries = Vec::with_capacity(centers.len());
    for &xi in centers {
        let mut radii = Vec::new();
        let mut corkscrews = Vec::new();
        let mut values = Vec::new();
        let mut r = r0;
        while r < limit {
            let c = g.corkscrew(xi, r)?;
            let v = match (&row, source) {
                (Some((gu, row)), _) => row[gu.local(c.xi_r).expect("interior")],
                (None, ScaleSource::Profile(h)) => h.at(c.xi_r),
                _ => unreachable!(),
            };
            if let Some(&prev) = values.last() {
                if !(v > prev) {
                    return Err(Error::NonMonotoneScale { xi, r });
                }
            }
            radii.push(r);
            corkscrews.push(c.xi_r);
            values.push(v);
            r *= 2.0;
        }
        if radii.is_empty() {
            return Err(Error::InvalidArgument(format!("no admissible scale at vertex {xi}")));
        }
        entries.push(ScaleEntry { xi, radii, corkscrews, values });
    }
    let index = entries.iter().enumerate().map(|(k, e)| (e.xi, k)).collect();
    Ok(ScaleTable { entries, index })
}

/// Report of the table: raw values and local exponents per knot, plus the
/// measure-scale ratio `mu(B) R^2 / (Psi m(B))`. The first and last local
/// exponent of each center are reported as `exponent_small_<xi>` and
/// `exponent_large_<xi>`.
pub fn scale_report(g: &DomainGraph, table: &ScaleTable, mu: &BoundaryMeasure) -> EstimateReport {
    let mut report = EstimateReport::new(
        "scale",
        &["xi", "r", "corkscrew", "psi", "local_exponent", "measure_ratio"],
        2,
        "measure_ratio",
    );
    for e in &table.entries {
        let exps = e.local_exponents();
        for (k, &r) in e.radii.iter().enumerate() {
            let m_ball: f64 = g.ball(e.xi, r).iter().map(|&v| g.measure()[v]).sum();
            let ratio = mu.ball_mass(g, e.xi, r) * r * r / (e.values[k] * m_ball);
            let exp = exps.get(k).map_or(f64::NAN, |p| p.1);
            report.push(vec![e.xi.into(), r.into(), e.corkscrews[k].into(), e.values[k].into(), exp.into(), ratio.into()]);
        }
    }
    for e in &table.entries {
        let exps = e.local_exponents();
        if let (Some(first), Some(last)) = (exps.first(), exps.last()) {
            report.metric(&format!("exponent_small_{}", e.xi), first.1);
            report.metric(&format!("exponent_large_{}", e.xi), last.1);
        }
    }
    let (b1, b2) = table.exponent_bracket();
    report.metric("beta_lower", b1);
    report.metric("beta_upper", b2);
    report.finalize();
    report.pass = b1 > 0.0 && b2.is_finite();
    report
}

/// Parameters of [`jump_bound_check`].
#[derive(Debug, Clone)]
pub struct JumpParams {
    pub centers: Vec<usize>,
    /// Pairs closer than this are skipped (at least twice the mesh).
    pub min_distance: f64,
    /// Distance range of the log-log slope fit.
    pub fit_range: (f64, f64),
    pub constant: f64,
}

/// Ratio `J_mu(xi, eta) mu(B(xi, d)) Psi(xi, d)` over pairs of centers.
pub fn jump_bound_check(
    g: &DomainGraph,
    tf: &TraceForm,
    nk: &NaimKernel,
    mu: &BoundaryMeasure,
    table: &ScaleTable,
    p: &JumpParams,
) -> EstimateReport {
    let mut report = EstimateReport::new(
        "jump-check",
        &["xi", "eta", "distance", "theta", "c_hat", "J_mu", "bound_ratio"],
        2,
        "bound_ratio",
    );
    let min_d = p.min_distance.max(2.0 * g.mesh());
    let (mut fx, mut fy) = (Vec::new(), Vec::new());
    for &xi in &p.centers {
        let (Some(i), Some(entry)) = (g.boundary_slot(xi), table.get(xi)) else {
            report.warn(format!("vertex {xi} has no scale entry"));
            continue;
        };
        for &eta in &p.centers {
            let Some(j) = g.boundary_slot(eta) else { continue };
            let d = g.distance(xi, eta);
            if eta == xi || d < min_d {
                continue;
            }
            let jm = tf.j_mu[(i, j)];
            let ratio = jm * mu.ball_mass(g, xi, d) * entry.psi(d);
            report.push(vec![
                xi.into(),
                eta.into(),
                d.into(),
                nk.theta[(i, j)].into(),
                tf.c_hat[(i, j)].into(),
                jm.into(),
                ratio.into(),
            ]);
            if d >= p.fit_range.0 && d <= p.fit_range.1 {
                fx.push(d);
                fy.push(jm);
            }
        }
    }
    report.metric("jump_slope", log_log_slope(&fx, &fy));
    report.pass_if_spread_at_most(p.constant * p.constant);
    report
}

/// Ratio `kappa / nu` on the window. For bounded domains only `kappa == 0`
/// is checked.
pub fn killing_check(
    g: &DomainGraph,
    tf: &TraceForm,
    nu: Option<(&BoundaryMeasure, &ProfileVector)>,
    window: &[usize],
    tol: f64,
) -> EstimateReport {
    let mut report = EstimateReport::new("killing-check", &["xi", "kappa", "nu", "ratio"], 1, "ratio");
    match nu {
        None => {
            for &xi in window {
                let k = g.boundary_slot(xi).expect("boundary vertex");
                report.push(vec![xi.into(), tf.kappa[k].into(), 0.0.into(), tf.kappa[k].abs().into()]);
            }
            report.warn("pure-jump case, killing vacuously zero");
            report.pass_if_max_at_most(tol);
        }
        Some((nu, h)) => {
            let mut ratios = Vec::new();
            for &xi in window {
                let k = g.boundary_slot(xi).expect("boundary vertex");
                let r = tf.kappa[k] / nu.values[k];
                ratios.push(r);
                report.push(vec![xi.into(), tf.kappa[k].into(), nu.values[k].into(), r.into()]);
            }
            let n = ratios.len() as f64;
            let mean = ratios.iter().sum::<f64>() / n;
            let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            let cv = var.sqrt() / mean.abs();
            let err = (mean - h.escape_probability).abs() / h.escape_probability;
            report.metric("coefficient_of_variation", cv);
            report.metric("implied_escape", mean);
            report.metric("direct_escape", h.escape_probability);
            report.metric("escape_relative_error", err);
            report.finalize();
            report.pass = !ratios.is_empty() && cv <= 0.1 && err <= 0.1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{harmonic_measure_with, interior_green, MeasureRole};

    fn graph(n: usize, edges: &[(usize, usize, f64)], interior: Vec<usize>, boundary: Vec<usize>) -> DomainGraph {
        let coords = (0..n).map(|i| [i as f64, (i * i) as f64]).collect();
        DomainGraph::from_parts(coords, edges.to_vec(), vec![1.0; n], interior, boundary, vec![], 1.0).unwrap()
    }

    fn p3() -> DomainGraph {
        graph(3, &[(0, 1, 1.0), (1, 2, 1.0)], vec![1], vec![0, 2])
    }

    #[test]
    fn naim_kernel_small_graphs() {
        let g = p3();
        let gu = interior_green(&g).unwrap();
        let nk = naim_kernel(&g, &gu, 1).unwrap();
        assert!((nk.theta[(0, 1)] - 2.0).abs() < 1e-14);

        let c4 = graph(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)], vec![1, 3], vec![0, 2]);
        let gu = interior_green(&c4).unwrap();
        let nk = naim_kernel(&c4, &gu, 1).unwrap();
        assert!((nk.theta[(0, 1)] - 4.0).abs() < 1e-14);

        let s3 = graph(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)], vec![0], vec![1, 2, 3]);
        let gu = interior_green(&s3).unwrap();
        let nk = naim_kernel(&s3, &gu, 0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((nk.theta[(i, j)] - 3.0).abs() < 1e-13);
                }
            }
        }
        assert!(nk.interior(&gu, 0, 0).is_err());
    }

    #[test]
    fn p3_trace_form() {
        let g = p3();
        let gu = interior_green(&g).unwrap();
        let omega = harmonic_measure_with(&g, &gu, 1).unwrap();
        let tf = trace_form(&g, &omega).unwrap();
        assert!((tf.c_hat[(0, 1)] - 0.5).abs() < 1e-15);
        assert!(tf.kappa.iter().all(|k| k.abs() < 1e-15));
        let nk = naim_kernel(&g, &gu, 1).unwrap();
        let rep = doob_naim_verify(&g, &tf, &nk, None, 1e-9);
        assert!(rep.pass);
    }

    #[test]
    fn direct_boundary_edge_is_subtracted() {
        // Square 0-1-2-3 with boundary {0, 1} adjacent and interior {2, 3}.
        let g = graph(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)], vec![2, 3], vec![0, 1]);
        let gu = interior_green(&g).unwrap();
        let omega = harmonic_measure_with(&g, &gu, 2).unwrap();
        let tf = trace_form(&g, &omega).unwrap();
        let nk = naim_kernel(&g, &gu, 2).unwrap();
        // Interior path 2-3 is a series of three unit edges between 1 and 0.
        assert!((tf.c_hat[(0, 1)] - (1.0 + 1.0 / 3.0)).abs() < 1e-14);
        assert!((nk.coupling[(0, 1)] - 1.0 / 3.0).abs() < 1e-14);
        assert!(doob_naim_verify(&g, &tf, &nk, None, 1e-9).pass);
    }

    #[test]
    fn scale_entry_interpolates_power_laws() {
        let e = ScaleEntry {
            xi: 0,
            radii: vec![1.0, 2.0, 4.0, 8.0],
            corkscrews: vec![0; 4],
            values: vec![1.0, 4.0, 16.0, 64.0],
        };
        assert!((e.psi(3.0) - 9.0).abs() < 1e-12);
        assert!((e.psi(16.0) - 256.0).abs() < 1e-9);
        let (r, clipped) = e.psi_inverse(25.0);
        assert!((r - 5.0).abs() < 1e-9 && !clipped);
        assert!(e.psi_inverse(1000.0).1);
        assert_eq!(e.psi(0.0), 0.0);
        assert!(e.local_exponents().iter().all(|p| (p.1 - 2.0).abs() < 1e-12));
    }

    #[test]
    fn nonpositive_measure_rejected() {
        let g = p3();
        let s = trace_schur(&g, SolverOptions::default()).unwrap();
        let mu = BoundaryMeasure { role: MeasureRole::Reference, values: vec![1.0, 0.0], base_point: None };
        assert!(trace_form_from_schur(s, &mu).is_err());
    }
}

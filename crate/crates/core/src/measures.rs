//! Harmonic measure, harmonic profile and the elliptic measure at infinity,
//! with verifiers for their two-sided and doubling estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdomain::DomainGraph;
use crate::potential::{capacity, green, GreenFunction};
use crate::report::EstimateReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureRole {
    Harmonic,
    Elliptic,
    Reference,
    Killing,
}

/// A measure on the boundary `F`, stored in the order of
/// [`DomainGraph::boundary`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMeasure {
    pub role: MeasureRole,
    pub values: Vec<f64>,
    pub base_point: Option<usize>,
}

impl BoundaryMeasure {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Mass of a single boundary vertex.
    pub fn at(&self, g: &DomainGraph, v: usize) -> f64 {
        g.boundary_slot(v).map_or(0.0, |k| self.values[k])
    }

    /// Mass of `F ∩ B(center, r)`.
    pub fn ball_mass(&self, g: &DomainGraph, center: usize, r: f64) -> f64 {
        g.boundary()
            .iter()
            .zip(&self.values)
            .filter(|(&b, _)| g.distance(center, b) < r)
            .map(|(_, m)| m)
            .sum()
    }

    pub fn with_role(mut self, role: MeasureRole) -> Self {
        self.role = role;
        self
    }
}

/// Green function of the interior `U`, the workhorse of this module.
pub fn interior_green(g: &DomainGraph) -> Result<GreenFunction> {
    green(g, g.interior())
}

fn require_interior(g: &DomainGraph, x: usize) -> Result<()> {
    if x >= g.vertex_count() || !g.is_interior(x) {
        return Err(Error::InvalidArgument(format!("vertex {x} is not interior")));
    }
    Ok(())
}

/// Harmonic extensions `phi_eta = g_U C_{U eta}` of the boundary indicators:
/// `phi_eta(x)` is the probability that the walk from `x` first hits `F` at
/// `eta`. Returned in boundary order, each indexed like `gu.domain()`.
pub fn hitting_columns(g: &DomainGraph, gu: &GreenFunction) -> Result<Vec<Vec<f64>>> {
    let nu = gu.domain().len();
    g.boundary()
        .par_iter()
        .map(|&eta| {
            let mut rhs = vec![0.0; nu];
            for &(x, c) in g.neighbors(eta) {
                if let Some(k) = gu.local(x) {
                    rhs[k] += c;
                }
            }
            gu.solve(&rhs)
        })
        .collect()
}

/// Harmonic measure `omega_{x0}` as the first-hit distribution of `F`.
pub fn harmonic_measure(g: &DomainGraph, x0: usize) -> Result<BoundaryMeasure> {
    let gu = interior_green(g)?;
    harmonic_measure_with(g, &gu, x0)
}

pub fn harmonic_measure_with(g: &DomainGraph, gu: &GreenFunction, x0: usize) -> Result<BoundaryMeasure> {
    require_interior(g, x0)?;
    let cols = hitting_columns(g, gu)?;
    let k = gu.local(x0).expect("interior vertex in interior Green domain");
    let values = cols.iter().map(|c| c[k].max(0.0)).collect();
    Ok(BoundaryMeasure { role: MeasureRole::Harmonic, values, base_point: Some(x0) })
}

/// `eta -> sum_x c_{eta x} f(x)` over interior neighbors, for `f` indexed like
/// `gu.domain()`.
pub fn boundary_flux(g: &DomainGraph, gu: &GreenFunction, f: &[f64]) -> Vec<f64> {
    g.boundary()
        .iter()
        .map(|&eta| {
            g.neighbors(eta)
                .iter()
                .filter_map(|&(x, c)| gu.local(x).map(|k| c * f[k]))
                .sum()
        })
        .collect()
}

/// Harmonic measure computed from the Green row of `x0`.
pub fn harmonic_measure_from_green(g: &DomainGraph, gu: &GreenFunction, x0: usize) -> Result<BoundaryMeasure> {
    require_interior(g, x0)?;
    let row = gu.row(x0)?;
    Ok(BoundaryMeasure { role: MeasureRole::Harmonic, values: boundary_flux(g, gu, &row), base_point: Some(x0) })
}

/// Largest deviation between the first-hit distribution and the boundary
/// flux of the Green function `sum_x c_{eta x} g_U(x0, x)`.
pub fn laplacian_identity_check(g: &DomainGraph, x0: usize) -> Result<f64> {
    let gu = interior_green(g)?;
    let hit = harmonic_measure_with(g, &gu, x0)?;
    let flux = harmonic_measure_from_green(g, &gu, x0)?;
    Ok(hit.values.iter().zip(&flux.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Positive harmonic function vanishing on `F`, normalized at the base point.
#[derive(Debug, Clone)]
pub struct ProfileVector {
    /// `h` on every vertex: harmonic on `U`, 0 on `F`, `1 / escape` on the
    /// absorbing ring.
    pub values: Vec<f64>,
    pub base_point: usize,
    pub truncation_radius: Option<f64>,
    /// Probability that the walk from the base point reaches the absorbing
    /// ring before `F`.
    pub escape_probability: f64,
    /// `max |L h|` over interior vertices.
    pub residual: f64,
}

impl ProfileVector {
    pub fn at(&self, v: usize) -> f64 {
        self.values[v]
    }
}

/// Harmonic profile on a truncated unbounded domain.
pub fn harmonic_profile(g: &DomainGraph, x0: usize) -> Result<ProfileVector> {
    let gu = interior_green(g)?;
    harmonic_profile_with(g, &gu, x0)
}

pub fn harmonic_profile_with(g: &DomainGraph, gu: &GreenFunction, x0: usize) -> Result<ProfileVector> {
    require_interior(g, x0)?;
    if g.absorbing().is_empty() {
        return Err(Error::InvalidArgument("harmonic profile needs an absorbing ring".into()));
    }
    let rhs: Vec<f64> = gu
        .domain()
        .iter()
        .map(|&x| g.neighbors(x).iter().filter(|p| g.is_absorbing(p.0)).map(|p| p.1).sum())
        .collect();
    let phi = gu.solve(&rhs)?;
    let escape = phi[gu.local(x0).expect("interior")];
    if !(escape > 0.0) {
        return Err(Error::NotTransient("the base point cannot reach the absorbing ring".into()));
    }
    let mut values = vec![0.0; g.vertex_count()];
    for (k, &x) in gu.domain().iter().enumerate() {
        values[x] = phi[k] / escape;
    }
    for &a in g.absorbing() {
        values[a] = 1.0 / escape;
    }
    let residual = gu
        .domain()
        .iter()
        .map(|&x| {
            g.neighbors(x).iter().map(|&(y, c)| c * (values[x] - values[y])).sum::<f64>().abs()
        })
        .fold(0.0, f64::max);
    Ok(ProfileVector {
        values,
        base_point: x0,
        truncation_radius: g.truncation_radius(),
        escape_probability: escape,
        residual,
    })
}

/// `nu(eta) = sum_x c_{eta x} h(x)`, the boundary flux of the profile.
pub fn elliptic_from_profile(g: &DomainGraph, h: &ProfileVector) -> BoundaryMeasure {
    let values = g
        .boundary()
        .iter()
        .map(|&eta| g.neighbors(eta).iter().map(|&(x, c)| c * h.values[x]).sum())
        .collect();
    BoundaryMeasure { role: MeasureRole::Elliptic, values, base_point: Some(h.base_point) }
}

/// The same measure assembled from first-hit probabilities:
/// `nu(eta) = (sum_y k(y) phi_eta(y) + c(eta, A)) / escape`, where `k(y)` is
/// the conductance from `y` to the absorbing ring.
pub fn elliptic_from_hitting(g: &DomainGraph, gu: &GreenFunction, columns: &[Vec<f64>], h: &ProfileVector) -> BoundaryMeasure {
    let k: Vec<f64> = gu
        .domain()
        .iter()
        .map(|&y| g.neighbors(y).iter().filter(|p| g.is_absorbing(p.0)).map(|p| p.1).sum())
        .collect();
    let values = g
        .boundary()
        .iter()
        .zip(columns)
        .map(|(&eta, col)| {
            let direct: f64 = g.neighbors(eta).iter().filter(|p| g.is_absorbing(p.0)).map(|p| p.1).sum();
            let through: f64 = k.iter().zip(col).map(|(a, b)| a * b).sum();
            (through + direct) / h.escape_probability
        })
        .collect();
    BoundaryMeasure { role: MeasureRole::Elliptic, values, base_point: Some(h.base_point) }
}

/// Elliptic measure together with the approximation sequence
/// `nu_n = omega_{x_n} / g_U(x0, x_n)`.
#[derive(Debug, Clone)]
pub struct EllipticMeasure {
    pub nu: BoundaryMeasure,
    /// Total variation `|nu_n - nu|` over the window, one per far point.
    pub tv: Vec<f64>,
    /// Boundary vertices of the comparison window.
    pub window: Vec<usize>,
    pub monotone: bool,
}

/// Boundary vertices within `fraction * truncation_radius` of the origin.
pub fn central_window(g: &DomainGraph, fraction: f64) -> Vec<usize> {
    let r = g.truncation_radius().unwrap_or_else(|| g.diameter() / 2.0) * fraction;
    g.boundary()
        .iter()
        .copied()
        .filter(|&b| {
            let p = g.coords(b);
            p[0].hypot(p[1]) < r
        })
        .collect()
}

pub fn elliptic_measure(g: &DomainGraph, x0: usize, far_points: &[usize], window_fraction: f64) -> Result<EllipticMeasure> {
    let gu = interior_green(g)?;
    let h = harmonic_profile_with(g, &gu, x0)?;
    let nu = elliptic_from_profile(g, &h);
    let window = central_window(g, window_fraction);
    let row0 = gu.row(x0)?;
    let mut tv = Vec::with_capacity(far_points.len());
    for &xn in far_points {
        require_interior(g, xn)?;
        let omega = harmonic_measure_from_green(g, &gu, xn)?;
        let gn = row0[gu.local(xn).expect("interior")];
        let d: f64 = window
            .iter()
            .map(|&b| {
                let k = g.boundary_slot(b).expect("boundary");
                (omega.values[k] / gn - nu.values[k]).abs()
            })
            .sum();
        tv.push(d);
    }
    let monotone = tv.windows(2).all(|w| w[1] <= w[0]);
    Ok(EllipticMeasure { nu, tv, window, monotone })
}

/// `K_{x0}(x, y)`: `omega_x(y) / omega_{x0}(y)` for boundary `y`, and
/// `g_U(x, y) / g_U(x0, y)` for interior `y`.
pub fn martin_kernel(g: &DomainGraph, gu: &GreenFunction, x0: usize, x: usize, y: usize) -> Result<f64> {
    require_interior(g, x0)?;
    require_interior(g, x)?;
    if x == x0 {
        return Ok(1.0);
    }
    if g.is_boundary(y) {
        let flux = |base: usize| -> Result<f64> {
            let row = gu.row(base)?;
            Ok(g.neighbors(y).iter().filter_map(|&(z, c)| gu.local(z).map(|k| c * row[k])).sum())
        };
        let den = flux(x0)?;
        if den <= 0.0 {
            return Err(Error::InvalidArgument(format!("harmonic measure of {y} from the base point vanishes")));
        }
        Ok(flux(x)? / den)
    } else {
        let den = gu.value(x0, y)?;
        if den <= 0.0 {
            return Err(Error::InvalidArgument(format!("g_U(x0, {y}) vanishes")));
        }
        Ok(gu.value(x, y)? / den)
    }
}

/// Parameters of [`hmeas_estimate_check`].
#[derive(Debug, Clone)]
pub struct HmeasParams {
    pub scales: Vec<f64>,
    /// Scales must stay below `d(xi, x0) / a`.
    pub a: f64,
    /// Pass iff `max / min <= constant^2`.
    pub constant: f64,
    pub centers: Vec<usize>,
}

/// Ratio `omega(B(xi,r) ∩ F) / (g_U(x0, xi_r) Cap_{B(xi,2r)}(B(xi,r)))`.
pub fn hmeas_estimate_check(g: &DomainGraph, gu: &GreenFunction, x0: usize, p: &HmeasParams) -> Result<EstimateReport> {
    let omega = harmonic_measure_with(g, gu, x0)?;
    let row = gu.row(x0)?;
    let mut report = EstimateReport::new(
        "hmeas-check",
        &["xi", "r", "corkscrew", "omega", "green", "capacity", "ratio"],
        2,
        "ratio",
    );
    let mut jobs = Vec::new();
    for &xi in &p.centers {
        for &r in &p.scales {
            if r < 2.0 * g.mesh() {
                report.warn(format!("xi {xi}: scale {r} below twice the mesh skipped"));
                continue;
            }
            if r >= g.distance(xi, x0) / p.a {
                report.warn(format!("xi {xi}: scale {r} too close to the base point skipped"));
                continue;
            }
            match g.corkscrew(xi, r) {
                Ok(c) => jobs.push((xi, r, c.xi_r)),
                Err(e) => report.warn(format!("xi {xi}, r {r}: {e}")),
            }
        }
    }
    let rows: Vec<(usize, f64, usize, f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(xi, r, xr)| -> Result<_> {
            let cap = capacity(g, &g.ball(xi, r), &g.ball(xi, 2.0 * r))?.capacity;
            let gval = row[gu.local(xr).expect("interior")];
            Ok((xi, r, xr, omega.ball_mass(g, xi, r), gval, cap))
        })
        .collect::<Result<_>>()?;
    for (xi, r, xr, om, gv, cap) in rows {
        report.push(vec![xi.into(), r.into(), xr.into(), om.into(), gv.into(), cap.into(), (om / (gv * cap)).into()]);
    }
    report.pass_if_spread_at_most(p.constant * p.constant);
    Ok(report)
}

/// Doubling ratio `mu(B(xi,r)) / mu(B(xi,r/2))` over centers and scales.
pub fn doubling_check(g: &DomainGraph, mu: &BoundaryMeasure, centers: &[usize], scales: &[f64], constant: f64) -> EstimateReport {
    let mut report = EstimateReport::new("doubling-check", &["xi", "r", "mass", "half_mass", "ratio"], 2, "ratio");
    for &xi in centers {
        for &r in scales {
            let m = mu.ball_mass(g, xi, r);
            let half = mu.ball_mass(g, xi, r / 2.0);
            if half > 0.0 {
                report.push(vec![xi.into(), r.into(), m.into(), half.into(), (m / half).into()]);
            }
        }
    }
    report.pass_if_max_at_most(constant);
    report
}

/// Shares one interior Green function between several measure computations.
#[derive(Debug, Clone)]
pub struct MeasureSet {
    pub omega: BoundaryMeasure,
    pub profile: Option<ProfileVector>,
    pub nu: Option<BoundaryMeasure>,
}

pub fn measure_set(g: &DomainGraph, gu: &GreenFunction, x0: usize) -> Result<MeasureSet> {
    let omega = harmonic_measure_with(g, gu, x0)?;
    let (profile, nu) = if g.absorbing().is_empty() {
        (None, None)
    } else {
        let h = harmonic_profile_with(g, gu, x0)?;
        let nu = elliptic_from_profile(g, &h);
        (Some(h), Some(nu))
    };
    Ok(MeasureSet { omega, profile, nu })
}

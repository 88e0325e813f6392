//! Config-driven experiment runner.
//!
//! A config names a domain and an ordered list of checks. Each check writes
//! `<label>.csv` into the output directory; a `summary.json` collects the
//! verdicts. Quantities shared between checks (Green rows, measures, the
//! trace form) are computed once per run in a [`Workspace`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdomain::{build_domain, DomainGraph, DomainSpec, Family};
use crate::measures::{
    central_window, doubling_check, elliptic_from_hitting, elliptic_from_profile, harmonic_measure_from_green,
    harmonic_measure_with, harmonic_profile_with, hitting_columns, hmeas_estimate_check, interior_green,
    BoundaryMeasure, HmeasParams, ProfileVector,
};
use crate::montecarlo::{compare_report, sample_hitting, watched_chain, watched_generator_residual, watched_matrix, WalkConfig};
use crate::naimtrace::{
    doob_naim_verify, jump_bound_check, killing_check, naim_kernel, scale_function, scale_report, trace_form,
    JumpParams, NaimKernel, ScaleSource, ScaleTable, TraceForm,
};
use crate::potential::{capacity, cdc_check, CdcParams, GreenFunction};
use crate::report::{fmt_real, write_atomic, EstimateReport};
use crate::traceheat::{exit_time_check, shk_check, ExitParams, ShkParams, TraceHeatKernel};

pub const SUMMARY_SCHEMA: u32 = 1;

/// Names accepted in `checks[].name`, in registry order.
pub const CHECK_NAMES: &[&str] = &[
    "green",
    "capacity",
    "cdc-check",
    "harmonic-measure",
    "profile",
    "elliptic-measure",
    "doubling-check",
    "hmeas-check",
    "naim",
    "trace",
    "doob-naim-verify",
    "jump-check",
    "killing-check",
    "scale",
    "heatkernel",
    "shk-check",
    "exit-time",
    "mc-hitting",
    "mc-watched",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckEntry {
    pub name: String,
    /// Output file stem; defaults to the check name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub params: serde_json::Value,
    /// Extra pass conditions on report metrics: `name -> [lo, hi]`. A name
    /// ending in `*` matches every metric with that prefix.
    #[serde(default)]
    pub expect: BTreeMap<String, [f64; 2]>,
}

impl CheckEntry {
    pub fn new(name: &str, params: serde_json::Value) -> Self {
        Self { name: name.to_string(), label: None, params, expect: BTreeMap::new() }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn expect(mut self, metric: &str, lo: f64, hi: f64) -> Self {
        self.expect.insert(metric.to_string(), [lo, hi]);
        self
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub checks: Vec<CheckEntry>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Fallback tolerance for checks that take one and do not set it.
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn new(domain: DomainSpec, checks: Vec<CheckEntry>, output_dir: impl Into<PathBuf>) -> Self {
        Self { domain, checks, output_dir: output_dir.into(), seed: 0, tolerance: None, parallel: false }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config; a relative `graph_file` is taken relative to the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json_str(&text)?;
        if let (Some(file), Some(dir)) = (&cfg.domain.graph_file, path.parent()) {
            if Path::new(file).is_relative() {
                cfg.domain.graph_file = Some(dir.join(file).to_string_lossy().into_owned());
            }
        }
        Ok(cfg)
    }

    /// Parses every check's parameters without building anything.
    pub fn validate(&self) -> Result<Vec<PlannedCheck>> {
        positive_tolerance("tolerance", self.tolerance)?;
        let mut labels = std::collections::BTreeSet::new();
        let mut plan = Vec::with_capacity(self.checks.len());
        for entry in &self.checks {
            let label = entry.label().to_string();
            if label.is_empty() || label == "schema" || label.contains(['/', '\\']) {
                return Err(Error::Config(format!("invalid label {label:?}")));
            }
            if !labels.insert(label.clone()) {
                return Err(Error::Config(format!("duplicate label {label:?}")));
            }
            for (k, [lo, hi]) in &entry.expect {
                if !(lo <= hi) {
                    return Err(Error::Config(format!("{label}: empty expectation range for {k}")));
                }
            }
            let check = Check::parse(&entry.name, &entry.params)?;
            check.validate(self.tolerance)?;
            plan.push(PlannedCheck { label, check, expect: entry.expect.clone() });
        }
        Ok(plan)
    }
}

fn positive_tolerance(name: &str, t: Option<f64>) -> Result<()> {
    match t {
        Some(t) if !(t > 0.0 && t.is_finite()) => Err(Error::Config(format!("{name} must be positive, got {t}"))),
        _ => Ok(()),
    }
}

/// Boundary vertices to test: explicit points (snapped to the nearest
/// boundary vertex) or the central window `|p| < fraction * R`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Centers {
    Points(Vec<[f64; 2]>),
    Window {
        window: f64,
        #[serde(default = "one")]
        stride: usize,
    },
}

fn one() -> usize {
    1
}

impl Default for Centers {
    fn default() -> Self {
        Centers::Window { window: 1.0 / 3.0, stride: 1 }
    }
}

impl Centers {
    pub fn resolve(&self, g: &DomainGraph) -> Result<Vec<usize>> {
        let v = match self {
            Centers::Points(ps) => {
                let mut v: Vec<usize> = ps.iter().map(|&p| nearest_boundary(g, p)).collect::<Result<_>>()?;
                v.dedup();
                v
            }
            Centers::Window { window, stride } => {
                if !(*window > 0.0) || *stride == 0 {
                    return Err(Error::Config("window must be positive and stride at least 1".into()));
                }
                central_window(g, *window).into_iter().step_by(*stride).collect()
            }
        };
        if v.is_empty() {
            return Err(Error::Config("no boundary vertex selected".into()));
        }
        Ok(v)
    }
}

fn nearest_boundary(g: &DomainGraph, p: [f64; 2]) -> Result<usize> {
    g.boundary()
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let (pa, pb) = (g.coords(a), g.coords(b));
            let da = (pa[0] - p[0]).hypot(pa[1] - p[1]);
            let db = (pb[0] - p[0]).hypot(pb[1] - p[1]);
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .ok_or_else(|| Error::InvalidArgument("graph has no boundary".into()))
}

fn interior_at(g: &DomainGraph, p: [f64; 2]) -> Result<usize> {
    let v = g.nearest_vertex(p);
    if !g.is_interior(v) {
        return Err(Error::InvalidArgument(format!("point {p:?} is not interior")));
    }
    Ok(v)
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenParams {
    /// Targets of `g_U(x0, .)`; every interior vertex when absent.
    pub points: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityParams {
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    #[serde(default = "two")]
    pub outer_factor: f64,
    pub tolerance: Option<f64>,
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdcConfig {
    pub a0: Option<f64>,
    pub scales: Option<Vec<f64>>,
    pub constant: Option<f64>,
    pub centers: Option<Centers>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolParams {
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileParams {
    /// Comparison box `[[x_min, y_min], [x_max, y_max]]`; defaults to
    /// `|p| <= R / 4`.
    pub region: Option<[[f64; 2]; 2]>,
    /// Point where the reference is matched to `h`; defaults to `x0`.
    pub anchor: Option<[f64; 2]>,
    /// Vertices closer than this to `F` are skipped; defaults to `4h`.
    pub min_depth: Option<f64>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureChoice {
    /// `omega_{x0}` for bounded domains, `nu` otherwise.
    #[default]
    Reference,
    Harmonic,
    Elliptic,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoublingParams {
    #[serde(default)]
    pub measure: MeasureChoice,
    #[serde(default)]
    pub centers: Centers,
    pub scales: Option<Vec<f64>>,
    pub constant: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmeasConfig {
    #[serde(default)]
    pub centers: Centers,
    pub scales: Option<Vec<f64>>,
    pub a: Option<f64>,
    pub constant: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairParams {
    #[serde(default)]
    pub centers: Centers,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoobNaimParams {
    pub tolerance: Option<f64>,
    /// Second base point for the base-point covariance check.
    pub second_base_point: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    #[serde(default)]
    pub centers: Centers,
    pub min_distance: Option<f64>,
    pub fit_range: Option<[f64; 2]>,
    pub constant: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KillingParams {
    /// Defaults to every boundary vertex.
    pub centers: Option<Centers>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleParams {
    #[serde(default)]
    pub centers: Centers,
    /// First dyadic knot; defaults to twice the mesh.
    pub r0: Option<f64>,
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatParams {
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub centers: Centers,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShkConfig {
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub centers: Centers,
    /// Admissible times at `xi` are `[Psi(xi, 4h), Psi(xi, window / 4)]`;
    /// defaults to `N h / 2`.
    pub window: Option<f64>,
    pub constant: Option<f64>,
    /// Bound on the Chapman-Kolmogorov residual.
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitConfig {
    #[serde(default)]
    pub centers: Centers,
    pub radii: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McParams {
    pub n_paths: Option<usize>,
    pub max_steps: Option<usize>,
    /// Largest admissible fraction of vertices with `|z| > 3`.
    pub max_outside: Option<f64>,
    /// Start of the watched chain; nearest boundary vertex to the origin
    /// when absent.
    pub start: Option<[f64; 2]>,
    /// Bound on the watched-generator residual.
    pub tolerance: Option<f64>,
}

/// A parsed check.
#[derive(Debug, Clone)]
pub enum Check {
    Green(GreenParams),
    Capacity(CapacityParams),
    Cdc(CdcConfig),
    HarmonicMeasure(TolParams),
    Profile(ProfileParams),
    EllipticMeasure(TolParams),
    Doubling(DoublingParams),
    Hmeas(HmeasConfig),
    Naim(PairParams),
    Trace(PairParams),
    DoobNaim(DoobNaimParams),
    Jump(JumpConfig),
    Killing(KillingParams),
    Scale(ScaleParams),
    HeatKernel(HeatParams),
    Shk(ShkConfig),
    ExitTime(ExitConfig),
    McHitting(McParams),
    McWatched(McParams),
}

fn parse<T: DeserializeOwned + Default>(name: &str, v: &serde_json::Value) -> Result<T> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("{name}: {e}")))
}

impl Check {
    pub fn parse(name: &str, params: &serde_json::Value) -> Result<Self> {
        Ok(match name {
            "green" => Check::Green(parse(name, params)?),
            "capacity" => Check::Capacity(
                serde_json::from_value(params.clone()).map_err(|e| Error::Config(format!("{name}: {e}")))?,
            ),
            "cdc-check" => Check::Cdc(parse(name, params)?),
            "harmonic-measure" => Check::HarmonicMeasure(parse(name, params)?),
            "profile" => Check::Profile(parse(name, params)?),
            "elliptic-measure" => Check::EllipticMeasure(parse(name, params)?),
            "doubling-check" => Check::Doubling(parse(name, params)?),
            "hmeas-check" => Check::Hmeas(parse(name, params)?),
            "naim" => Check::Naim(parse(name, params)?),
            "trace" => Check::Trace(parse(name, params)?),
            "doob-naim-verify" => Check::DoobNaim(parse(name, params)?),
            "jump-check" => Check::Jump(parse(name, params)?),
            "killing-check" => Check::Killing(parse(name, params)?),
            "scale" => Check::Scale(parse(name, params)?),
            "heatkernel" => Check::HeatKernel(parse(name, params)?),
            "shk-check" => Check::Shk(parse(name, params)?),
            "exit-time" => Check::ExitTime(parse(name, params)?),
            "mc-hitting" => Check::McHitting(parse(name, params)?),
            "mc-watched" => Check::McWatched(parse(name, params)?),
            other => {
                return Err(Error::Config(format!("unknown check {other:?}; known: {}", CHECK_NAMES.join(", "))))
            }
        })
    }

    fn validate(&self, fallback: Option<f64>) -> Result<()> {
        let tols: Vec<Option<f64>> = match self {
            Check::Capacity(p) => vec![p.tolerance],
            Check::HarmonicMeasure(p) | Check::EllipticMeasure(p) => vec![p.tolerance],
            Check::Profile(p) => vec![p.tolerance],
            Check::Naim(p) | Check::Trace(p) => vec![p.tolerance],
            Check::DoobNaim(p) => vec![p.tolerance],
            Check::Killing(p) => vec![p.tolerance],
            Check::HeatKernel(p) => vec![p.tolerance],
            Check::Shk(p) => vec![p.tolerance, p.constant],
            Check::McHitting(p) | Check::McWatched(p) => vec![p.tolerance, p.max_outside],
            Check::Cdc(p) => vec![p.constant],
            Check::Doubling(p) => vec![p.constant],
            Check::Hmeas(p) => vec![p.constant, p.a],
            Check::Jump(p) => vec![p.constant],
            _ => vec![],
        };
        for t in tols {
            positive_tolerance("tolerance", t)?;
        }
        positive_tolerance("tolerance", fallback)?;
        let positive_list = |name: &str, v: &Option<Vec<f64>>| -> Result<()> {
            match v {
                Some(v) if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) => {
                    Err(Error::Config(format!("{name} must be a non-empty list of positive reals")))
                }
                _ => Ok(()),
            }
        };
        match self {
            Check::Capacity(p) => positive_list("radii", &Some(p.radii.clone()))?,
            Check::Cdc(p) => positive_list("scales", &p.scales)?,
            Check::Doubling(p) => positive_list("scales", &p.scales)?,
            Check::Hmeas(p) => positive_list("scales", &p.scales)?,
            Check::HeatKernel(p) => positive_list("times", &p.times)?,
            Check::Shk(p) => positive_list("times", &p.times)?,
            Check::ExitTime(p) => positive_list("radii", &p.radii)?,
            Check::McHitting(p) | Check::McWatched(p) if p.n_paths == Some(0) => {
                return Err(Error::Config("n_paths must be at least 1".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlannedCheck {
    pub label: String,
    pub check: Check,
    pub expect: BTreeMap<String, [f64; 2]>,
}

/// Lazily computed value shared between checks; the lock is held while the
/// value is computed so concurrent checks wait instead of recomputing.
struct Lazy<T> {
    slot: Mutex<Option<Arc<T>>>,
}

impl<T> Lazy<T> {
    fn new() -> Self {
        Self { slot: Mutex::new(None) }
    }

    fn get(&self, f: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
        let mut slot = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(v) = slot.as_ref() {
            return Ok(v.clone());
        }
        let v = Arc::new(f()?);
        *slot = Some(v.clone());
        Ok(v)
    }
}

/// Domain plus the shared quantities of one run.
pub struct Workspace {
    pub spec: DomainSpec,
    pub graph: DomainGraph,
    pub x0: usize,
    pub seed: u64,
    pub tolerance: Option<f64>,
    gu: Lazy<GreenFunction>,
    omega: Lazy<BoundaryMeasure>,
    profile: Lazy<ProfileVector>,
    reference: Lazy<BoundaryMeasure>,
    trace: Lazy<TraceForm>,
    naim: Lazy<NaimKernel>,
}

impl Workspace {
    pub fn new(spec: &DomainSpec, seed: u64) -> Result<Self> {
        let graph = build_domain(spec)?;
        Self::from_graph(spec.clone(), graph, seed)
    }

    /// Uses `spec.base_point` to locate `x0` when the graph carries none.
    pub fn from_graph(spec: DomainSpec, graph: DomainGraph, seed: u64) -> Result<Self> {
        let x0 = match graph.base_vertex() {
            Some(v) => v,
            None => interior_at(&graph, spec.base_point)?,
        };
        Ok(Self {
            spec,
            graph,
            x0,
            seed,
            tolerance: None,
            gu: Lazy::new(),
            omega: Lazy::new(),
            profile: Lazy::new(),
            reference: Lazy::new(),
            trace: Lazy::new(),
            naim: Lazy::new(),
        })
    }

    pub fn green(&self) -> Result<Arc<GreenFunction>> {
        self.gu.get(|| interior_green(&self.graph))
    }

    pub fn omega(&self) -> Result<Arc<BoundaryMeasure>> {
        self.omega.get(|| harmonic_measure_with(&self.graph, &*self.green()?, self.x0))
    }

    pub fn profile(&self) -> Result<Arc<ProfileVector>> {
        self.profile.get(|| {
            if self.graph.absorbing().is_empty() {
                return Err(Error::InvalidArgument("the harmonic profile needs an absorbing ring".into()));
            }
            harmonic_profile_with(&self.graph, &*self.green()?, self.x0)
        })
    }

    pub fn elliptic(&self) -> Result<BoundaryMeasure> {
        Ok(elliptic_from_profile(&self.graph, &*self.profile()?))
    }

    /// `omega_{x0}` when nothing escapes, `nu` otherwise.
    pub fn reference(&self) -> Result<Arc<BoundaryMeasure>> {
        self.reference.get(|| {
            if self.graph.absorbing().is_empty() {
                Ok((*self.omega()?).clone())
            } else {
                self.elliptic()
            }
        })
    }

    pub fn trace(&self) -> Result<Arc<TraceForm>> {
        self.trace.get(|| trace_form(&self.graph, &*self.reference()?))
    }

    pub fn naim(&self) -> Result<Arc<NaimKernel>> {
        self.naim.get(|| naim_kernel(&self.graph, &*self.green()?, self.x0))
    }

    pub fn scale_table(&self, centers: &[usize], r0: Option<f64>, r_max: Option<f64>) -> Result<ScaleTable> {
        let r0 = r0.unwrap_or(2.0 * self.graph.mesh());
        let r_max = r_max.unwrap_or(f64::INFINITY);
        if self.graph.absorbing().is_empty() {
            let gu = self.green()?;
            scale_function(&self.graph, &ScaleSource::Green(&gu, self.x0), centers, r0, r_max)
        } else {
            let h = self.profile()?;
            scale_function(&self.graph, &ScaleSource::Profile(&h), centers, r0, r_max)
        }
    }

    /// `N h`; for graphs read from file, the bounding box side.
    pub fn extent(&self) -> f64 {
        if self.spec.family == Family::Custom {
            self.graph.diameter() / std::f64::consts::SQRT_2
        } else {
            self.spec.side as f64 * self.graph.mesh()
        }
    }

    /// Dyadic radii `4h, 8h, ...` up to `N h / 8`.
    pub fn default_scales(&self) -> Vec<f64> {
        let h = self.graph.mesh();
        let top = self.extent() / 8.0;
        let mut v = Vec::new();
        let mut r = 4.0 * h;
        while r <= top + 1e-12 {
            v.push(r);
            r *= 2.0;
        }
        if v.is_empty() {
            v.push(2.0 * h);
        }
        v
    }

    fn tol(&self, explicit: Option<f64>, default: f64) -> f64 {
        explicit.or(self.tolerance).unwrap_or(default)
    }
}

/// Closed-form profile of the continuum domain, up to normalization.
fn profile_reference(ws: &Workspace, p: [f64; 2]) -> Option<f64> {
    let [x, y] = p;
    match ws.graph.family() {
        Family::HalfPlane => Some(y.powf(ws.spec.alpha)),
        Family::Quadrant => Some(x * y),
        Family::ParabolaExterior => Some((2.0 * ((x * x + (0.25 - y).powi(2)).sqrt() + 0.25 - y)).sqrt() - 1.0),
        Family::SlitPlane => Some(((x.hypot(y) + x) / 2.0).max(0.0).sqrt()),
        Family::DiskExterior => {
            let rho = ws.spec.obstacle_radius.or(ws.spec.truncation_radius.map(|r| r / 16.0))?;
            Some((x.hypot(y) / rho).ln())
        }
        _ => None,
    }
}

fn coords_row(g: &DomainGraph, v: usize) -> [crate::report::Value; 3] {
    let p = g.coords(v);
    [v.into(), p[0].into(), p[1].into()]
}

pub fn run_check(ws: &Workspace, check: &Check) -> Result<EstimateReport> {
    let g = &ws.graph;
    let x0 = ws.x0;
    match check {
        Check::Green(p) => {
            let gu = ws.green()?;
            let row = gu.row(x0)?;
            let targets: Vec<usize> = match &p.points {
                Some(ps) => ps.iter().map(|&q| interior_at(g, q)).collect::<Result<_>>()?,
                None => gu.domain().to_vec(),
            };
            let mut report = EstimateReport::new("green", &["vertex", "x", "y", "green"], 1, "green");
            for &v in &targets {
                let [a, b, c] = coords_row(g, v);
                report.push(vec![a, b, c, row[gu.local(v).expect("interior")].into()]);
            }
            report.finalize();
            report.pass = report.min_ratio > 0.0;
            Ok(report)
        }
        Check::Capacity(p) => {
            let tol = ws.tol(p.tolerance, 1e-8);
            let c = g.nearest_vertex(p.center);
            let mut report = EstimateReport::new(
                "capacity",
                &["r", "capacity", "inner_mass", "outer_mass", "balance"],
                1,
                "balance",
            );
            for &r in &p.radii {
                let eq = capacity(g, &g.ball(c, r), &g.ball(c, p.outer_factor * r))?;
                let (inner, outer) = (eq.inner_mass(), eq.outer_mass());
                report.push(vec![r.into(), eq.capacity.into(), inner.into(), outer.into(), (inner / eq.capacity).into()]);
            }
            report.pass_if_within(1.0 - tol, 1.0 + tol);
            Ok(report)
        }
        Check::Cdc(p) => {
            let centers = match &p.centers {
                Some(c) => Some(c.resolve(g)?),
                None => None,
            };
            cdc_check(
                g,
                &CdcParams {
                    a0: p.a0.unwrap_or(4.0),
                    scales: p.scales.clone().unwrap_or_else(|| ws.default_scales()),
                    constant: p.constant.unwrap_or(10.0),
                    centers,
                },
            )
        }
        Check::HarmonicMeasure(p) => {
            let tol = ws.tol(p.tolerance, 1e-10);
            let gu = ws.green()?;
            let hit = ws.omega()?;
            let flux = harmonic_measure_from_green(g, &gu, x0)?;
            let mut report = EstimateReport::new(
                "harmonic-measure",
                &["vertex", "x", "y", "omega", "green_flux", "deviation"],
                1,
                "deviation",
            );
            for (k, &v) in g.boundary().iter().enumerate() {
                let [a, b, c] = coords_row(g, v);
                let d = (hit.values[k] - flux.values[k]).abs();
                report.push(vec![a, b, c, hit.values[k].into(), flux.values[k].into(), d.into()]);
            }
            report.metric("total_mass", hit.total());
            report.pass_if_max_at_most(tol);
            Ok(report)
        }
        Check::Profile(p) => {
            let tol = ws.tol(p.tolerance, 0.05);
            let h = ws.profile()?;
            let r = g.truncation_radius().unwrap_or_else(|| g.diameter());
            let inside = |q: [f64; 2]| match p.region {
                Some([lo, hi]) => q[0] >= lo[0] && q[1] >= lo[1] && q[0] <= hi[0] && q[1] <= hi[1],
                None => q[0].hypot(q[1]) <= r / 4.0,
            };
            let anchor = match p.anchor {
                Some(q) => interior_at(g, q)?,
                None => x0,
            };
            let norm = profile_reference(ws, g.coords(anchor)).map(|r| r / h.at(anchor));
            let mut report = EstimateReport::new("profile", &["vertex", "x", "y", "h", "reference", "ratio"], 1, "ratio");
            let min_depth = p.min_depth.unwrap_or(4.0 * g.mesh());
            for &v in g.interior() {
                let q = g.coords(v);
                if !inside(q) || g.depths()[v] < min_depth {
                    continue;
                }
                let reference = match norm {
                    Some(n) => profile_reference(ws, q).map(|x| x / n).unwrap_or(f64::NAN),
                    None => f64::NAN,
                };
                let [a, b, c] = coords_row(g, v);
                report.push(vec![a, b, c, h.at(v).into(), reference.into(), (h.at(v) / reference).into()]);
            }
            report.metric("escape_probability", h.escape_probability);
            report.metric("residual", h.residual);
            if norm.is_some() {
                report.pass_if_within(1.0 - tol, 1.0 + tol);
            } else {
                report.warn("no closed-form profile for this family");
                report.finalize();
                report.pass = h.residual <= 1e-8;
            }
            Ok(report)
        }
        Check::EllipticMeasure(p) => {
            let tol = ws.tol(p.tolerance, 1e-10);
            let gu = ws.green()?;
            let h = ws.profile()?;
            let nu = elliptic_from_profile(g, &h);
            let cols = hitting_columns(g, &gu)?;
            let alt = elliptic_from_hitting(g, &gu, &cols, &h);
            let scale = nu.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let mut report = EstimateReport::new(
                "elliptic-measure",
                &["vertex", "x", "y", "nu", "nu_hitting", "deviation"],
                1,
                "deviation",
            );
            for (k, &v) in g.boundary().iter().enumerate() {
                let [a, b, c] = coords_row(g, v);
                let d = (nu.values[k] - alt.values[k]).abs() / scale;
                report.push(vec![a, b, c, nu.values[k].into(), alt.values[k].into(), d.into()]);
            }
            report.metric("total_mass", nu.total());
            report.pass_if_max_at_most(tol);
            Ok(report)
        }
        Check::Doubling(p) => {
            let mu = match p.measure {
                MeasureChoice::Reference => (*ws.reference()?).clone(),
                MeasureChoice::Harmonic => (*ws.omega()?).clone(),
                MeasureChoice::Elliptic => ws.elliptic()?,
            };
            let centers = p.centers.resolve(g)?;
            let scales = p.scales.clone().unwrap_or_else(|| ws.default_scales());
            Ok(doubling_check(g, &mu, &centers, &scales, p.constant.unwrap_or(16.0)))
        }
        Check::Hmeas(p) => {
            let gu = ws.green()?;
            let params = HmeasParams {
                scales: p.scales.clone().unwrap_or_else(|| ws.default_scales()),
                a: p.a.unwrap_or(2.0),
                constant: p.constant.unwrap_or(10.0),
                centers: p.centers.resolve(g)?,
            };
            hmeas_estimate_check(g, &gu, x0, &params)
        }
        Check::Naim(p) => {
            let tol = ws.tol(p.tolerance, 1e-9);
            let nk = ws.naim()?;
            let centers = p.centers.resolve(g)?;
            let mut report = EstimateReport::new("naim", &["xi", "eta", "theta", "omega_xi", "omega_eta"], 2, "theta");
            let mut asym: f64 = 0.0;
            for &xi in &centers {
                let i = g.boundary_slot(xi).expect("boundary");
                for &eta in &centers {
                    let j = g.boundary_slot(eta).expect("boundary");
                    if i == j {
                        continue;
                    }
                    let t = nk.theta[(i, j)];
                    asym = asym.max((t - nk.theta[(j, i)]).abs() / t.abs().max(f64::MIN_POSITIVE));
                    report.push(vec![xi.into(), eta.into(), t.into(), nk.omega[i].into(), nk.omega[j].into()]);
                }
            }
            report.metric("asymmetry", asym);
            report.finalize();
            report.pass = !report.rows.is_empty() && report.min_ratio > 0.0 && asym <= tol;
            Ok(report)
        }
        Check::Trace(p) => {
            let tol = ws.tol(p.tolerance, 1e-9);
            let tf = ws.trace()?;
            let centers = p.centers.resolve(g)?;
            let mut report = EstimateReport::new("trace", &["xi", "eta", "c_hat", "J_mu"], 2, "c_hat");
            for &xi in &centers {
                let i = g.boundary_slot(xi).expect("boundary");
                for &eta in &centers {
                    let j = g.boundary_slot(eta).expect("boundary");
                    if i != j {
                        report.push(vec![xi.into(), eta.into(), tf.c_hat[(i, j)].into(), tf.j_mu[(i, j)].into()]);
                    }
                }
            }
            let n = tf.s.nrows();
            let scale = tf.s.amax();
            let mut min_off = f64::INFINITY;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        min_off = min_off.min(tf.c_hat[(i, j)] / scale);
                    }
                }
            }
            let kmax = tf.kappa.iter().fold(0.0f64, |m, k| m.max(k.abs()));
            let kmin = tf.kappa.iter().fold(f64::INFINITY, |m, &k| m.min(k / scale));
            report.metric("min_offdiagonal", min_off);
            report.metric("max_killing", kmax);
            report.metric("min_killing", kmin);
            report.finalize();
            report.pass = min_off >= -tol && kmin >= -tol;
            Ok(report)
        }
        Check::DoobNaim(p) => {
            let tol = ws.tol(p.tolerance, 1e-9);
            let s = crate::naimtrace::trace_schur(g, Default::default())?;
            let omega = ws.omega()?;
            let tf = crate::naimtrace::trace_form_from_schur(s, &omega)?;
            let nk = ws.naim()?;
            let other = match p.second_base_point {
                Some(q) => Some(naim_kernel(g, &*ws.green()?, interior_at(g, q)?)?),
                None => None,
            };
            Ok(doob_naim_verify(g, &tf, &nk, other.as_ref(), tol))
        }
        Check::Jump(p) => {
            let centers = p.centers.resolve(g)?;
            let h = g.mesh();
            let table = ws.scale_table(&centers, None, None)?;
            let mu = ws.reference()?;
            let params = JumpParams {
                centers,
                min_distance: p.min_distance.unwrap_or(2.0 * h),
                fit_range: p
                    .fit_range
                    .map(|r| (r[0], r[1]))
                    .unwrap_or((4.0 * h, ws.extent() / 8.0)),
                constant: p.constant.unwrap_or(10.0),
            };
            Ok(jump_bound_check(g, &*ws.trace()?, &*ws.naim()?, &mu, &table, &params))
        }
        Check::Killing(p) => {
            let window = match &p.centers {
                Some(c) => c.resolve(g)?,
                None => g.boundary().to_vec(),
            };
            let tf = ws.trace()?;
            if g.absorbing().is_empty() {
                Ok(killing_check(g, &tf, None, &window, ws.tol(p.tolerance, 1e-10)))
            } else {
                let h = ws.profile()?;
                let nu = ws.reference()?;
                Ok(killing_check(g, &tf, Some((&nu, &h)), &window, ws.tol(p.tolerance, 0.1)))
            }
        }
        Check::Scale(p) => {
            let centers = p.centers.resolve(g)?;
            let table = ws.scale_table(&centers, p.r0, p.r_max)?;
            Ok(scale_report(g, &table, &*ws.reference()?))
        }
        Check::HeatKernel(p) => {
            let tol = ws.tol(p.tolerance, 1e-8);
            let centers = p.centers.resolve(g)?;
            let times = match &p.times {
                Some(t) => t.clone(),
                None => default_times(ws, &centers, None)?,
            };
            let hk = TraceHeatKernel::new(&*ws.trace()?)?;
            let mut report = EstimateReport::new("heatkernel", &["t", "xi", "eta", "density"], 3, "density");
            let mut ck: f64 = 0.0;
            let mut mass: f64 = 0.0;
            for (k, &t) in times.iter().enumerate() {
                let slice = hk.slice(t)?;
                for &xi in &centers {
                    let i = g.boundary_slot(xi).expect("boundary");
                    for &eta in &centers {
                        let j = g.boundary_slot(eta).expect("boundary");
                        report.push(vec![t.into(), xi.into(), eta.into(), slice.density[(i, j)].into()]);
                    }
                }
                if k > 0 && t > times[k - 1] {
                    ck = ck.max(hk.chapman_kolmogorov_residual(times[k - 1], t - times[k - 1])?);
                }
                mass = mass.max(hk.total_mass(t)?.into_iter().fold(0.0, f64::max));
            }
            report.metric("chapman_kolmogorov_residual", ck);
            report.metric("max_total_mass", mass);
            report.finalize();
            report.pass = report.min_ratio >= 0.0 && ck <= tol && mass <= 1.0 + tol;
            Ok(report)
        }
        Check::Shk(p) => {
            let tol = ws.tol(p.tolerance, 1e-8);
            let centers = p.centers.resolve(g)?;
            let window = p.window.unwrap_or(ws.extent() / 2.0);
            let table = ws.scale_table(&centers, None, None)?;
            let times = match &p.times {
                Some(t) => t.clone(),
                None => default_times(ws, &centers, Some((&table, window)))?,
            };
            let params = ShkParams { times, centers, window, constant: p.constant.unwrap_or(50.0) };
            let mut report = shk_check(g, &*ws.trace()?, &*ws.reference()?, &table, &params)?;
            report.pass &= report.metrics["chapman_kolmogorov_residual"] <= tol;
            Ok(report)
        }
        Check::ExitTime(p) => {
            let centers = p.centers.resolve(g)?;
            let table = ws.scale_table(&centers, None, None)?;
            let radii = p.radii.clone().unwrap_or_else(|| ws.default_scales());
            exit_time_check(g, &*ws.trace()?, &table, &ExitParams { centers, radii })
        }
        Check::McHitting(p) => {
            let cfg = walk_config(ws, p);
            let emp = sample_hitting(g, x0, &cfg)?;
            let omega = ws.omega()?;
            let mut report = compare_report("mc-hitting", g, &emp, &omega.values, p.max_outside.unwrap_or(0.02));
            report.metric("n_paths", cfg.n_paths as f64);
            Ok(report)
        }
        Check::McWatched(p) => {
            let tol = ws.tol(p.tolerance, 1e-9);
            let cfg = walk_config(ws, p);
            let start = nearest_boundary(g, p.start.unwrap_or([0.0, 0.0]))?;
            let gu = ws.green()?;
            let ph = watched_matrix(g, &gu)?;
            let s = crate::naimtrace::trace_schur(g, Default::default())?;
            let residual = watched_generator_residual(g, &ph, &s);
            let emp = watched_chain(g, start, &cfg)?;
            let i = g.boundary_slot(start).expect("boundary");
            let exact: Vec<f64> = ph.row(i).iter().copied().collect();
            let mut report = compare_report("mc-watched", g, &emp, &exact, p.max_outside.unwrap_or(0.02));
            report.metric("generator_residual", residual);
            report.metric("n_paths", cfg.n_paths as f64);
            report.pass &= residual <= tol;
            Ok(report)
        }
    }
}

fn walk_config(ws: &Workspace, p: &McParams) -> WalkConfig {
    WalkConfig { seed: ws.seed, n_paths: p.n_paths.unwrap_or(100_000), max_steps: p.max_steps.unwrap_or(10_000_000) }
}

/// Times `Psi(xi, 4h) 1.5^k` at the middle center, up to `Psi(xi, window/4)`
/// (or twelve steps when no window applies).
fn default_times(ws: &Workspace, centers: &[usize], table: Option<(&ScaleTable, f64)>) -> Result<Vec<f64>> {
    let mid = centers[centers.len() / 2];
    let own;
    let (table, window) = match table {
        Some((t, w)) => (t, Some(w)),
        None => {
            own = ws.scale_table(&[mid], None, None)?;
            (&own, None)
        }
    };
    let e = table.get(mid).ok_or_else(|| Error::InvalidArgument(format!("no scale entry at {mid}")))?;
    let lo = e.psi(4.0 * ws.graph.mesh());
    let hi = window.map(|w| e.psi(w / 4.0));
    let mut times = Vec::new();
    let mut t = lo;
    for _ in 0..12 {
        if hi.is_some_and(|hi| t > hi) {
            break;
        }
        times.push(t);
        t *= 1.5;
    }
    Ok(times)
}

/// Applies `expect` ranges to the report metrics.
pub fn apply_expectations(report: &mut EstimateReport, expect: &BTreeMap<String, [f64; 2]>) {
    for (key, &[lo, hi]) in expect {
        let matched: Vec<(String, f64)> = match key.strip_suffix('*') {
            Some(prefix) => report
                .metrics
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            None => report.metrics.get(key).map(|v| vec![(key.clone(), *v)]).unwrap_or_default(),
        };
        if matched.is_empty() {
            report.warn(format!("expected metric {key} was not produced"));
            report.pass = false;
        }
        for (k, v) in matched {
            if !(v >= lo && v <= hi) {
                report.warn(format!("{k} = {} outside [{}, {}]", fmt_real(v), fmt_real(lo), fmt_real(hi)));
                report.pass = false;
            }
        }
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<(String, EstimateReport)>,
    pub summary_path: PathBuf,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|(_, r)| r.pass)
    }

    /// 0 when every check passes, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            2
        }
    }
}

/// Summary document: `{"schema": 1, "<label>": {check, pass, min_ratio,
/// max_ratio, rows, metrics, warnings}}`.
pub fn summary_json(reports: &[(String, EstimateReport)]) -> String {
    let mut map = serde_json::Map::new();
    map.insert("schema".into(), SUMMARY_SCHEMA.into());
    for (label, r) in reports {
        let mut v = serde_json::to_value(r.summary()).expect("summary serializes");
        v["check"] = r.check.clone().into();
        map.insert(label.clone(), v);
    }
    let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("summary serializes");
    s.push('\n');
    s
}

/// Runs a validated config against a prepared workspace.
pub fn run_in(ws: &Workspace, plan: &[PlannedCheck], output_dir: &Path, parallel: bool) -> Result<RunOutcome> {
    std::fs::create_dir_all(output_dir)?;
    let one = |pc: &PlannedCheck| -> Result<(String, EstimateReport)> {
        let start = Instant::now();
        let mut report = run_check(ws, &pc.check)?;
        apply_expectations(&mut report, &pc.expect);
        report.runtime_seconds = start.elapsed().as_secs_f64();
        report.write_csv(&output_dir.join(format!("{}.csv", pc.label)))?;
        log::info!(
            "{}: {} ({} rows, {:.2} s)",
            pc.label,
            if report.pass { "pass" } else { "FAIL" },
            report.rows.len(),
            report.runtime_seconds
        );
        Ok((pc.label.clone(), report))
    };
    let results: Vec<Result<(String, EstimateReport)>> =
        if parallel { plan.par_iter().map(one).collect() } else { plan.iter().map(one).collect() };
    let reports = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary_path = output_dir.join("summary.json");
    write_atomic(&summary_path, summary_json(&reports).as_bytes())?;
    Ok(RunOutcome { reports, summary_path })
}

/// Validates, builds the domain and runs every check in order.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let plan = config.validate()?;
    let mut ws = Workspace::new(&config.domain, config.seed)?;
    ws.tolerance = config.tolerance;
    run_in(&ws, &plan, &config.output_dir, config.parallel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn rect() -> DomainSpec {
        DomainSpec::new(Family::Rectangle, 8, [4.0, 4.0])
    }

    #[test]
    fn unknown_check_is_rejected() {
        let cfg = ExperimentConfig::new(rect(), vec![CheckEntry::new("no-such-check", json!({}))], "unused");
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_tolerance_is_rejected() {
        let cfg = ExperimentConfig::new(rect(), vec![CheckEntry::new("doob-naim-verify", json!({"tolerance": 0.0}))], "x");
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(rect(), vec![CheckEntry::new("trace", json!({}))], "x");
        cfg.tolerance = Some(-1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let cfg = ExperimentConfig::new(rect(), vec![CheckEntry::new("scale", json!({"radius": 3}))], "x");
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let c = CheckEntry::new("trace", serde_json::Value::Null);
        let cfg = ExperimentConfig::new(rect(), vec![c.clone(), c], "x");
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn centers_parse_both_forms() {
        let a: Centers = serde_json::from_value(json!([[0.0, 0.0], [1.0, 0.0]])).unwrap();
        assert!(matches!(a, Centers::Points(ref v) if v.len() == 2));
        let b: Centers = serde_json::from_value(json!({"window": 0.5})).unwrap();
        assert!(matches!(b, Centers::Window { stride: 1, .. }));
    }

    #[test]
    fn expectations_gate_the_verdict() {
        let mut r = EstimateReport::new("t", &["k", "v"], 1, "v");
        r.push(vec![0usize.into(), 1.0.into()]);
        r.metric("slope_a", -2.0);
        r.metric("slope_b", -1.0);
        r.pass_if_max_at_most(2.0);
        let mut ok = BTreeMap::new();
        ok.insert("slope_*".to_string(), [-2.5, -0.5]);
        apply_expectations(&mut r, &ok);
        assert!(r.pass);
        let mut bad = BTreeMap::new();
        bad.insert("slope_a".to_string(), [-1.5, -0.5]);
        apply_expectations(&mut r, &bad);
        assert!(!r.pass);
    }
}

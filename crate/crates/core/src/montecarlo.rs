//! Random-walk estimates of hitting distributions and of the walk watched on
//! the boundary.
//!
//! Path `k` draws from its own ChaCha8 stream (`set_stream(k)` on a generator
//! seeded from the config), so results do not depend on thread scheduling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdomain::DomainGraph;
use crate::potential::GreenFunction;
use crate::report::EstimateReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub seed: u64,
    pub n_paths: usize,
    pub max_steps: usize,
}

impl WalkConfig {
    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        Ok(())
    }
}

/// Discrete-time walk with `p(x, y) = c_xy / sum_z c_xz`.
struct Walker<'g> {
    g: &'g DomainGraph,
    steps: Vec<Option<WeightedIndex<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Boundary(usize),
    Escaped,
    TimedOut,
}

impl<'g> Walker<'g> {
    fn new(g: &'g DomainGraph) -> Self {
        let steps = (0..g.vertex_count())
            .map(|v| {
                let w: Vec<f64> = g.neighbors(v).iter().map(|p| p.1).collect();
                WeightedIndex::new(w).ok()
            })
            .collect();
        Self { g, steps }
    }

    fn step(&self, v: usize, rng: &mut ChaCha8Rng) -> usize {
        let k = self.steps[v].as_ref().expect("vertex with edges").sample(rng);
        self.g.neighbors(v)[k].0
    }

    /// Walks from `v` until the next visit to `F`; the first move is always
    /// taken, so a start on `F` yields the next boundary visit.
    fn run(&self, mut v: usize, max_steps: usize, rng: &mut ChaCha8Rng) -> Outcome {
        for _ in 0..max_steps {
            v = self.step(v, rng);
            if self.g.is_boundary(v) {
                return Outcome::Boundary(v);
            }
            if self.g.is_absorbing(v) {
                return Outcome::Escaped;
            }
        }
        Outcome::TimedOut
    }
}

/// Empirical distribution over `F` in boundary order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub counts: Vec<u64>,
    pub escaped: u64,
    pub timed_out: u64,
    pub n_paths: usize,
}

impl EmpiricalMeasure {
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n_paths as f64).collect()
    }

    /// Binomial standard errors `sqrt(p (1 - p) / n)` for given probabilities.
    pub fn standard_errors(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|&q| (q * (1.0 - q) / self.n_paths as f64).max(0.0).sqrt()).collect()
    }
}

fn simulate(g: &DomainGraph, start: usize, cfg: &WalkConfig) -> EmpiricalMeasure {
    let walker = Walker::new(g);
    let outcomes: Vec<Outcome> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            walker.run(start, cfg.max_steps, &mut rng)
        })
        .collect();
    let mut m = EmpiricalMeasure { counts: vec![0; g.boundary().len()], escaped: 0, timed_out: 0, n_paths: cfg.n_paths };
    for o in outcomes {
        match o {
            Outcome::Boundary(v) => m.counts[g.boundary_slot(v).expect("boundary")] += 1,
            Outcome::Escaped => m.escaped += 1,
            Outcome::TimedOut => m.timed_out += 1,
        }
    }
    m
}

/// First-hit distribution of `F` from the interior vertex `x0`.
pub fn sample_hitting(g: &DomainGraph, x0: usize, cfg: &WalkConfig) -> Result<EmpiricalMeasure> {
    cfg.validate()?;
    if !g.is_interior(x0) {
        return Err(Error::InvalidArgument(format!("vertex {x0} is not interior")));
    }
    Ok(simulate(g, x0, cfg))
}

/// Next boundary visit of the walk started on `F`.
pub fn watched_chain(g: &DomainGraph, start: usize, cfg: &WalkConfig) -> Result<EmpiricalMeasure> {
    cfg.validate()?;
    if !g.is_boundary(start) {
        return Err(Error::InvalidArgument(format!("vertex {start} is not a boundary vertex")));
    }
    Ok(simulate(g, start, cfg))
}

/// Exact one-step matrix of the watched chain,
/// `P_FF + P_FU (I - P_UU)^{-1} P_UF`, in boundary order. Built from
/// transition probabilities; `(I - P_UU)^{-1} P_UF` is obtained by solving
/// `D_U (I - P_UU) X = D_U P_UF` with the interior Green solver.
pub fn watched_matrix(g: &DomainGraph, gu: &GreenFunction) -> Result<nalgebra::DMatrix<f64>> {
    let f = g.boundary();
    let nf = f.len();
    let nu = gu.domain().len();
    let deg: Vec<f64> = (0..g.vertex_count()).map(|v| g.total_conductance(v)).collect();
    // Columns X_eta, one per boundary target.
    let cols: Vec<Vec<f64>> = f
        .par_iter()
        .map(|&eta| {
            let mut rhs = vec![0.0; nu];
            for (k, &x) in gu.domain().iter().enumerate() {
                let p = g.conductance(x, eta) / deg[x];
                rhs[k] = deg[x] * p;
            }
            gu.solve(&rhs)
        })
        .collect::<Result<_>>()?;
    let mut ph = nalgebra::DMatrix::zeros(nf, nf);
    for (i, &xi) in f.iter().enumerate() {
        for &(y, c) in g.neighbors(xi) {
            let p = c / deg[xi];
            if let Some(j) = g.boundary_slot(y) {
                ph[(i, j)] += p;
            } else if let Some(k) = gu.local(y) {
                for j in 0..nf {
                    ph[(i, j)] += p * cols[j][k];
                }
            }
        }
    }
    Ok(ph)
}

/// Largest entry of `|D (I - P_hat) - S|`, relative to the largest entry of
/// `S`, with `D` the total conductance on `F`.
pub fn watched_generator_residual(g: &DomainGraph, ph: &nalgebra::DMatrix<f64>, s: &nalgebra::DMatrix<f64>) -> f64 {
    let f = g.boundary();
    let mut worst: f64 = 0.0;
    for i in 0..f.len() {
        let d = g.total_conductance(f[i]);
        for j in 0..f.len() {
            let id = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((d * (id - ph[(i, j)]) - s[(i, j)]).abs());
        }
    }
    worst / s.amax()
}

/// Empirical against exact probabilities: columns `vertex, empirical, exact,
/// stderr, z`; the ratio column is `|z|`, and the report passes when at most
/// `max_outside` of the vertices have `|z| > 3`.
pub fn compare_report(name: &str, g: &DomainGraph, emp: &EmpiricalMeasure, exact: &[f64], max_outside: f64) -> EstimateReport {
    let mut report = EstimateReport::new(name, &["vertex", "empirical", "exact", "stderr", "z"], 1, "z");
    let freq = emp.frequencies();
    let se = emp.standard_errors(exact);
    let mut outside = 0usize;
    for (k, &v) in g.boundary().iter().enumerate() {
        let z = if se[k] > 0.0 { (freq[k] - exact[k]) / se[k] } else if freq[k] == exact[k] { 0.0 } else { f64::INFINITY };
        if z.abs() > 3.0 {
            outside += 1;
        }
        report.push(vec![v.into(), freq[k].into(), exact[k].into(), se[k].into(), z.into()]);
    }
    let frac = outside as f64 / g.boundary().len() as f64;
    report.metric("fraction_outside_3sigma", frac);
    report.metric("escaped", emp.escaped as f64);
    report.metric("timed_out", emp.timed_out as f64);
    if emp.timed_out > 0 {
        report.warn(format!("{} paths exceeded max_steps", emp.timed_out));
    }
    report.finalize();
    report.pass = frac <= max_outside;
    report
}

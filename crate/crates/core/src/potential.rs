//! Green functions, capacities and equilibrium measures of killed walks.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphdomain::DomainGraph;
use crate::report::EstimateReport;
use crate::solvers::{SolverOptions, SpdSolver};

/// Green function `g_D = L_DD^{-1}` of the walk killed on leaving `D`.
///
/// Rows are solved on first use and cached; the cache is shared between
/// threads.
#[derive(Debug)]
pub struct GreenFunction {
    domain: Vec<usize>,
    local: HashMap<usize, usize>,
    solver: SpdSolver,
    rows: RwLock<HashMap<usize, Arc<Vec<f64>>>>,
}

/// Green function of `g` on the vertex set `set`.
pub fn green(g: &DomainGraph, set: &[usize]) -> Result<GreenFunction> {
    green_with(g, set, SolverOptions::default())
}

pub fn green_with(g: &DomainGraph, set: &[usize], opts: SolverOptions) -> Result<GreenFunction> {
    let local = check_transient(g, set)?;
    let solver = SpdSolver::new(g.killed_generator(set), opts)?;
    Ok(GreenFunction { domain: set.to_vec(), local, solver, rows: RwLock::new(HashMap::new()) })
}

/// Every connected piece of `set` must have an edge leaving it, otherwise
/// `L_DD` is singular.
fn check_transient(g: &DomainGraph, set: &[usize]) -> Result<HashMap<usize, usize>> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty vertex set".into()));
    }
    let mut local = HashMap::with_capacity(set.len());
    for (k, &v) in set.iter().enumerate() {
        if v >= g.vertex_count() || g.is_absorbing(v) {
            return Err(Error::InvalidArgument(format!("vertex {v} is not an interior or boundary vertex")));
        }
        if local.insert(v, k).is_some() {
            return Err(Error::InvalidArgument(format!("vertex {v} repeated")));
        }
    }
    let mut seen = vec![false; set.len()];
    for start in 0..set.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut leaks = false;
        while let Some(k) = queue.pop_front() {
            for &(w, _) in g.neighbors(set[k]) {
                match local.get(&w) {
                    Some(&l) if !seen[l] => {
                        seen[l] = true;
                        queue.push_back(l);
                    }
                    Some(_) => {}
                    None => leaks = true,
                }
            }
        }
        if !leaks {
            return Err(Error::NotTransient(format!(
                "the component of vertex {} never leaves the set",
                set[start]
            )));
        }
    }
    Ok(local)
}

impl GreenFunction {
    pub fn domain(&self) -> &[usize] {
        &self.domain
    }

    pub fn contains(&self, v: usize) -> bool {
        self.local.contains_key(&v)
    }

    /// Position of `v` in [`Self::domain`].
    pub fn local(&self, v: usize) -> Option<usize> {
        self.local.get(&v).copied()
    }

    pub fn solver(&self) -> &SpdSolver {
        &self.solver
    }

    /// Solves `L_DD u = b` for `b` indexed like [`Self::domain`].
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve(b)
    }

    /// `g_D(x, .)` over the domain; zero row when `x` lies outside it.
    pub fn row(&self, x: usize) -> Result<Arc<Vec<f64>>> {
        let Some(k) = self.local(x) else {
            return Ok(Arc::new(vec![0.0; self.domain.len()]));
        };
        if let Some(r) = self.rows.read().expect("green cache poisoned").get(&x) {
            return Ok(r.clone());
        }
        let mut e = vec![0.0; self.domain.len()];
        e[k] = 1.0;
        let r = Arc::new(self.solver.solve(&e)?);
        self.rows.write().expect("green cache poisoned").insert(x, r.clone());
        Ok(r)
    }

    /// Solves the rows of several vertices in parallel.
    pub fn prefetch(&self, xs: &[usize]) -> Result<()> {
        let missing: Vec<usize> = {
            let cache = self.rows.read().expect("green cache poisoned");
            xs.iter().copied().filter(|x| self.contains(*x) && !cache.contains_key(x)).collect()
        };
        let solved: Vec<(usize, Arc<Vec<f64>>)> = missing
            .par_iter()
            .map(|&x| {
                let mut e = vec![0.0; self.domain.len()];
                e[self.local[&x]] = 1.0;
                self.solver.solve(&e).map(|r| (x, Arc::new(r)))
            })
            .collect::<Result<_>>()?;
        let mut cache = self.rows.write().expect("green cache poisoned");
        for (x, r) in solved {
            cache.insert(x, r);
        }
        Ok(())
    }

    /// `g_D(x, y)`, zero when either vertex lies outside the domain.
    pub fn value(&self, x: usize, y: usize) -> Result<f64> {
        match (self.local(x), self.local(y)) {
            (Some(_), Some(l)) => Ok(self.row(x)?[l]),
            _ => Ok(0.0),
        }
    }

    /// Full matrix, indexed like [`Self::domain`].
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        self.prefetch(&self.domain)?;
        let n = self.domain.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &x) in self.domain.iter().enumerate() {
            let r = self.row(x)?;
            for j in 0..n {
                m[(i, j)] = r[j];
            }
        }
        Ok(m)
    }
}

/// Exit distribution of `D1` from `x`: `H(x, z) = sum_w g_D1(x, w) c_wz` for
/// vertices `z` outside `D1`.
pub fn exit_distribution(g: &DomainGraph, g1: &GreenFunction, x: usize) -> Result<Vec<(usize, f64)>> {
    let row = g1.row(x)?;
    let mut out: HashMap<usize, f64> = HashMap::new();
    for (k, &w) in g1.domain().iter().enumerate() {
        if row[k] == 0.0 {
            continue;
        }
        for &(z, c) in g.neighbors(w) {
            if !g1.contains(z) {
                *out.entry(z).or_insert(0.0) += row[k] * c;
            }
        }
    }
    let mut v: Vec<(usize, f64)> = out.into_iter().collect();
    v.sort_by_key(|p| p.0);
    Ok(v)
}

/// `|g_D2(x,y) - g_D1(x,y) - sum_z H^{D1}(x,z) g_D2(z,y)|` for `D1 ⊆ D2`.
pub fn dynkin_hunt_check(g: &DomainGraph, d1: &[usize], d2: &[usize], x: usize, y: usize) -> Result<f64> {
    if x == y {
        return Err(Error::InvalidArgument("Dynkin-Hunt check needs x != y".into()));
    }
    let g1 = green(g, d1)?;
    let g2 = green(g, d2)?;
    if let Some(v) = d1.iter().find(|v| !g2.contains(**v)) {
        return Err(Error::InvalidArgument(format!("vertex {v} of the inner set lies outside the outer set")));
    }
    if !g1.contains(x) || !g1.contains(y) {
        return Err(Error::InvalidArgument("x and y must lie in the inner set".into()));
    }
    let exit = exit_distribution(g, &g1, x)?;
    let row_y = g2.row(y)?;
    let through: f64 = exit
        .iter()
        .filter_map(|&(z, h)| g2.local(z).map(|l| h * row_y[l]))
        .sum();
    Ok((g2.value(x, y)? - g1.value(x, y)? - through).abs())
}

/// Equilibrium potential and measures of `A` relative to `D`.
#[derive(Debug, Clone)]
pub struct EquilibriumData {
    pub capacity: f64,
    /// `e_{A,D}` on all vertices: 1 on `A`, 0 off `D`.
    pub potential: Vec<f64>,
    /// Inner measure on `A`: `(L e)(x)`.
    pub inner: Vec<(usize, f64)>,
    /// Outer measure on the vertices just outside `D`: `-(L e)(x)`.
    pub outer: Vec<(usize, f64)>,
}

impl EquilibriumData {
    pub fn inner_mass(&self) -> f64 {
        self.inner.iter().map(|p| p.1).sum()
    }
    pub fn outer_mass(&self) -> f64 {
        self.outer.iter().map(|p| p.1).sum()
    }
}

/// Capacity of `a` in `d`, minimizing the energy over functions equal to 1
/// on `a` and 0 off `d`.
pub fn capacity(g: &DomainGraph, a: &[usize], d: &[usize]) -> Result<EquilibriumData> {
    let n = g.vertex_count();
    if a.is_empty() {
        return Ok(EquilibriumData { capacity: 0.0, potential: vec![0.0; n], inner: vec![], outer: vec![] });
    }
    let mut in_d = vec![false; n];
    for &v in d {
        if v >= n || g.is_absorbing(v) {
            return Err(Error::InvalidArgument(format!("vertex {v} cannot belong to the outer set")));
        }
        in_d[v] = true;
    }
    let mut in_a = vec![false; n];
    for &v in a {
        if v >= n || !in_d[v] {
            return Err(Error::InvalidArgument(format!(
                "vertex {v} of A lies outside D: capacity would be infinite"
            )));
        }
        in_a[v] = true;
    }
    let free: Vec<usize> = d.iter().copied().filter(|&v| !in_a[v]).collect();
    let mut e = vec![0.0; n];
    for &v in a {
        e[v] = 1.0;
    }
    if !free.is_empty() {
        let gf = green(g, &free)?;
        let rhs: Vec<f64> = free
            .iter()
            .map(|&x| g.neighbors(x).iter().filter(|p| in_a[p.0]).map(|p| p.1).sum())
            .collect();
        let sol = gf.solve(&rhs)?;
        for (k, &x) in free.iter().enumerate() {
            e[x] = sol[k].clamp(0.0, 1.0);
        }
    } else if !d.iter().any(|&v| g.neighbors(v).iter().any(|p| !in_d[p.0])) {
        return Err(Error::NotTransient("A fills D and D has no exit".into()));
    }
    let le = |x: usize| -> f64 { g.neighbors(x).iter().map(|&(y, c)| c * (e[x] - e[y])).sum() };
    let mut inner: Vec<(usize, f64)> = a.iter().map(|&x| (x, le(x))).collect();
    inner.sort_by_key(|p| p.0);
    let mut outer_set: Vec<usize> = d
        .iter()
        .flat_map(|&x| g.neighbors(x).iter().map(|p| p.0))
        .filter(|&y| !in_d[y])
        .collect();
    outer_set.sort_unstable();
    outer_set.dedup();
    let outer: Vec<(usize, f64)> = outer_set.iter().map(|&y| (y, -le(y))).collect();
    let mut energy = 0.0;
    for &(u, v, c) in g.edges() {
        if in_d[u] || in_d[v] {
            let d = e[u] - e[v];
            energy += c * d * d;
        }
    }
    Ok(EquilibriumData { capacity: energy, potential: e, inner, outer })
}

/// Parameters of [`cdc_check`].
#[derive(Debug, Clone)]
pub struct CdcParams {
    pub a0: f64,
    pub scales: Vec<f64>,
    /// Pass iff every ratio is at most this constant.
    pub constant: f64,
    /// Boundary vertices to test; all of them when `None`.
    pub centers: Option<Vec<usize>>,
}

/// Capacity density check: `Cap_{B(xi,A0 R)}(B(xi,R)) / Cap_{B(xi,A0 R)}(B(xi,R) \ U)`.
pub fn cdc_check(g: &DomainGraph, p: &CdcParams) -> Result<EstimateReport> {
    if !(p.a0 > 1.0) {
        return Err(Error::InvalidArgument(format!("A0 must exceed 1, got {}", p.a0)));
    }
    let mut report = EstimateReport::new(
        "cdc-check",
        &["xi_index", "R", "cap_full", "cap_complement", "ratio"],
        2,
        "ratio",
    );
    let diam = g.diameter();
    let mut scales = Vec::new();
    for &r in &p.scales {
        if p.a0 * r > diam {
            report.warn(format!("scale {r} clipped: A0 R exceeds the diameter {diam:.3}"));
        } else {
            scales.push(r);
        }
    }
    let centers = p.centers.clone().unwrap_or_else(|| g.boundary().to_vec());
    let jobs: Vec<(usize, f64)> = centers.iter().flat_map(|&xi| scales.iter().map(move |&r| (xi, r))).collect();
    let rows: Vec<Option<(usize, f64, f64, f64)>> = jobs
        .par_iter()
        .map(|&(xi, r)| -> Result<Option<(usize, f64, f64, f64)>> {
            let outer = g.ball(xi, p.a0 * r);
            let ball = g.ball(xi, r);
            let complement: Vec<usize> = ball.iter().copied().filter(|&v| g.is_boundary(v)).collect();
            if outer.len() == g.non_absorbing().len() && g.is_bounded() {
                return Ok(None);
            }
            let full = capacity(g, &ball, &outer)?.capacity;
            let comp = capacity(g, &complement, &outer)?.capacity;
            Ok(Some((xi, r, full, comp)))
        })
        .collect::<Result<_>>()?;
    for (xi, r, full, comp) in rows.into_iter().flatten() {
        report.push(vec![xi.into(), r.into(), full.into(), comp.into(), (full / comp).into()]);
    }
    report.pass_if_max_at_most(p.constant);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdomain::DomainGraph;

    /// Path 0-1-...-(n-1) with unit conductances.
    fn path(n: usize, interior: Vec<usize>, boundary: Vec<usize>, absorbing: Vec<usize>) -> DomainGraph {
        let coords = (0..n).map(|i| [i as f64, 0.0]).collect();
        let edges = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        DomainGraph::from_parts(coords, edges, vec![1.0; n], interior, boundary, absorbing, 1.0).unwrap()
    }

    #[test]
    fn p3_green() {
        let g = path(3, vec![1], vec![0, 2], vec![]);
        let gf = green(&g, &[1]).unwrap();
        assert_eq!(gf.value(1, 1).unwrap(), 0.5);
    }

    #[test]
    fn four_cycle_green_is_half_identity() {
        let coords = vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let edges = vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)];
        let g = DomainGraph::from_parts(coords, edges, vec![1.0; 4], vec![1, 3], vec![0, 2], vec![], 1.0).unwrap();
        let m = green(&g, &[1, 3]).unwrap().matrix().unwrap();
        assert_eq!(m, DMatrix::from_diagonal_element(2, 2, 0.5));
    }

    #[test]
    fn recurrent_set_rejected() {
        let g = path(3, vec![1], vec![0, 2], vec![]);
        assert!(matches!(green(&g, &[0, 1, 2]), Err(Error::NotTransient(_))));
    }

    #[test]
    fn disconnected_pair_has_zero_green() {
        let g = path(5, vec![1, 2, 3], vec![0, 4], vec![]);
        let gf = green(&g, &[1, 3]).unwrap();
        assert_eq!(gf.value(1, 3).unwrap(), 0.0);
    }

    #[test]
    fn dynkin_hunt_on_p5() {
        let g = path(5, vec![1, 2, 3], vec![0, 4], vec![]);
        assert!(dynkin_hunt_check(&g, &[2, 3], &[1, 2, 3], 2, 3).unwrap() <= 1e-12);
        assert!(dynkin_hunt_check(&g, &[1, 2, 3], &[1, 2, 3], 1, 3).unwrap() <= 1e-15);
    }

    #[test]
    fn series_and_parallel_capacities() {
        let g = path(3, vec![1], vec![0], vec![2]);
        let eq = capacity(&g, &[0], &[0, 1]).unwrap();
        assert!((eq.capacity - 0.5).abs() < 1e-14);
        assert!((eq.inner_mass() - 0.5).abs() < 1e-14);
        assert!((eq.outer_mass() - 0.5).abs() < 1e-14);

        let coords = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
        let edges = vec![(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)];
        let star = DomainGraph::from_parts(coords, edges, vec![1.0; 4], vec![0], vec![1, 2, 3], vec![], 1.0).unwrap();
        let eq = capacity(&star, &[0], &[0]).unwrap();
        assert!((eq.capacity - 3.0).abs() < 1e-14);
    }

    #[test]
    fn empty_set_has_zero_capacity() {
        let g = path(3, vec![1], vec![0, 2], vec![]);
        assert_eq!(capacity(&g, &[], &[1]).unwrap().capacity, 0.0);
        assert!(capacity(&g, &[0], &[1]).is_err());
    }
}

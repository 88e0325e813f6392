//! Lattice discretizations of planar domains as weighted graphs.
//!
//! A [`DomainGraph`] is the closure of a domain `U` cut out of a square
//! lattice: interior vertices (`U`), boundary vertices (`F`, lattice points of
//! the complement touching `U`) and, for unbounded domains, absorbing
//! vertices at distance at least the truncation radius from the origin. The
//! absorbing set plays the role of the point at infinity.
//!
//! Coordinates are physical: lattice index times the mesh, shifted so that
//! the geometric feature of each family (corner, apex, slit tip, disk center,
//! boundary midpoint) sits at the origin.
//!
//! | family              | region                      | origin            |
//! |---------------------|-----------------------------|-------------------|
//! | `rectangle`         | `(0, N h)^2`                | lower-left corner |
//! | `half_plane`        | `y > 0`, weight `y^(1-a)`   | boundary midpoint |
//! | `quadrant`          | `x > 0, y > 0`              | corner            |
//! | `parabola_exterior` | `y < x^2 - h/2`             | apex              |
//! | `slit_plane`        | plane minus `(-inf, 0]`     | slit tip          |
//! | `disk_exterior`     | `abs(z) > rho`              | disk center       |
//!
//! Every family is a uniform domain with corkscrew constant `c_U = 1` in the
//! sense used by [`DomainGraph::corkscrew`]: a corkscrew point at radius `r`
//! has depth at least `r / 2 - h`. For `parabola_exterior` this is an
//! empirical value checked on the lattice, not a certified constant.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::fmt_real;
use crate::solvers::SparseSymMatrix;

/// Depth constant of corkscrew points shared by all built-in families.
pub const CORKSCREW_CONSTANT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    HalfPlane,
    Quadrant,
    ParabolaExterior,
    SlitPlane,
    DiskExterior,
    Rectangle,
    Custom,
}

impl Family {
    pub fn is_unbounded(self) -> bool {
        !matches!(self, Family::Rectangle | Family::Custom)
    }

    fn default_mesh(self) -> f64 {
        match self {
            // Focal length 1/4 spans eight lattice cells.
            Family::ParabolaExterior => 1.0 / 16.0,
            _ => 1.0,
        }
    }
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub family: Family,
    /// Lattice extent `N`: indices run over `{0, ..., N}^2`.
    pub side: usize,
    /// Weight exponent of `half_plane`; ignored elsewhere.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Radius of the absorbing ring for unbounded families.
    #[serde(default)]
    pub truncation_radius: Option<f64>,
    pub base_point: [f64; 2],
    /// Lattice spacing; defaults per family (1, or 1/16 for the parabola).
    #[serde(default)]
    pub mesh: Option<f64>,
    /// Disk radius for `disk_exterior`; defaults to `truncation_radius / 16`.
    #[serde(default)]
    pub obstacle_radius: Option<f64>,
    /// Graph file for `custom`.
    #[serde(default)]
    pub graph_file: Option<String>,
}

impl DomainSpec {
    pub fn new(family: Family, side: usize, base_point: [f64; 2]) -> Self {
        Self {
            family,
            side,
            alpha: 1.0,
            truncation_radius: None,
            base_point,
            mesh: None,
            obstacle_radius: None,
            graph_file: None,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_truncation(mut self, radius: f64) -> Self {
        self.truncation_radius = Some(radius);
        self
    }

    pub fn with_mesh(mut self, mesh: f64) -> Self {
        self.mesh = Some(mesh);
        self
    }

    pub fn mesh(&self) -> f64 {
        self.mesh.unwrap_or_else(|| self.family.default_mesh())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexRole {
    Interior,
    Boundary,
    Absorbing,
}

/// How distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    /// Inner metric of the plane slit along the non-positive real axis.
    Slit,
}

/// Finite weighted graph with geometry. Immutable after construction.
#[derive(Debug)]
pub struct DomainGraph {
    family: Family,
    coords: Vec<[f64; 2]>,
    /// `+1`/`-1` for the upper/lower copy of a slit vertex, `0` otherwise.
    sides: Vec<i8>,
    edges: Vec<(usize, usize, f64)>,
    measure: Vec<f64>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    absorbing: Vec<usize>,
    mesh: f64,
    metric: Metric,
    truncation_radius: Option<f64>,
    base_vertex: Option<usize>,
    role: Vec<VertexRole>,
    adjacency: Vec<Vec<(usize, f64)>>,
    boundary_slot: Vec<Option<usize>>,
    depth: OnceLock<Vec<f64>>,
}

impl Clone for DomainGraph {
    fn clone(&self) -> Self {
        Self {
            family: self.family,
            coords: self.coords.clone(),
            sides: self.sides.clone(),
            edges: self.edges.clone(),
            measure: self.measure.clone(),
            interior: self.interior.clone(),
            boundary: self.boundary.clone(),
            absorbing: self.absorbing.clone(),
            mesh: self.mesh,
            metric: self.metric,
            truncation_radius: self.truncation_radius,
            base_vertex: self.base_vertex,
            role: self.role.clone(),
            adjacency: self.adjacency.clone(),
            boundary_slot: self.boundary_slot.clone(),
            depth: OnceLock::new(),
        }
    }
}

/// Interior vertex near a boundary point at the requested radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorkscrewPoint {
    pub xi: usize,
    pub r: f64,
    pub xi_r: usize,
}

impl DomainGraph {
    /// Assembles and validates a graph from its parts.
    pub fn from_parts(
        coords: Vec<[f64; 2]>,
        edges: Vec<(usize, usize, f64)>,
        measure: Vec<f64>,
        interior: Vec<usize>,
        boundary: Vec<usize>,
        absorbing: Vec<usize>,
        mesh: f64,
    ) -> Result<Self> {
        let n = coords.len();
        let sides = vec![0; n];
        Self::assemble(Family::Custom, coords, sides, edges, measure, interior, boundary, absorbing, mesh, Metric::Euclidean)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        family: Family,
        coords: Vec<[f64; 2]>,
        sides: Vec<i8>,
        edges: Vec<(usize, usize, f64)>,
        measure: Vec<f64>,
        mut interior: Vec<usize>,
        mut boundary: Vec<usize>,
        mut absorbing: Vec<usize>,
        mesh: f64,
        metric: Metric,
    ) -> Result<Self> {
        let n = coords.len();
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if measure.len() != n || sides.len() != n {
            return bad("measure length differs from vertex count".into());
        }
        if !(mesh > 0.0) {
            return bad(format!("mesh must be positive, got {mesh}"));
        }
        if let Some(m) = measure.iter().find(|m| !(**m > 0.0)) {
            return bad(format!("vertex measure must be positive, found {m}"));
        }
        interior.sort_unstable();
        boundary.sort_unstable();
        absorbing.sort_unstable();
        let mut role = vec![None; n];
        for (set, r) in [(&interior, VertexRole::Interior), (&boundary, VertexRole::Boundary), (&absorbing, VertexRole::Absorbing)] {
            for &v in set.iter() {
                if v >= n {
                    return bad(format!("vertex {v} out of range"));
                }
                if role[v].is_some() {
                    return bad(format!("vertex {v} listed in two parts of the partition"));
                }
                role[v] = Some(r);
            }
        }
        let role: Vec<VertexRole> = match role.iter().position(|r| r.is_none()) {
            Some(v) => return bad(format!("vertex {v} not assigned to interior, boundary or absorbing")),
            None => role.into_iter().map(Option::unwrap).collect(),
        };
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v, c) in &edges {
            if u >= n || v >= n || u == v {
                return bad(format!("invalid edge ({u}, {v})"));
            }
            if !(c > 0.0) || !c.is_finite() {
                return bad(format!("edge ({u}, {v}) has non-positive conductance {c}"));
            }
            adjacency[u].push((v, c));
            adjacency[v].push((u, c));
        }
        for (u, nb) in adjacency.iter_mut().enumerate() {
            nb.sort_by_key(|&(v, _)| v);
            if nb.windows(2).any(|w| w[0].0 == w[1].0) {
                return bad(format!("duplicate edge at vertex {u}"));
            }
        }
        for &b in &boundary {
            if !adjacency[b].iter().any(|&(v, _)| role[v] == VertexRole::Interior) {
                return bad(format!("boundary vertex {b} has no interior neighbor"));
            }
        }
        // Connectivity of interior and boundary.
        let core: Vec<usize> = (0..n).filter(|&v| role[v] != VertexRole::Absorbing).collect();
        if let Some(&start) = core.first() {
            let mut seen = vec![false; n];
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            let mut count = 1;
            while let Some(v) = queue.pop_front() {
                for &(w, _) in &adjacency[v] {
                    if !seen[w] && role[w] != VertexRole::Absorbing {
                        seen[w] = true;
                        count += 1;
                        queue.push_back(w);
                    }
                }
            }
            if count != core.len() {
                return bad("interior and boundary vertices do not form a connected graph".into());
            }
        }
        let mut boundary_slot = vec![None; n];
        for (k, &b) in boundary.iter().enumerate() {
            boundary_slot[b] = Some(k);
        }
        Ok(Self {
            family,
            coords,
            sides,
            edges,
            measure,
            interior,
            boundary,
            absorbing,
            mesh,
            metric,
            truncation_radius: None,
            base_vertex: None,
            role,
            adjacency,
            boundary_slot,
            depth: OnceLock::new(),
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }
    pub fn vertex_count(&self) -> usize {
        self.coords.len()
    }
    pub fn coords(&self, v: usize) -> [f64; 2] {
        self.coords[v]
    }
    pub fn all_coords(&self) -> &[[f64; 2]] {
        &self.coords
    }
    pub fn side(&self, v: usize) -> i8 {
        self.sides[v]
    }
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }
    pub fn measure(&self) -> &[f64] {
        &self.measure
    }
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }
    pub fn absorbing(&self) -> &[usize] {
        &self.absorbing
    }
    pub fn mesh(&self) -> f64 {
        self.mesh
    }
    pub fn metric(&self) -> Metric {
        self.metric
    }
    pub fn truncation_radius(&self) -> Option<f64> {
        self.truncation_radius
    }
    /// Vertex nearest to the spec's base point, if built from a spec.
    pub fn base_vertex(&self) -> Option<usize> {
        self.base_vertex
    }
    pub fn role(&self, v: usize) -> VertexRole {
        self.role[v]
    }
    pub fn is_interior(&self, v: usize) -> bool {
        self.role[v] == VertexRole::Interior
    }
    pub fn is_boundary(&self, v: usize) -> bool {
        self.role[v] == VertexRole::Boundary
    }
    pub fn is_absorbing(&self, v: usize) -> bool {
        self.role[v] == VertexRole::Absorbing
    }
    /// Position of a boundary vertex within [`Self::boundary`].
    pub fn boundary_slot(&self, v: usize) -> Option<usize> {
        self.boundary_slot[v]
    }
    /// True when there is no absorbing set, i.e. the chain is conservative.
    pub fn is_bounded(&self) -> bool {
        self.absorbing.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn conductance(&self, u: usize, v: usize) -> f64 {
        match self.adjacency[u].binary_search_by_key(&v, |&(w, _)| w) {
            Ok(k) => self.adjacency[u][k].1,
            Err(_) => 0.0,
        }
    }

    /// Sum of conductances of all edges at `v`.
    pub fn total_conductance(&self, v: usize) -> f64 {
        self.adjacency[v].iter().map(|&(_, c)| c).sum()
    }

    pub fn non_absorbing(&self) -> Vec<usize> {
        (0..self.vertex_count()).filter(|&v| !self.is_absorbing(v)).collect()
    }

    /// Generator `L_DD` killed outside `set`: diagonal entries are total
    /// conductances, off-diagonal entries `-c_xy` for edges inside `set`.
    /// Rows follow the order of `set`.
    pub fn killed_generator(&self, set: &[usize]) -> SparseSymMatrix {
        let mut local = vec![usize::MAX; self.vertex_count()];
        for (k, &v) in set.iter().enumerate() {
            local[v] = k;
        }
        let mut entries = Vec::with_capacity(set.len() * 3);
        for (k, &v) in set.iter().enumerate() {
            entries.push((k, k, self.total_conductance(v)));
            for &(w, c) in &self.adjacency[v] {
                let l = local[w];
                if l != usize::MAX && k < l {
                    entries.push((k, l, -c));
                }
            }
        }
        SparseSymMatrix::from_upper(set.len(), entries)
    }

    /// Distance between two vertices in the domain's metric.
    pub fn distance(&self, u: usize, v: usize) -> f64 {
        let (p, q) = (self.coords[u], self.coords[v]);
        let euclid = (p[0] - q[0]).hypot(p[1] - q[1]);
        match self.metric {
            Metric::Euclidean => euclid,
            Metric::Slit => {
                if slit_separates(p, self.sides[u], q, self.sides[v]) {
                    p[0].hypot(p[1]) + q[0].hypot(q[1])
                } else {
                    euclid
                }
            }
        }
    }

    /// Non-absorbing vertices at distance `< r` from `center`.
    pub fn ball(&self, center: usize, r: f64) -> Vec<usize> {
        (0..self.vertex_count())
            .filter(|&v| !self.is_absorbing(v) && self.distance(center, v) < r)
            .collect()
    }

    /// Boundary vertices at distance `< r` from `center`.
    pub fn boundary_ball(&self, center: usize, r: f64) -> Vec<usize> {
        self.boundary.iter().copied().filter(|&v| self.distance(center, v) < r).collect()
    }

    /// Non-absorbing vertices with distance to `center` in `[r - h, r + h]`.
    pub fn sphere(&self, center: usize, r: f64) -> Vec<usize> {
        (0..self.vertex_count())
            .filter(|&v| !self.is_absorbing(v) && (self.distance(center, v) - r).abs() <= self.mesh + 1e-12)
            .collect()
    }

    /// Distance to the boundary set `F` for every vertex (0 on `F`).
    pub fn depths(&self) -> &[f64] {
        self.depth.get_or_init(|| {
            (0..self.vertex_count())
                .map(|v| {
                    if self.is_boundary(v) {
                        0.0
                    } else {
                        self.boundary.iter().map(|&b| self.distance(v, b)).fold(f64::INFINITY, f64::min)
                    }
                })
                .collect()
        })
    }

    /// Upper bound on the diameter of the non-absorbing part: the diagonal of
    /// its bounding box.
    pub fn diameter(&self) -> f64 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in self.non_absorbing() {
            for k in 0..2 {
                lo[k] = lo[k].min(self.coords[v][k]);
                hi[k] = hi[k].max(self.coords[v][k]);
            }
        }
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }

    /// Vertex closest to a point (Euclidean), lowest index on ties.
    pub fn nearest_vertex(&self, p: [f64; 2]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (v, q) in self.coords.iter().enumerate() {
            let d = (p[0] - q[0]).hypot(p[1] - q[1]);
            if d < best.0 {
                best = (d, v);
            }
        }
        best.1
    }

    /// Corkscrew point: the interior vertex of greatest depth among those
    /// with `|d(xi, v) - r| <= h/2` (widened to `h` if that set is empty).
    /// Ties go to the vertex closest to the sphere, then the lowest index.
    pub fn corkscrew(&self, xi: usize, r: f64) -> Result<CorkscrewPoint> {
        if !self.is_boundary(xi) {
            return Err(Error::InvalidArgument(format!("vertex {xi} is not a boundary vertex")));
        }
        if r < 2.0 * self.mesh - 1e-12 {
            return Err(Error::InvalidArgument(format!("corkscrew radius {r} below twice the mesh")));
        }
        if r >= self.diameter() / 4.0 {
            return Err(Error::InvalidArgument(format!("corkscrew radius {r} not below a quarter of the diameter")));
        }
        let depth = self.depths();
        // Rank by depth, then closeness to r, then index; the tight annulus
        // keeps the point on the sphere when a deeper one sits just outside.
        let pick = |width: f64| -> Option<(f64, usize)> {
            let mut best: Option<(f64, f64, usize)> = None;
            for &v in &self.interior {
                let off = (self.distance(xi, v) - r).abs();
                if off > width + 1e-12 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((d, o, _)) => depth[v] > d || (depth[v] == d && off < o),
                };
                if better {
                    best = Some((depth[v], off, v));
                }
            }
            best.map(|(d, _, v)| (d, v))
        };
        let best = pick(0.5 * self.mesh).or_else(|| pick(self.mesh));
        best.map(|(_, v)| CorkscrewPoint { xi, r, xi_r: v }).ok_or(Error::NoCorkscrew { xi, r })
    }

    /// Writes the graph file (17 significant digits for every real).
    pub fn to_json_string(&self) -> String {
        let mut s = String::from("{\n");
        let reals = |v: &[f64]| v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(",");
        let ints = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let coords: Vec<String> = self.coords.iter().map(|p| format!("[{},{}]", fmt_real(p[0]), fmt_real(p[1]))).collect();
        let edges: Vec<String> = self.edges.iter().map(|&(u, v, c)| format!("[{u},{v},{}]", fmt_real(c))).collect();
        let family = serde_json::to_string(&self.family).unwrap_or_else(|_| "\"custom\"".into());
        let metric = serde_json::to_string(&self.metric).unwrap_or_else(|_| "\"euclidean\"".into());
        let _ = writeln!(s, "  \"family\": {family},");
        let _ = writeln!(s, "  \"metric\": {metric},");
        let _ = writeln!(s, "  \"mesh\": {},", fmt_real(self.mesh));
        let _ = writeln!(s, "  \"coords\": [{}],", coords.join(","));
        let _ = writeln!(s, "  \"edges\": [{}],", edges.join(","));
        let _ = writeln!(s, "  \"measure\": [{}],", reals(&self.measure));
        let _ = writeln!(s, "  \"interior\": [{}],", ints(&self.interior));
        let _ = writeln!(s, "  \"boundary\": [{}],", ints(&self.boundary));
        let _ = writeln!(s, "  \"absorbing\": [{}],", ints(&self.absorbing));
        let sides: Vec<String> = self.sides.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(s, "  \"sides\": [{}]", sides.join(","));
        s.push_str("}\n");
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::report::write_atomic(path, self.to_json_string().as_bytes())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        let n = file.coords.len();
        let sides = file.sides.unwrap_or_else(|| vec![0; n]);
        let edges = file.edges.iter().map(|e| (e.0, e.1, e.2)).collect();
        let mut g = Self::assemble(
            file.family.unwrap_or(Family::Custom),
            file.coords,
            sides,
            edges,
            file.measure,
            file.interior,
            file.boundary,
            file.absorbing,
            file.mesh,
            file.metric.unwrap_or(Metric::Euclidean),
        )?;
        g.truncation_radius = None;
        Ok(g)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Deserialize)]
struct GraphFile {
    #[serde(default)]
    family: Option<Family>,
    #[serde(default)]
    metric: Option<Metric>,
    mesh: f64,
    coords: Vec<[f64; 2]>,
    edges: Vec<(usize, usize, f64)>,
    measure: Vec<f64>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    absorbing: Vec<usize>,
    #[serde(default)]
    sides: Option<Vec<i8>>,
}

/// Whether the straight segment between two points of the slit plane passes
/// through the slit `(-inf, 0] x {0}`. `side` distinguishes the two copies of
/// a slit point.
fn slit_separates(p: [f64; 2], sp: i8, q: [f64; 2], sq: i8) -> bool {
    let half = |y: f64, s: i8| -> i8 {
        if s != 0 {
            s
        } else if y > 0.0 {
            1
        } else if y < 0.0 {
            -1
        } else {
            0
        }
    };
    let (hp, hq) = (half(p[1], sp), half(q[1], sq));
    if hp * hq >= 0 {
        return false;
    }
    let denom = p[1] - q[1];
    let xc = if denom == 0.0 { p[0].min(q[0]) } else { p[0] + (q[0] - p[0]) * p[1] / denom };
    xc <= 0.0
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Cell {
    Dropped,
    Interior,
    /// Complement point touching the interior along a lattice edge.
    Boundary,
    /// Complement point touching the interior only diagonally.
    DiagonalBoundary,
}

/// Builds the lattice discretization of `spec`.
pub fn build_domain(spec: &DomainSpec) -> Result<DomainGraph> {
    if spec.family == Family::Custom {
        let path = spec
            .graph_file
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("custom family requires graph_file".into()))?;
        let mut g = DomainGraph::read_json(Path::new(path))?;
        let base = g.nearest_vertex(spec.base_point);
        if !g.is_interior(base) {
            return Err(Error::InvalidSpec("base point does not map to an interior vertex".into()));
        }
        g.base_vertex = Some(base);
        return Ok(g);
    }
    let n = spec.side;
    let min_side = if spec.family == Family::Rectangle { 2 } else { 8 };
    if n < min_side {
        return Err(Error::InvalidSpec(format!("side {n} below the minimum {min_side}")));
    }
    let h = spec.mesh();
    if !(h > 0.0) {
        return Err(Error::InvalidSpec(format!("mesh must be positive, got {h}")));
    }
    if spec.family == Family::HalfPlane && !(spec.alpha > 0.0 && spec.alpha < 2.0) {
        return Err(Error::InvalidSpec(format!("alpha must lie in (0, 2), got {}", spec.alpha)));
    }
    let truncation = if spec.family.is_unbounded() {
        match spec.truncation_radius {
            Some(r) if r > 0.0 => Some(r),
            Some(r) => return Err(Error::InvalidSpec(format!("truncation radius must be positive, got {r}"))),
            None => return Err(Error::InvalidSpec(format!("{:?} requires a truncation radius", spec.family))),
        }
    } else {
        None
    };
    let rho = spec.obstacle_radius.or(truncation.map(|r| r / 16.0)).unwrap_or(0.0);
    let half = (n / 2) as f64;
    let origin = match spec.family {
        Family::Rectangle | Family::Quadrant => [0.0, 0.0],
        Family::HalfPlane => [-half * h, 0.0],
        _ => [-half * h, -half * h],
    };
    let mid = (n / 2) as i64;
    let pos = |i: i64, j: i64| [origin[0] + i as f64 * h, origin[1] + j as f64 * h];
    let family = spec.family;
    let in_domain = |i: i64, j: i64| -> bool {
        let [x, y] = pos(i, j);
        match family {
            Family::Rectangle => i > 0 && j > 0 && i < n as i64 && j < n as i64,
            Family::HalfPlane => j > 0,
            Family::Quadrant => i > 0 && j > 0,
            Family::ParabolaExterior => y < x * x - h / 2.0,
            Family::SlitPlane => !(j == mid && i <= mid),
            Family::DiskExterior => x * x + y * y > rho * rho,
            Family::Custom => unreachable!(),
        }
    };
    let size = n as i64 + 1;
    let inside = |i: i64, j: i64| i >= 0 && j >= 0 && i < size && j < size;
    let mut cell = vec![Cell::Dropped; (size * size) as usize];
    let at = |i: i64, j: i64| (j * size + i) as usize;
    for j in 0..size {
        for i in 0..size {
            cell[at(i, j)] = if in_domain(i, j) {
                Cell::Interior
            } else if [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|&(di, dj)| inside(i + di, j + dj) && in_domain(i + di, j + dj)) {
                Cell::Boundary
            } else if [(1, 1), (-1, 1), (1, -1), (-1, -1)].iter().any(|&(di, dj)| inside(i + di, j + dj) && in_domain(i + di, j + dj)) {
                Cell::DiagonalBoundary
            } else {
                Cell::Dropped
            };
        }
    }
    let is_slit = |i: i64, j: i64| family == Family::SlitPlane && j == mid && i < mid;

    // Vertex numbering: row-major in (j, i); slit points get an upper and a
    // lower copy.
    let mut vid = vec![[usize::MAX; 2]; (size * size) as usize];
    let mut coords = Vec::new();
    let mut sides = Vec::new();
    let mut kind = Vec::new();
    for j in 0..size {
        for i in 0..size {
            let c = cell[at(i, j)];
            if c == Cell::Dropped {
                continue;
            }
            if is_slit(i, j) {
                for (k, s) in [(0, 1i8), (1, -1i8)] {
                    vid[at(i, j)][k] = coords.len();
                    coords.push(pos(i, j));
                    sides.push(s);
                    kind.push(c);
                }
            } else {
                vid[at(i, j)] = [coords.len(); 2];
                coords.push(pos(i, j));
                sides.push(0);
                kind.push(c);
            }
        }
    }
    // Vertex reached when stepping from (i, j) on `side` to (i + di, j + dj).
    let target = |i: i64, j: i64, side: i8, di: i64, dj: i64| -> Option<usize> {
        let (a, b) = (i + di, j + dj);
        if !inside(a, b) || cell[at(a, b)] == Cell::Dropped {
            return None;
        }
        if is_slit(i, j) && dj != 0 && (dj > 0) != (side > 0) {
            return None;
        }
        if is_slit(a, b) {
            if dj > 0 {
                return Some(vid[at(a, b)][1]);
            }
            if dj < 0 {
                return Some(vid[at(a, b)][0]);
            }
            // Horizontal step along the slit keeps the side; from the tip
            // both copies are reachable, handled by the caller.
            return Some(vid[at(a, b)][if side < 0 { 1 } else { 0 }]);
        }
        Some(vid[at(a, b)][0])
    };

    let weight = |y: f64| -> f64 {
        if family == Family::HalfPlane {
            y.max(h / 2.0).powf(1.0 - spec.alpha)
        } else {
            1.0
        }
    };
    let nv = coords.len();
    let mut role = vec![VertexRole::Interior; nv];
    for v in 0..nv {
        role[v] = match kind[v] {
            Cell::Interior => VertexRole::Interior,
            _ => VertexRole::Boundary,
        };
        if let Some(r) = truncation {
            if coords[v][0].hypot(coords[v][1]) >= r {
                role[v] = VertexRole::Absorbing;
            }
        }
    }
    let mut edge_set = Vec::new();
    for j in 0..size {
        for i in 0..size {
            let c = cell[at(i, j)];
            if c == Cell::Dropped {
                continue;
            }
            let copies: &[(usize, i8)] = &if is_slit(i, j) {
                vec![(0usize, 1i8), (1, -1)]
            } else {
                vec![(0usize, 0i8)]
            };
            for &(k, side) in copies {
                let u = vid[at(i, j)][k];
                for (di, dj) in [(1i64, 0i64), (0, 1), (-1, 0), (0, -1)] {
                    let targets: Vec<usize> = if family == Family::SlitPlane && i == mid && j == mid && di == -1 {
                        vid[at(i - 1, j)].to_vec()
                    } else {
                        target(i, j, side, di, dj).into_iter().collect()
                    };
                    for v in targets {
                        if u < v {
                            edge_set.push((u, v));
                        }
                    }
                }
                if c == Cell::DiagonalBoundary {
                    for (di, dj) in [(1i64, 1i64), (-1, 1), (1, -1), (-1, -1)] {
                        let (a, b) = (i + di, j + dj);
                        if inside(a, b) && cell[at(a, b)] == Cell::Interior {
                            let v = vid[at(a, b)][0];
                            edge_set.push((u.min(v), u.max(v)));
                        }
                    }
                }
            }
        }
    }
    edge_set.sort_unstable();
    edge_set.dedup();

    // Boundary vertices cut off from the interior by the truncation join the
    // absorbing set.
    loop {
        let mut has_interior = vec![false; nv];
        for &(u, v) in &edge_set {
            if role[v] == VertexRole::Interior {
                has_interior[u] = true;
            }
            if role[u] == VertexRole::Interior {
                has_interior[v] = true;
            }
        }
        let mut changed = false;
        for v in 0..nv {
            if role[v] == VertexRole::Boundary && !has_interior[v] {
                role[v] = VertexRole::Absorbing;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if truncation.is_none() && role.contains(&VertexRole::Absorbing) {
        return Err(Error::InvalidSpec("bounded domain produced boundary vertices without interior neighbors".into()));
    }

    // Keep the component of the base point.
    let base = {
        let p = spec.base_point;
        let mut best = (f64::INFINITY, usize::MAX);
        for (v, q) in coords.iter().enumerate() {
            let d = (p[0] - q[0]).hypot(p[1] - q[1]);
            if d < best.0 {
                best = (d, v);
            }
        }
        best
    };
    if base.1 == usize::MAX || role[base.1] != VertexRole::Interior || base.0 > h * 0.7072 {
        return Err(Error::InvalidSpec(format!("base point {:?} does not map to an interior vertex", spec.base_point)));
    }
    if family == Family::SlitPlane && spec.base_point[1] == 0.0 && spec.base_point[0] <= 0.0 {
        return Err(Error::InvalidSpec("base point lies on the slit".into()));
    }
    let mut adj = vec![Vec::new(); nv];
    for &(u, v) in &edge_set {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut keep = vec![false; nv];
    keep[base.1] = true;
    let mut queue = VecDeque::from([base.1]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !keep[w] && role[w] != VertexRole::Absorbing {
                keep[w] = true;
                queue.push_back(w);
            }
        }
    }
    // Every absorbing lattice point is kept, so vertex counts match the full
    // grid; only those next to the kept component carry edges. Other
    // components are dropped.
    let mut new_id = vec![usize::MAX; nv];
    let mut next = 0;
    for v in 0..nv {
        if keep[v] || role[v] == VertexRole::Absorbing {
            new_id[v] = next;
            next += 1;
        }
    }
    let mut out_coords = Vec::with_capacity(next);
    let mut out_sides = Vec::with_capacity(next);
    let mut measure = Vec::with_capacity(next);
    let (mut interior, mut boundary, mut absorbing) = (Vec::new(), Vec::new(), Vec::new());
    for v in 0..nv {
        if new_id[v] == usize::MAX {
            continue;
        }
        out_coords.push(coords[v]);
        out_sides.push(sides[v]);
        measure.push(weight(coords[v][1]) * h * h);
        match role[v] {
            VertexRole::Interior => interior.push(new_id[v]),
            VertexRole::Boundary => boundary.push(new_id[v]),
            VertexRole::Absorbing => absorbing.push(new_id[v]),
        }
    }
    let mut edges = Vec::with_capacity(edge_set.len());
    for &(u, v) in &edge_set {
        let (a, b) = (new_id[u], new_id[v]);
        if a == usize::MAX || b == usize::MAX {
            continue;
        }
        if role[u] == VertexRole::Absorbing && role[v] == VertexRole::Absorbing {
            continue;
        }
        let c = 0.5 * (weight(coords[u][1]) + weight(coords[v][1]));
        edges.push((a.min(b), a.max(b), c));
    }
    edges.sort_by_key(|x| (x.0, x.1));
    let metric = if family == Family::SlitPlane { Metric::Slit } else { Metric::Euclidean };
    let mut g = DomainGraph::assemble(family, out_coords, out_sides, edges, measure, interior, boundary, absorbing, h, metric)?;
    g.truncation_radius = truncation;
    g.base_vertex = Some(new_id[base.1]);
    Ok(g)
}

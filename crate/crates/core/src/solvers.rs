//! Linear algebra used by every other module.
//!
//! Sparse symmetric positive-definite systems are factored once with an
//! envelope (profile) Cholesky under a reverse Cuthill-McKee ordering; lattice
//! Laplacians have envelopes of width `O(N)`, so factoring a `N x N` grid costs
//! `O(N^4)` flops and every subsequent solve `O(N^3)`. Systems whose envelope
//! would exceed [`SolverOptions::envelope_cap`] fall back to Jacobi
//! preconditioned conjugate gradients.
//!
//! Dense symmetric work (Schur complements, heat kernels) goes through
//! `nalgebra`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Environment variable overriding [`DEFAULT_SPECTRAL_CAP`].
pub const SPECTRAL_CAP_ENV: &str = "TRACELAB_SPECTRAL_CAP";
pub const DEFAULT_SPECTRAL_CAP: usize = 4000;

/// Largest dimension accepted by dense spectral routines.
pub fn spectral_cap() -> usize {
    std::env::var(SPECTRAL_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_SPECTRAL_CAP)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Required relative residual `|Ax - b| / |b|`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Maximum number of stored envelope entries before switching to CG.
    pub envelope_cap: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iterations: 50_000,
            envelope_cap: 60_000_000,
        }
    }
}

/// Symmetric sparse matrix. Stored with both triangles so that row access
/// and matrix-vector products are direct.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSymMatrix {
    /// Builds a matrix from upper-triangle entries `(i, j, value)` with `i <= j`.
    /// Repeated entries are summed.
    pub fn from_upper(dim: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for (i, j, v) in entries {
            assert!(i <= j && j < dim, "entry ({i}, {j}) outside upper triangle of {dim}");
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            *row = merged;
        }
        Self { dim, rows }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in i..n {
                if a[(i, j)] != 0.0 {
                    entries.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_upper(n, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(k) => self.rows[i][k].1,
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Principal submatrix on `indices` (in the given order).
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.dim];
        for (k, &i) in indices.iter().enumerate() {
            local[i] = k;
        }
        let mut entries = Vec::new();
        for (k, &i) in indices.iter().enumerate() {
            for &(j, v) in &self.rows[i] {
                let l = local[j];
                if l != usize::MAX && k <= l {
                    entries.push((k, l, v));
                }
            }
        }
        Self::from_upper(indices.len(), entries)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Reverse Cuthill-McKee ordering: `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseSymMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).iter().filter(|&&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut candidates: Vec<usize> = (0..n).collect();
    candidates.sort_by_key(|&i| (degree[i], i));
    for &seed in &candidates {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(a, seed, &degree);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a
                .row(v)
                .iter()
                .map(|&(j, _)| j)
                .filter(|&j| j != v && !visited[j])
                .collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(a: &SparseSymMatrix, start: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; a.dim()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &(j, _) in a.row(v) {
            if level[j] == usize::MAX {
                level[j] = level[v] + 1;
                queue.push_back(j);
            }
        }
    }
    level
}

fn pseudo_peripheral(a: &SparseSymMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut current = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let level = bfs_levels(a, current);
        let far = level.iter().filter(|&&l| l != usize::MAX).copied().max().unwrap_or(0);
        if far <= ecc && current != seed {
            break;
        }
        ecc = far;
        let next = (0..a.dim())
            .filter(|&i| level[i] == far)
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// `LDL^T` factor in envelope storage, rows in permuted order.
#[derive(Debug, Clone)]
struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    fn envelope_size(a: &SparseSymMatrix, perm: &[usize]) -> (Vec<usize>, Vec<usize>, usize) {
        let n = a.dim();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first = vec![0; n];
        for (i, &old) in perm.iter().enumerate() {
            first[i] = a.row(old).iter().map(|&(j, _)| inv[j]).filter(|&j| j <= i).min().unwrap_or(i);
        }
        let mut offset = vec![0; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let total = offset[n];
        (first, offset, total)
    }

    fn factor(a: &SparseSymMatrix, perm: Vec<usize>, first: Vec<usize>, offset: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut values = vec![0.0; offset[n]];
        for (i, &old) in perm.iter().enumerate() {
            for &(j, v) in a.row(old) {
                let jn = inv[j];
                if jn <= i {
                    values[offset[i] + jn - first[i]] = v;
                }
            }
        }
        // LDL^T: off-diagonal slots end up holding L (unit lower), the
        // diagonal slot holds D.
        for i in 0..n {
            let fi = first[i];
            let diag_scale = values[offset[i] + i - fi].abs();
            let (head, tail) = values.split_at_mut(offset[i]);
            let row_i = &mut tail[..i - fi + 1];
            // First pass: u_j = l_ij d_j.
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let row_j = &head[offset[j]..offset[j + 1]];
                let dot: f64 = row_i[lo - fi..j - fi]
                    .iter()
                    .zip(&row_j[lo - fj..j - fj])
                    .map(|(u, l)| u * l)
                    .sum();
                row_i[j - fi] -= dot;
            }
            let mut d = row_i[i - fi];
            for j in fi..i {
                let dj = head[offset[j] + j - first[j]];
                let u = row_i[j - fi];
                d -= u * u / dj;
                row_i[j - fi] = u / dj;
            }
            if !(d > 1e-13 * diag_scale) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: perm[i], value: d });
            }
            row_i[i - fi] = d;
        }
        Ok(Self { perm, first, offset, values })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(l, v)| l * v).sum();
            y[i] -= dot;
        }
        for i in 0..n {
            y[i] /= self.values[self.offset[i] + i - self.first[i]];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let yi = y[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[derive(Debug, Clone)]
enum Method {
    Direct(EnvelopeCholesky),
    Iterative { inv_diag: Vec<f64> },
}

/// A reusable solver for one SPD matrix.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    matrix: SparseSymMatrix,
    method: Method,
    opts: SolverOptions,
}

impl SpdSolver {
    pub fn new(matrix: SparseSymMatrix, opts: SolverOptions) -> Result<Self> {
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("solver tolerance must be positive, got {}", opts.tol)));
        }
        let diag = matrix.diagonal();
        if let Some((i, d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
            return Err(Error::NotPositiveDefinite { pivot: i, value: *d });
        }
        let perm = reverse_cuthill_mckee(&matrix);
        let (first, offset, size) = EnvelopeCholesky::envelope_size(&matrix, &perm);
        let method = if size <= opts.envelope_cap {
            Method::Direct(EnvelopeCholesky::factor(&matrix, perm, first, offset)?)
        } else {
            log::debug!("envelope of {size} entries exceeds cap, using conjugate gradients");
            Method::Iterative { inv_diag: diag.iter().map(|d| 1.0 / d).collect() }
        };
        Ok(Self { matrix, method, opts })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SparseSymMatrix {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.method, Method::Direct(_))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.dim(), "right-hand side has wrong length");
        let bnorm = norm(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        match &self.method {
            Method::Direct(chol) => {
                let mut x = chol.solve(b);
                let mut res = 0.0;
                // Iterative refinement; normally zero or one sweep.
                for _ in 0..4 {
                    let r: Vec<f64> = self.matrix.mul_vec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
                    res = norm(&r) / bnorm;
                    if res <= self.opts.tol {
                        return Ok(x);
                    }
                    let dx = chol.solve(&r);
                    x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
                }
                Err(Error::NoConvergence { iterations: 4, residual: res })
            }
            Method::Iterative { inv_diag } => pcg(&self.matrix, b, inv_diag, self.opts.tol, self.opts.max_iterations),
        }
    }

    /// Solves for several right-hand sides in parallel; output order matches input.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rhs.par_iter().map(|b| self.solve(b)).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn pcg(a: &SparseSymMatrix, b: &[f64], inv_diag: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut res = 1.0;
    for it in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: it, value: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r) / bnorm;
        if res <= tol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: res })
}

/// One-shot SPD solve with relative residual at most `tol`.
pub fn solve_spd(a: &SparseSymMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let opts = SolverOptions { tol, ..SolverOptions::default() };
    SpdSolver::new(a.clone(), opts)?.solve(b)
}

/// Schur complement `L_FF - L_FU L_UU^{-1} L_UF` of `l` onto `keep`,
/// eliminating `eliminate`. Computed one column at a time by solving against
/// the columns of `L_UF`; `L_UU^{-1}` is never formed.
pub fn schur_complement(
    l: &SparseSymMatrix,
    keep: &[usize],
    eliminate: &[usize],
    opts: SolverOptions,
) -> Result<DMatrix<f64>> {
    let nf = keep.len();
    let nu = eliminate.len();
    let mut local_u = vec![usize::MAX; l.dim()];
    for (k, &u) in eliminate.iter().enumerate() {
        local_u[u] = k;
    }
    let mut s = DMatrix::zeros(nf, nf);
    for (a, &fa) in keep.iter().enumerate() {
        for (b, &fb) in keep.iter().enumerate() {
            s[(a, b)] = l.get(fa, fb);
        }
    }
    if nu == 0 {
        return Ok(s);
    }
    let solver = SpdSolver::new(l.submatrix(eliminate), opts)?;
    // Column f of L_UF, kept sparse for the final product.
    let cols: Vec<Vec<(usize, f64)>> = keep
        .iter()
        .map(|&f| {
            l.row(f)
                .iter()
                .filter(|&&(j, _)| local_u[j] != usize::MAX)
                .map(|&(j, v)| (local_u[j], v))
                .collect()
        })
        .collect();
    let updates: Vec<Vec<f64>> = cols
        .par_iter()
        .map(|col| -> Result<Vec<f64>> {
            if col.is_empty() {
                return Ok(vec![0.0; nf]);
            }
            let mut rhs = vec![0.0; nu];
            for &(k, v) in col {
                rhs[k] = v;
            }
            let x = solver.solve(&rhs)?;
            Ok(cols
                .iter()
                .map(|row| row.iter().map(|&(k, v)| v * x[k]).sum::<f64>())
                .collect())
        })
        .collect::<Result<_>>()?;
    for (b, upd) in updates.iter().enumerate() {
        for a in 0..nf {
            s[(a, b)] -= upd[a];
        }
    }
    // Symmetrize rounding noise.
    let st = s.transpose();
    Ok((s + st) * 0.5)
}

/// Inverse of a small dense SPD matrix.
pub fn dense_spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { pivot: 0, value: f64::NAN })?;
    Ok(chol.inverse())
}

/// Role of a dense kernel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelRole {
    Green,
    Naim,
    SchurTrace,
    HeatKernel,
}

/// Dense symmetric matrix over a named vertex index set.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub role: KernelRole,
    /// Graph vertex id of each row/column.
    pub index: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }
}

/// Eigen-decomposition of `M^{-1/2} S M^{-1/2}` with `M = diag(weight)`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal columns, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub weight: DVector<f64>,
}

impl SpectralDecomposition {
    pub fn new(s: &DMatrix<f64>, weight: &[f64]) -> Result<Self> {
        let n = s.nrows();
        let cap = spectral_cap();
        if n > cap {
            return Err(Error::SpectralCap { dim: n, cap });
        }
        if weight.len() != n {
            return Err(Error::InvalidArgument("weight length does not match matrix".into()));
        }
        if let Some(w) = weight.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::InvalidArgument(format!("measure must be strictly positive, found {w}")));
        }
        let inv_sqrt: Vec<f64> = weight.iter().map(|w| 1.0 / w.sqrt()).collect();
        let mut a = s.clone();
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
        let sym = (&a + a.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (k, &i) in order.iter().enumerate() {
            eigenvectors.set_column(k, &eig.eigenvectors.column(i));
        }
        Ok(Self { eigenvalues, eigenvectors, weight: DVector::from_column_slice(weight) })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `exp(-t A)` for the symmetrized generator `A = M^{-1/2} S M^{-1/2}`.
    pub fn symmetric_exponential(&self, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for k in 0..n {
            let f = (-t * self.eigenvalues[k].max(0.0)).exp();
            scaled.column_mut(k).scale_mut(f);
        }
        &scaled * self.eigenvectors.transpose()
    }

    /// Transition density `exp(-t M^{-1} S)_{xy} / m(y)`.
    pub fn density(&self, t: f64) -> DMatrix<f64> {
        let mut p = self.symmetric_exponential(t);
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] /= (self.weight[i] * self.weight[j]).sqrt();
            }
        }
        p
    }
}

/// Heat kernel density of the generator `M^{-1} S` with respect to `mu`.
pub fn matrix_exponential_density(s: &DMatrix<f64>, mu: &[f64], t: f64) -> Result<DMatrix<f64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    Ok(SpectralDecomposition::new(s, mu)?.density(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> SparseSymMatrix {
        let mut e = Vec::new();
        for i in 0..n {
            let deg = if i == 0 || i + 1 == n { 1.0 } else { 2.0 };
            e.push((i, i, deg));
            if i + 1 < n {
                e.push((i, i + 1, -1.0));
            }
        }
        SparseSymMatrix::from_upper(n, e)
    }

    #[test]
    fn scalar_solve() {
        let a = SparseSymMatrix::from_upper(1, [(0, 0, 2.0)]);
        let x = solve_spd(&a, &[1.0], 1e-12).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn diagonal_cycle_block() {
        // 4-cycle with F = {0, 2}: L_UU = diag(2, 2).
        let a = SparseSymMatrix::from_upper(2, [(0, 0, 2.0), (1, 1, 2.0)]);
        let x = solve_spd(&a, &[1.0, 0.0], 1e-12).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1].abs() < 1e-15);
    }

    #[test]
    fn singular_laplacian_rejected() {
        let l = path_laplacian(5);
        assert!(matches!(SpdSolver::new(l, SolverOptions::default()), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn envelope_matches_cg() {
        // Grid Laplacian killed on one side.
        let n = 12;
        let id = |i: usize, j: usize| i * n + j;
        let mut e = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut deg = 0.0;
                for (di, dj) in [(0i64, 1i64), (1, 0), (0, -1), (-1, 0)] {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || b < 0 || b >= n as i64 {
                        continue;
                    }
                    deg += 1.0; // a == n is the Dirichlet row
                    if a < n as i64 && id(a as usize, b as usize) > id(i, j) {
                        e.push((id(i, j), id(a as usize, b as usize), -1.0));
                    }
                }
                e.push((id(i, j), id(i, j), deg));
            }
        }
        let a = SparseSymMatrix::from_upper(n * n, e);
        let b: Vec<f64> = (0..n * n).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        let direct = SpdSolver::new(a.clone(), SolverOptions::default()).unwrap();
        assert!(direct.is_direct());
        let cg = SpdSolver::new(a, SolverOptions { envelope_cap: 0, ..SolverOptions::default() }).unwrap();
        assert!(!cg.is_direct());
        let x1 = direct.solve(&b).unwrap();
        let x2 = cg.solve(&b).unwrap();
        let diff = x1.iter().zip(&x2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "diff {diff}");
    }

    #[test]
    fn schur_of_path_three() {
        let l = path_laplacian(3);
        let s = schur_complement(&l, &[0, 2], &[1], SolverOptions::default()).unwrap();
        let expect = [[0.5, -0.5], [-0.5, 0.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((s[(i, j)] - expect[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_generator_is_identity_density() {
        let s = DMatrix::zeros(3, 3);
        let p = matrix_exponential_density(&s, &[1.0; 3], 2.5).unwrap();
        assert!((p - DMatrix::identity(3, 3)).abs().max() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive_time() {
        let s = DMatrix::zeros(2, 2);
        assert!(matrix_exponential_density(&s, &[1.0; 2], 0.0).is_err());
    }

    #[test]
    fn rcm_is_a_permutation() {
        let l = path_laplacian(9);
        let mut p = reverse_cuthill_mckee(&l);
        p.sort();
        assert_eq!(p, (0..9).collect::<Vec<_>>());
    }
}

//! Library results against dense linear algebra and exact rational values.

mod common;

use common::*;
use nalgebra::DMatrix;
use tracelab::measures::{
    elliptic_from_hitting, elliptic_from_profile, harmonic_measure_from_green, harmonic_measure_with,
    harmonic_profile_with, hitting_columns, interior_green, BoundaryMeasure, MeasureRole,
};
use tracelab::montecarlo::{watched_generator_residual, watched_matrix};
use tracelab::naimtrace::{naim_kernel, trace_form, trace_schur};
use tracelab::potential::{capacity, green};
use tracelab::solvers::{solve_spd, SolverOptions, SparseSymMatrix, SpdSolver};
use tracelab::traceheat::{exit_time, TraceHeatKernel};

fn omega(g: &tracelab::DomainGraph, x0: usize) -> BoundaryMeasure {
    harmonic_measure_with(g, &interior_green(g).unwrap(), x0).unwrap()
}

// Exact values of the kite graph, computed in rational arithmetic.
const KITE_G: [[f64; 2]; 2] = [[7.0 / 34.0, 2.0 / 17.0], [2.0 / 17.0, 6.0 / 17.0]];
const KITE_OMEGA1: [f64; 3] = [7.0 / 34.0, 2.0 / 17.0, 23.0 / 34.0];
const KITE_S: [[f64; 3]; 3] = [
    [61.0 / 34.0, -19.0 / 17.0, -23.0 / 34.0],
    [-19.0 / 17.0, 28.0 / 17.0, -9.0 / 17.0],
    [-23.0 / 34.0, -9.0 / 17.0, 41.0 / 34.0],
];
const KITE_THETA: [[f64; 3]; 3] = [
    [34.0 / 7.0, 34.0 / 7.0, 34.0 / 7.0],
    [34.0 / 7.0, 51.0 / 2.0, 153.0 / 23.0],
    [34.0 / 7.0, 153.0 / 23.0, 2652.0 / 529.0],
];

#[test]
fn kite_green_function() {
    let g = kite();
    let gu = interior_green(&g).unwrap();
    for (i, &x) in [1usize, 2].iter().enumerate() {
        for (j, &y) in [1usize, 2].iter().enumerate() {
            assert!((gu.value(x, y).unwrap() - KITE_G[i][j]).abs() < 1e-15);
        }
    }
}

#[test]
fn kite_harmonic_measure_both_routes() {
    let g = kite();
    let gu = interior_green(&g).unwrap();
    let hit = harmonic_measure_with(&g, &gu, 1).unwrap();
    let flux = harmonic_measure_from_green(&g, &gu, 1).unwrap();
    for k in 0..3 {
        assert!((hit.values[k] - KITE_OMEGA1[k]).abs() < 1e-15);
        assert!((flux.values[k] - KITE_OMEGA1[k]).abs() < 1e-15);
    }
}

#[test]
fn kite_trace_and_naim() {
    let g = kite();
    let s = trace_schur(&g, SolverOptions::default()).unwrap();
    let gu = interior_green(&g).unwrap();
    let nk = naim_kernel(&g, &gu, 1).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((s[(i, j)] - KITE_S[i][j]).abs() < 1e-14, "S[{i},{j}]");
            assert!((nk.theta[(i, j)] - KITE_THETA[i][j]).abs() < 1e-12 * KITE_THETA[i][j], "theta[{i},{j}]");
        }
    }
    // The adjacent pair (0, 3) carries its direct unit edge on top of the Naim part.
    let direct = g.conductance(0, 3);
    assert_eq!(direct, 1.0);
    let q = nk.omega[0] * nk.omega[1] * nk.theta[(0, 1)];
    assert!((-s[(0, 1)] - direct - q).abs() < 1e-14);
}

#[test]
fn small_graph_naim_values() {
    let p3 = path3();
    let nk = naim_kernel(&p3, &interior_green(&p3).unwrap(), 1).unwrap();
    assert!((nk.theta[(0, 1)] - 2.0).abs() < 1e-15);
    assert!((nk.omega[0] - 0.5).abs() < 1e-15);

    let c4 = cycle4();
    let nk = naim_kernel(&c4, &interior_green(&c4).unwrap(), 1).unwrap();
    assert!((nk.theta[(0, 1)] - 4.0).abs() < 1e-14);

    let s3 = star3();
    let nk = naim_kernel(&s3, &interior_green(&s3).unwrap(), 0).unwrap();
    assert!((nk.theta[(0, 2)] - 3.0).abs() < 1e-14);
    assert!((nk.omega[1] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn green_matches_dense_inverse() {
    for seed in 0..10 {
        let g = random_graph(seed, 40, seed % 2 == 0, 0);
        let dense = dense_green(&g);
        let gu = interior_green(&g).unwrap();
        let m = gu.matrix().unwrap();
        assert!((m - &dense).amax() / dense.amax() < 1e-12, "seed {seed}");
    }
}

#[test]
fn hitting_matches_dense_dirichlet_solve() {
    for seed in 0..8 {
        let g = random_graph(100 + seed, 35, true, 0);
        let l = dense_laplacian(&g);
        let (u, f) = (g.interior(), g.boundary());
        // Dirichlet problem L_UU H = -L_UF: row x of H is omega_x.
        let h = block(&l, u, u).lu().solve(&(-block(&l, u, f))).unwrap();
        let x0 = u[u.len() / 2];
        let om = omega(&g, x0);
        let row: Vec<f64> = h.row(u.len() / 2).iter().copied().collect();
        assert!(max_rel(&om.values, &row) < 1e-12);
    }
}

#[test]
fn schur_matches_dense_formula() {
    for seed in 0..8 {
        let g = random_graph(200 + seed, 50, seed % 2 == 1, 2);
        let s = trace_schur(&g, SolverOptions::default()).unwrap();
        let dense = dense_schur(&g);
        assert!((s - &dense).amax() / dense.amax() < 1e-12, "seed {seed}");
    }
}

#[test]
fn iterative_and_direct_solvers_agree() {
    let g = random_graph(7, 60, false, 0);
    let l = g.killed_generator(g.interior());
    let b: Vec<f64> = (0..l.dim()).map(|i| (i as f64).sin()).collect();
    let direct = SpdSolver::new(l.clone(), SolverOptions::default()).unwrap();
    assert!(direct.is_direct());
    let cg_only = SolverOptions { envelope_cap: 0, ..SolverOptions::default() };
    let iterative = SpdSolver::new(l.clone(), cg_only).unwrap();
    assert!(!iterative.is_direct());
    let x1 = direct.solve(&b).unwrap();
    let x2 = iterative.solve(&b).unwrap();
    let x3 = solve_spd(&l, &b, 1e-13).unwrap();
    let dense = l.to_dense().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
    let d: Vec<f64> = dense.iter().copied().collect();
    assert!(max_rel(&x1, &d) < 1e-12);
    assert!(max_rel(&x2, &d) < 1e-10);
    assert!(max_rel(&x3, &d) < 1e-12);
}

#[test]
fn sparse_round_trip_through_dense() {
    let a = DMatrix::from_row_slice(3, 3, &[4.0, -1.0, 0.0, -1.0, 4.0, -2.0, 0.0, -2.0, 5.0]);
    let s = SparseSymMatrix::from_dense(&a);
    assert_eq!(s.to_dense(), a);
    assert_eq!(s.get(1, 2), -2.0);
    assert_eq!(s.diagonal(), vec![4.0, 4.0, 5.0]);
}

#[test]
fn heat_kernel_matches_matrix_exponential() {
    for seed in 0..4 {
        let g = random_graph(300 + seed, 30, true, 0);
        let mu = omega(&g, g.interior()[0]);
        let tf = trace_form(&g, &mu).unwrap();
        let hk = TraceHeatKernel::new(&tf).unwrap();
        let n = mu.values.len();
        // Generator M^{-1} S; p_t(x, y) = exp(-t M^{-1} S)(x, y) / mu(y).
        let minv_s = DMatrix::from_fn(n, n, |i, j| tf.s[(i, j)] / mu.values[i]);
        for t in [0.05, 0.5, 3.0] {
            let e = (-minv_s.clone() * t).exp();
            let oracle = DMatrix::from_fn(n, n, |i, j| e[(i, j)] / mu.values[j]);
            let p = hk.slice(t).unwrap().density;
            assert!((p - &oracle).amax() / oracle.amax() < 1e-9, "seed {seed} t {t}");
        }
    }
}

#[test]
fn exit_time_matches_dense_solve() {
    let g = path3();
    let mu = BoundaryMeasure { role: MeasureRole::Reference, values: vec![0.5, 0.5], base_point: None };
    let tf = trace_form(&g, &mu).unwrap();
    // Killed on {2}: S restricted to {0} is 1/2, so E[tau] = mu(0) / (1/2) = 1.
    assert!((exit_time(&g, &tf, 0, 1.0).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn watched_chain_matches_schur() {
    for seed in 0..5 {
        let g = random_graph(400 + seed, 45, true, 0);
        let gu = interior_green(&g).unwrap();
        let ph = watched_matrix(&g, &gu).unwrap();
        let s = dense_schur(&g);
        assert!(watched_generator_residual(&g, &ph, &s) < 1e-12);
        for i in 0..ph.nrows() {
            let total: f64 = ph.row(i).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn capacity_of_a_series_chain() {
    // Path 0-1-2-3-4 with conductances 1, 2, 3, 4; A = {0}, D = {0, 1, 2, 3}:
    // effective conductance 1 / (1 + 1/2 + 1/3 + 1/4) = 12/25.
    let coords = (0..5).map(|i| [i as f64, 0.0]).collect();
    let edges = vec![(0, 1, 1.0), (1, 2, 2.0), (2, 3, 3.0), (3, 4, 4.0)];
    let g = tracelab::DomainGraph::from_parts(coords, edges, vec![1.0; 5], vec![0, 1, 2, 3], vec![4], vec![], 1.0)
        .unwrap();
    let eq = capacity(&g, &[0], &[0, 1, 2, 3]).unwrap();
    assert!((eq.capacity - 12.0 / 25.0).abs() < 1e-15);
    assert!((eq.inner_mass() - 12.0 / 25.0).abs() < 1e-14);
    assert!((eq.outer_mass() - 12.0 / 25.0).abs() < 1e-14);
    // Green of D at 0 is the effective resistance 25/12.
    assert!((green(&g, &[0, 1, 2, 3]).unwrap().value(0, 0).unwrap() - 25.0 / 12.0).abs() < 1e-13);
}

#[test]
fn elliptic_measure_two_routes_on_random_graphs() {
    for seed in 0..6 {
        let g = random_graph(500 + seed, 40, false, 3);
        let gu = interior_green(&g).unwrap();
        let x0 = g.interior()[0];
        let h = harmonic_profile_with(&g, &gu, x0).unwrap();
        let nu = elliptic_from_profile(&g, &h);
        let cols = hitting_columns(&g, &gu).unwrap();
        let alt = elliptic_from_hitting(&g, &gu, &cols, &h);
        assert!(max_rel(&nu.values, &alt.values) < 1e-12);
        // kappa = escape * nu on every boundary vertex.
        let tf = trace_form(&g, &nu).unwrap();
        for k in 0..nu.values.len() {
            assert!((tf.kappa[k] - h.escape_probability * nu.values[k]).abs() < 1e-12 * tf.s.amax());
        }
    }
}

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracelab::DomainGraph;

/// Random connected weighted graph: a random tree on the interior plus extra
/// interior edges; every boundary vertex gets 1-3 interior neighbors.
/// `adjacent` adds boundary-boundary edges; `absorbing` adds that many
/// absorbing vertices hanging off the interior.
pub fn random_graph(seed: u64, n: usize, adjacent: bool, absorbing: usize) -> DomainGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.random_range(2..=(n / 3).max(2));
    let ni = n - nb - absorbing;
    assert!(ni >= 1);
    let interior: Vec<usize> = (0..ni).collect();
    let boundary: Vec<usize> = (ni..ni + nb).collect();
    let absorb: Vec<usize> = (ni + nb..n).collect();
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut add = |u: usize, v: usize, c: f64, edges: &mut Vec<(usize, usize, f64)>| {
        let key = (u.min(v), u.max(v));
        if u != v && seen.insert(key) {
            edges.push((key.0, key.1, c));
        }
    };
    for v in 1..ni {
        let u = rng.random_range(0..v);
        let c = rng.random_range(0.1..10.0);
        add(u, v, c, &mut edges);
    }
    for _ in 0..ni {
        let (u, v) = (rng.random_range(0..ni), rng.random_range(0..ni));
        let c = rng.random_range(0.1..10.0);
        add(u, v, c, &mut edges);
    }
    for &b in &boundary {
        for _ in 0..rng.random_range(1..=3) {
            let u = rng.random_range(0..ni);
            let c = rng.random_range(0.1..10.0);
            add(u, b, c, &mut edges);
        }
    }
    if adjacent {
        for k in 0..nb {
            if rng.random_bool(0.5) {
                let j = rng.random_range(0..nb);
                let c = rng.random_range(0.1..10.0);
                add(boundary[k], boundary[j], c, &mut edges);
            }
        }
    }
    for &a in &absorb {
        let u = rng.random_range(0..ni);
        add(u, a, rng.random_range(0.1..10.0), &mut edges);
    }
    let coords = (0..n).map(|i| [i as f64, 0.0]).collect();
    let measure = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    DomainGraph::from_parts(coords, edges, measure, interior, boundary, absorb, 1.0).unwrap()
}

pub fn path3() -> DomainGraph {
    DomainGraph::from_parts(
        vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
        vec![(0, 1, 1.0), (1, 2, 1.0)],
        vec![1.0; 3],
        vec![1],
        vec![0, 2],
        vec![],
        1.0,
    )
    .unwrap()
}

/// 4-cycle with opposite boundary vertices 0 and 2.
pub fn cycle4() -> DomainGraph {
    DomainGraph::from_parts(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)],
        vec![1.0; 4],
        vec![1, 3],
        vec![0, 2],
        vec![],
        1.0,
    )
    .unwrap()
}

/// Star with interior center 0 and three boundary leaves.
pub fn star3() -> DomainGraph {
    DomainGraph::from_parts(
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]],
        vec![(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)],
        vec![1.0; 4],
        vec![0],
        vec![1, 2, 3],
        vec![],
        1.0,
    )
    .unwrap()
}

/// Interior {1, 2}, boundary {0, 3, 4}, rational conductances and one
/// boundary-boundary edge.
pub fn kite() -> DomainGraph {
    DomainGraph::from_parts(
        vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [1.5, 1.0]],
        vec![(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.0), (1, 4, 3.0), (2, 4, 0.5), (0, 3, 1.0)],
        vec![1.0; 5],
        vec![1, 2],
        vec![0, 3, 4],
        vec![],
        1.0,
    )
    .unwrap()
}

/// Dense full Laplacian `D - C`.
pub fn dense_laplacian(g: &DomainGraph) -> DMatrix<f64> {
    let n = g.vertex_count();
    let mut l = DMatrix::zeros(n, n);
    for &(u, v, c) in g.edges() {
        l[(u, v)] -= c;
        l[(v, u)] -= c;
        l[(u, u)] += c;
        l[(v, v)] += c;
    }
    l
}

pub fn block(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// `(L_UU)^{-1}` by dense LU.
pub fn dense_green(g: &DomainGraph) -> DMatrix<f64> {
    let l = dense_laplacian(g);
    block(&l, g.interior(), g.interior()).lu().try_inverse().expect("invertible")
}

/// `L_FF - L_FU L_UU^{-1} L_UF` by dense LU.
pub fn dense_schur(g: &DomainGraph) -> DMatrix<f64> {
    let l = dense_laplacian(g);
    let (u, f) = (g.interior(), g.boundary());
    let x = block(&l, u, u).lu().solve(&block(&l, u, f)).expect("invertible");
    block(&l, f, f) - block(&l, f, u) * x
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

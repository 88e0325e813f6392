//! Jump conductances of the boundary trace against the Naim kernel on a
//! small graph with one boundary-boundary edge.

use tracelab::measures::{harmonic_measure_with, interior_green};
use tracelab::naimtrace::{doob_naim_verify, naim_kernel, trace_form};
use tracelab::DomainGraph;

fn main() -> tracelab::Result<()> {
    let g = DomainGraph::from_parts(
        vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [1.5, 1.0]],
        vec![(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.0), (1, 4, 3.0), (2, 4, 0.5), (0, 3, 1.0)],
        vec![1.0; 5],
        vec![1, 2],
        vec![0, 3, 4],
        vec![],
        1.0,
    )?;
    let gu = interior_green(&g)?;
    let x0 = 1;
    let omega = harmonic_measure_with(&g, &gu, x0)?;
    let tf = trace_form(&g, &omega)?;
    let nk = naim_kernel(&g, &gu, x0)?;
    println!("omega_x0 = {:?}", omega.values);
    let f = g.boundary();
    for i in 0..f.len() {
        for j in i + 1..f.len() {
            println!(
                "c_hat({}, {}) = {:.6}  direct {:.1}  omega*omega*Theta = {:.6}",
                f[i],
                f[j],
                tf.c_hat[(i, j)],
                g.conductance(f[i], f[j]),
                nk.omega[i] * nk.omega[j] * nk.theta[(i, j)]
            );
        }
    }
    let report = doob_naim_verify(&g, &tf, &nk, Some(&naim_kernel(&g, &gu, 2)?), 1e-12);
    println!("max deviation {:.2e}, pass {}", report.max_ratio, report.pass);
    Ok(())
}

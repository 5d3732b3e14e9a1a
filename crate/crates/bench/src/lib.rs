//! Instances shared by the criterion benchmarks under `benches/`.

use tokenprop::gen::{gen_random_csp, gen_random_ksat, gen_random_qcol, random_assignment};
use tokenprop::FactorGraph;

/// Planted random 3-SAT with `n` variables at clause density `alpha`.
pub fn ksat(n: usize, alpha: f64, seed: u64) -> FactorGraph {
    let m = (alpha * n as f64).round() as usize;
    let plant = random_assignment(n, 2, seed);
    gen_random_ksat(n, m, 3, seed, Some(&plant)).expect("valid parameters").graph
}

/// Planted random 3-coloring with `n` vertices and `2n` edges.
pub fn col3(n: usize, seed: u64) -> FactorGraph {
    let plant = random_assignment(n, 3, seed);
    gen_random_qcol(n, 2 * n, 3, seed, Some(&plant)).expect("valid parameters").graph
}

/// Planted random ternary CSP with arities two to three.
pub fn csp(n: usize, seed: u64) -> FactorGraph {
    let plant = random_assignment(n, 3, seed);
    gen_random_csp(n, n, 3, 2, 3, 0.5, seed, Some(&plant)).expect("valid parameters").graph
}

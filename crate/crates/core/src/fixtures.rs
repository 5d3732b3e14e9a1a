//! Small hand-built instances used by tests, benchmarks and the CLI.
//!
//! Coordinates and symbols are 0-indexed throughout.

use crate::graph::{build_ksat_with, build_qcol_with, Constraint, DegreePolicy, FactorGraph};

/// The five-variable, three-clause formula
/// `(x1 ∨ ¬x2 ∨ ¬x4) ∧ (x1 ∨ x3 ∨ ¬x5) ∧ (x2 ∨ x4 ∨ x5)`, with `x_i` mapped
/// to coordinate `i - 1`. Coordinate 2 appears in a single clause, so the
/// graph is built with [`DegreePolicy::AllowLow`].
pub fn toy_3sat() -> FactorGraph {
    let clauses = vec![vec![(0, 1), (1, 0), (3, 0)], vec![(0, 1), (2, 1), (4, 0)], vec![(1, 1), (3, 1), (4, 1)]];
    build_ksat_with(&clauses, 5, DegreePolicy::AllowLow).expect("valid fixture")
}

/// DIMACS text of [`toy_3sat`].
pub const TOY_3SAT_DIMACS: &str = "c toy formula\np cnf 5 3\n1 -2 -4 0\n1 3 -5 0\n2 4 5 0\n";

/// A triangle on vertices 0, 1, 2 with a pendant vertex 3 attached to 2,
/// as a q-coloring instance. Vertex 3 has degree one.
pub fn triangle_with_tail(q: usize) -> FactorGraph {
    build_qcol_with(&[(0, 1), (0, 2), (1, 2), (2, 3)], q, 4, DegreePolicy::AllowLow).expect("valid fixture")
}

/// Edge-list text of [`triangle_with_tail`] with 1-indexed vertices.
pub const TRIANGLE_WITH_TAIL_EDGES: &str = "# triangle with a pendant vertex\n1 2\n1 3\n2 3\n3 4\n";

/// Ternary-alphabet instance on a triangle `(v, u, w) = (0, 1, 2)` whose
/// first constraint is not locally compatible.
///
/// * constraint 0 on `(v, u)`: `{(0,0), (0,1), (1,2), (2,2)}`
/// * constraint 1 on `(u, w)`: `{(0,0), (1,1), (2,1)}`
/// * constraint 2 on `(v, w)`: the "different colors" relation
///
/// The largest token forceable on `u` by constraint 1 is `{0,1,2}`, while
/// forcing `{0}` on `v` through constraint 0 leaves only `{0,1}` on `u`.
/// Constraint 2 only exists to give every coordinate degree two; a
/// coloring constraint forces the full token from any non-singleton side,
/// so it does not hide the incompatibility.
pub fn incompatible_triangle() -> FactorGraph {
    let c0 = Constraint::new(vec![0, 1], vec![vec![0, 0], vec![0, 1], vec![1, 2], vec![2, 2]]).expect("valid");
    let c1 = Constraint::new(vec![1, 2], vec![vec![0, 0], vec![1, 1], vec![2, 1]]).expect("valid");
    let diff = (0..3u8).flat_map(|a| (0..3u8).filter(move |&b| b != a).map(move |b| vec![a, b])).collect();
    let c2 = Constraint::new(vec![0, 2], diff).expect("valid");
    FactorGraph::new(3, 3, vec![c0, c1, c2], DegreePolicy::Strict).expect("valid fixture")
}

/// The unique satisfying assignment of [`unique_solution_cycle`].
pub const UNIQUE_SOLUTION: [u8; 5] = [0, 1, 1, 2, 0];

/// Ternary-alphabet CSP on a cycle of five coordinates and five binary
/// constraints with exactly one solution, [`UNIQUE_SOLUTION`].
///
/// Around coordinate 0 the radius-4 neighbourhood is a tree whose own
/// constraints already pin coordinate 0 to symbol 0, while every radius-2
/// neighbourhood leaves at least two symbols open at its centre.
pub fn unique_solution_cycle() -> FactorGraph {
    let rel = |scope: [usize; 2], tuples: &[[u8; 2]]| {
        Constraint::new(scope.to_vec(), tuples.iter().map(|t| t.to_vec()).collect()).expect("valid")
    };
    let cs = vec![
        rel([0, 1], &[[0, 0], [0, 1], [1, 2], [2, 2]]),
        rel([1, 2], &[[0, 0], [1, 1], [1, 2]]),
        rel([3, 2], &[[0, 0], [0, 2], [1, 1], [1, 2], [2, 1]]),
        rel([4, 3], &[[0, 2], [1, 0], [1, 1]]),
        rel([0, 4], &[[0, 0], [0, 2], [1, 0], [1, 1], [2, 2]]),
    ];
    FactorGraph::new(3, 5, cs, DegreePolicy::Strict).expect("valid fixture")
}

/// Three coordinates and two clauses over all of them:
/// `(x0 ∨ x1 ∨ ¬x2) ∧ (¬x0 ∨ x1 ∨ x2)`.
pub fn two_clause_3sat() -> FactorGraph {
    let clauses = vec![vec![(0, 1), (1, 1), (2, 0)], vec![(0, 0), (1, 1), (2, 1)]];
    build_ksat_with(&clauses, 3, DegreePolicy::Strict).expect("valid fixture")
}

/// Two coordinates forced to be both equal and different, which no
/// assignment satisfies.
pub fn unsat_pair() -> FactorGraph {
    let eq = Constraint::new(vec![0, 1], vec![vec![0, 0], vec![1, 1]]).expect("valid");
    let ne = Constraint::new(vec![0, 1], vec![vec![0, 1], vec![1, 0]]).expect("valid");
    FactorGraph::new(2, 2, vec![eq, ne], DegreePolicy::Strict).expect("valid fixture")
}

//! Seeded random instance generators.
//!
//! Every generator redraws the whole instance until each coordinate has
//! degree at least two, so results are valid under the strict policy.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_ksat, build_qcol, Constraint, DegreePolicy, FactorGraph};

/// Maximum number of whole-instance redraws before giving up.
const MAX_ATTEMPTS: usize = 10_000;

/// Descriptive metadata attached to generated instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub family: String,
    pub n: usize,
    pub m: usize,
    /// Clause length or constraint arity where uniform.
    pub k: Option<usize>,
    /// Constraint density `m / n`.
    pub alpha: f64,
    pub seed: u64,
    pub planted: Option<Vec<u8>>,
}

/// A generated graph together with its metadata.
#[derive(Debug, Clone)]
pub struct Generated {
    pub graph: FactorGraph,
    pub meta: InstanceMeta,
}

/// Seeded RNG used by every generator and engine in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random assignment over `q` symbols.
pub fn random_assignment(n: usize, q: usize, seed: u64) -> Vec<u8> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.gen_range(0..q as u8)).collect()
}

fn min_degree_ok(n: usize, scopes: impl Iterator<Item = usize>) -> bool {
    let mut deg = vec![0usize; n];
    for v in scopes {
        deg[v] += 1;
    }
    deg.iter().all(|&d| d >= 2)
}

/// Random k-SAT with `m` clauses of `k` distinct uniformly drawn
/// coordinates and uniform signs. With a planted assignment, clauses it
/// violates are redrawn, so the result is satisfiable by construction.
pub fn gen_random_ksat(n: usize, m: usize, k: usize, seed: u64, planted: Option<&[u8]>) -> Result<Generated> {
    if k < 2 || k > n {
        return Err(Error::ParamError(format!("clause length {k} needs 2 <= k <= n = {n}")));
    }
    if m * k < 2 * n {
        return Err(Error::ParamError(format!("{m} clauses of length {k} cannot give {n} coordinates degree 2")));
    }
    if let Some(p) = planted {
        if p.len() != n || p.iter().any(|&x| x > 1) {
            return Err(Error::ParamError("planted assignment must be n binary values".into()));
        }
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut clauses = Vec::with_capacity(m);
        while clauses.len() < m {
            let vars = sample(&mut rng, n, k).into_vec();
            let clause: Vec<(usize, u8)> = vars.into_iter().map(|v| (v, rng.gen_range(0..2u8))).collect();
            if planted.is_some_and(|p| clause.iter().all(|&(v, l)| p[v] != l)) {
                continue;
            }
            clauses.push(clause);
        }
        if min_degree_ok(n, clauses.iter().flatten().map(|&(v, _)| v)) {
            let graph = build_ksat(&clauses, n)?;
            let meta = InstanceMeta {
                family: "ksat".into(),
                n,
                m,
                k: Some(k),
                alpha: m as f64 / n as f64,
                seed,
                planted: planted.map(|p| p.to_vec()),
            };
            return Ok(Generated { graph, meta });
        }
    }
    Err(Error::ParamError("could not reach minimum degree 2; parameters look infeasible".into()))
}

/// Random q-coloring instance with `m` distinct edges on `n` vertices.
/// With a planted coloring, monochromatic edges are redrawn.
pub fn gen_random_qcol(n: usize, m: usize, q: usize, seed: u64, planted: Option<&[u8]>) -> Result<Generated> {
    if n < 3 || m > n * (n - 1) / 2 || m < n {
        return Err(Error::ParamError(format!("{m} edges on {n} vertices cannot give every vertex degree 2")));
    }
    if let Some(p) = planted {
        if p.len() != n || p.iter().any(|&x| x as usize >= q) {
            return Err(Error::ParamError("planted coloring must be n symbols below q".into()));
        }
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut seen = std::collections::HashSet::new();
        let mut edges = Vec::with_capacity(m);
        let mut tries = 0usize;
        while edges.len() < m && tries < 100 * m + 1000 {
            tries += 1;
            let pair = sample(&mut rng, n, 2).into_vec();
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if planted.is_some_and(|p| p[u] == p[v]) || !seen.insert((u, v)) {
                continue;
            }
            edges.push((u, v));
        }
        if edges.len() == m && min_degree_ok(n, edges.iter().flat_map(|&(u, v)| [u, v])) {
            let graph = build_qcol(&edges, q)?;
            let meta = InstanceMeta {
                family: "qcol".into(),
                n,
                m,
                k: Some(2),
                alpha: m as f64 / n as f64,
                seed,
                planted: planted.map(|p| p.to_vec()),
            };
            return Ok(Generated { graph, meta });
        }
    }
    Err(Error::ParamError("could not draw a valid coloring instance; parameters look infeasible".into()))
}

/// Random relation over `arity` coordinates: every tuple is kept with
/// probability `density`, the `keep` tuple (if any) always.
fn random_relation(rng: &mut ChaCha8Rng, q: usize, arity: usize, density: f64, keep: Option<&[u8]>) -> Vec<Vec<u8>> {
    loop {
        let total = q.pow(arity as u32);
        let mut out = Vec::new();
        for mut idx in 0..total {
            let mut t = vec![0u8; arity];
            for slot in t.iter_mut().rev() {
                *slot = (idx % q) as u8;
                idx /= q;
            }
            if keep == Some(&t[..]) || rng.gen_bool(density) {
                out.push(t);
            }
        }
        if !out.is_empty() {
            return out;
        }
    }
}

/// Random CSP with `m` constraints whose arities are drawn uniformly from
/// `arity_min..=arity_max` and whose relations keep each tuple with
/// probability `density`. A planted assignment is always kept.
#[allow(clippy::too_many_arguments)]
pub fn gen_random_csp(
    n: usize,
    m: usize,
    q: usize,
    arity_min: usize,
    arity_max: usize,
    density: f64,
    seed: u64,
    planted: Option<&[u8]>,
) -> Result<Generated> {
    if arity_min < 2 || arity_max < arity_min || arity_max > n || !(0.0..=1.0).contains(&density) {
        return Err(Error::ParamError("invalid arity range or density".into()));
    }
    if m * arity_max < 2 * n {
        return Err(Error::ParamError("too few constraints to give every coordinate degree 2".into()));
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..MAX_ATTEMPTS {
        let scopes: Vec<Vec<usize>> = (0..m)
            .map(|_| {
                let a = rng.gen_range(arity_min..=arity_max);
                sample(&mut rng, n, a).into_vec()
            })
            .collect();
        if !min_degree_ok(n, scopes.iter().flatten().copied()) {
            continue;
        }
        let mut cs = Vec::with_capacity(m);
        for scope in scopes {
            let keep: Option<Vec<u8>> = planted.map(|p| scope.iter().map(|&v| p[v]).collect());
            let rel = random_relation(&mut rng, q, scope.len(), density, keep.as_deref());
            cs.push(Constraint::new(scope, rel)?);
        }
        let graph = FactorGraph::new(q, n, cs, DegreePolicy::Strict)?;
        let meta = InstanceMeta {
            family: "csp".into(),
            n,
            m,
            k: (arity_min == arity_max).then_some(arity_min),
            alpha: m as f64 / n as f64,
            seed,
            planted: planted.map(|p| p.to_vec()),
        };
        return Ok(Generated { graph, meta });
    }
    Err(Error::ParamError("could not reach minimum degree 2; parameters look infeasible".into()))
}

/// Random instance in which the radius-`2l` neighbourhood of coordinate 0
/// is a tree with every leaf at depth exactly `2l`.
///
/// The tree is grown breadth-first: coordinates inside the ball receive one
/// or two child constraints (coordinate 0 receives two or three), each of
/// arity two or three. The leaves are then closed off in pairs (one triple
/// when their number is odd) by constraints lying outside the ball, which
/// restores degree two everywhere.
pub fn gen_tree_instance(q: usize, l: usize, density: f64, seed: u64) -> Result<Generated> {
    if l == 0 {
        return Err(Error::ParamError("tree depth must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut n = 1usize;
    let mut scopes: Vec<Vec<usize>> = Vec::new();
    let mut frontier = vec![0usize];
    for depth in 0..l {
        let mut next = Vec::new();
        for &v in &frontier {
            let children = if depth == 0 {
                rng.gen_range(2..=3)
            } else if rng.gen_bool(0.8) {
                1
            } else {
                2
            };
            for _ in 0..children {
                let arity = if rng.gen_bool(0.7) { 2 } else { 3 };
                let mut scope = vec![v];
                for _ in 1..arity {
                    scope.push(n);
                    next.push(n);
                    n += 1;
                }
                scopes.push(scope);
            }
        }
        frontier = next;
    }
    let mut leaves = frontier;
    leaves.shuffle(&mut rng);
    let mut groups: Vec<Vec<usize>> = leaves.chunks(2).map(|c| c.to_vec()).collect();
    if groups.last().is_some_and(|g| g.len() == 1) {
        let lone = groups.pop().expect("nonempty")[0];
        groups.last_mut().expect("at least two leaves").push(lone);
    }
    scopes.extend(groups);
    let m = scopes.len();
    let cs = scopes
        .into_iter()
        .map(|scope| {
            let rel = random_relation(&mut rng, q, scope.len(), density, None);
            Constraint::new(scope, rel)
        })
        .collect::<Result<Vec<_>>>()?;
    let graph = FactorGraph::new(q, n, cs, DegreePolicy::Strict)?;
    let meta = InstanceMeta { family: "tree".into(), n, m, k: None, alpha: m as f64 / n as f64, seed, planted: None };
    Ok(Generated { graph, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_ksat_is_satisfied_by_plant() {
        let plant = random_assignment(60, 2, 7);
        let g = gen_random_ksat(60, 180, 3, 7, Some(&plant)).unwrap();
        assert!(g.graph.satisfies(&plant).unwrap());
        assert_eq!(g.graph.n_constraints(), 180);
        assert!((g.meta.alpha - 3.0).abs() < 1e-12);
        assert!((0..60).all(|v| g.graph.degree(v) >= 2));
    }

    #[test]
    fn ksat_seed_determinism() {
        let a = gen_random_ksat(30, 120, 3, 11, None).unwrap();
        let b = gen_random_ksat(30, 120, 3, 11, None).unwrap();
        assert_eq!(a.graph, b.graph);
        let c = gen_random_ksat(30, 120, 3, 12, None).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn infeasible_parameters() {
        assert!(gen_random_ksat(10, 3, 3, 0, None).is_err());
        assert!(gen_random_ksat(2, 10, 3, 0, None).is_err());
        assert!(gen_random_qcol(10, 4, 3, 0, None).is_err());
    }

    #[test]
    fn planted_coloring() {
        let plant = random_assignment(12, 3, 3);
        let g = gen_random_qcol(12, 20, 3, 3, Some(&plant)).unwrap();
        assert!(g.graph.is_qcol());
        assert!(g.graph.satisfies(&plant).unwrap());
    }

    #[test]
    fn planted_csp() {
        let plant = random_assignment(15, 3, 5);
        let g = gen_random_csp(15, 14, 3, 2, 3, 0.4, 5, Some(&plant)).unwrap();
        assert!(g.graph.satisfies(&plant).unwrap());
    }

    #[test]
    fn tree_instance_degrees() {
        for l in 1..=3 {
            let g = gen_tree_instance(2, l, 0.6, l as u64).unwrap();
            assert!((0..g.graph.n_vars()).all(|v| g.graph.degree(v) >= 2));
        }
    }
}

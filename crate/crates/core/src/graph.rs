//! Constraints, factor graphs, rectangles and the problem builders.
//!
//! Constraints are stored extensionally as an explicit list of satisfying
//! tuples over an ordered scope. Edges of the factor graph are numbered
//! constraint by constraint, following scope order, so the edge set of
//! constraint `c` is a contiguous range and message vectors can be indexed
//! by [`EdgeId`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::{Alphabet, Token};

/// Index of a factor-graph edge `(v, c)`.
pub type EdgeId = usize;

/// One edge of the factor graph: coordinate `var` sits at position `pos`
/// of the scope of constraint `con`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub var: usize,
    pub con: usize,
    pub pos: usize,
}

/// Direction of a message along an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Left message `v -> c`.
    VarToCon,
    /// Right message `c -> v`.
    ConToVar,
}

/// A directed edge, printed as `v3->c7` or `c7->v3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub var: usize,
    pub con: usize,
    pub dir: Direction,
}

impl fmt::Display for DirectedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dir {
            Direction::VarToCon => write!(f, "v{}->c{}", self.var, self.con),
            Direction::ConToVar => write!(f, "c{}->v{}", self.con, self.var),
        }
    }
}

/// How builders treat coordinates that appear in fewer than two constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreePolicy {
    /// Reject with [`Error::DegreeViolation`].
    #[default]
    Strict,
    /// Accept. Used for small illustrative instances and for residual
    /// instances produced during decimation.
    AllowLow,
}

/// Broad problem family, used to gate closed-form accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Every constraint is a clause and edge labels are present.
    KSat,
    /// Every constraint is a binary "different symbols" constraint.
    QCol,
    /// Anything else.
    General,
}

/// A constraint: an ordered scope and the explicit set of satisfying tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    scope: Vec<usize>,
    /// Satisfying tuples, flattened with stride `scope.len()`.
    sat: Vec<u8>,
}

impl Constraint {
    /// Validates and builds a constraint. Symbol ranges are checked when the
    /// constraint is placed in a graph, since that is where `q` is known.
    pub fn new(scope: Vec<usize>, tuples: Vec<Vec<u8>>) -> Result<Constraint> {
        let bad = |reason: String| Error::MalformedConstraint { index: 0, reason };
        if scope.len() < 2 {
            return Err(bad(format!("arity {} is below 2", scope.len())));
        }
        let distinct: BTreeSet<_> = scope.iter().collect();
        if distinct.len() != scope.len() {
            return Err(bad("scope lists a coordinate twice".into()));
        }
        if tuples.is_empty() {
            return Err(bad("empty satisfying set".into()));
        }
        let mut seen = HashSet::with_capacity(tuples.len());
        let mut sat = Vec::with_capacity(tuples.len() * scope.len());
        for t in &tuples {
            if t.len() != scope.len() {
                return Err(bad(format!("tuple {t:?} has arity {} instead of {}", t.len(), scope.len())));
            }
            if !seen.insert(t.as_slice()) {
                return Err(bad(format!("duplicate tuple {t:?}")));
            }
            sat.extend_from_slice(t);
        }
        Ok(Constraint { scope, sat })
    }

    /// Ordered scope `V(c)`.
    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    /// Number of coordinates in the scope.
    pub fn arity(&self) -> usize {
        self.scope.len()
    }

    /// Number of satisfying tuples.
    pub fn n_tuples(&self) -> usize {
        self.sat.len() / self.scope.len()
    }

    /// Satisfying tuples in stored order.
    pub fn tuples(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.sat.chunks_exact(self.scope.len())
    }

    /// Position of coordinate `v` in the scope.
    pub fn position(&self, v: usize) -> Option<usize> {
        self.scope.iter().position(|&u| u == v)
    }

    /// Membership test for a tuple in scope order.
    pub fn contains(&self, tuple: &[u8]) -> bool {
        self.tuples().any(|t| t == tuple)
    }

    /// Forced token at scope position `pos` given one side per scope
    /// position (the entry at `pos` is ignored). A `None` side is the empty
    /// set and forces the empty result.
    pub fn forced(&self, pos: usize, sides: &[Option<Token>]) -> Option<Token> {
        debug_assert_eq!(sides.len(), self.arity());
        let mut masks = [0u16; 64];
        let arity = self.arity();
        assert!(arity <= masks.len(), "arity {arity} exceeds supported maximum");
        for (i, s) in sides.iter().enumerate() {
            if i == pos {
                masks[i] = u16::MAX;
            } else {
                masks[i] = (*s)?.mask();
            }
        }
        self.forced_masks(pos, &masks[..arity])
    }

    /// Same as [`Constraint::forced`] with raw side masks (entry at `pos`
    /// ignored, zero masks allowed).
    pub(crate) fn forced_masks(&self, pos: usize, masks: &[u16]) -> Option<Token> {
        let mut out = 0u16;
        for t in self.tuples() {
            let hit = t.iter().zip(masks).enumerate().all(|(i, (&s, &m))| i == pos || m & (1 << s) != 0);
            if hit {
                out |= 1 << t[pos];
            }
        }
        Token::new(out)
    }
}

/// A factor graph over a uniform alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    alphabet: Alphabet,
    n_vars: usize,
    constraints: Vec<Constraint>,
    edges: Vec<Edge>,
    con_offset: Vec<usize>,
    var_edges: Vec<Vec<EdgeId>>,
    labels: Option<Vec<u8>>,
    policy: DegreePolicy,
}

impl FactorGraph {
    /// Builds a graph from constraints and validates every invariant.
    pub fn new(q: usize, n_vars: usize, constraints: Vec<Constraint>, policy: DegreePolicy) -> Result<Self> {
        let alphabet = Alphabet::new(q)?;
        let mut edges = Vec::new();
        let mut con_offset = Vec::with_capacity(constraints.len() + 1);
        let mut var_edges = vec![Vec::new(); n_vars];
        for (ci, c) in constraints.iter().enumerate() {
            con_offset.push(edges.len());
            for (pos, &v) in c.scope.iter().enumerate() {
                if v >= n_vars {
                    return Err(Error::MalformedConstraint {
                        index: ci,
                        reason: format!("coordinate {v} out of range 0..{n_vars}"),
                    });
                }
                var_edges[v].push(edges.len());
                edges.push(Edge { var: v, con: ci, pos });
            }
            if let Some(&s) = c.sat.iter().find(|&&s| s as usize >= q) {
                return Err(Error::MalformedConstraint {
                    index: ci,
                    reason: format!("symbol {s} outside alphabet of size {q}"),
                });
            }
        }
        con_offset.push(edges.len());
        if policy == DegreePolicy::Strict {
            if let Some((v, es)) = var_edges.iter().enumerate().find(|(_, es)| es.len() < 2) {
                return Err(Error::DegreeViolation { var: v, degree: es.len() });
            }
        }
        Ok(FactorGraph { alphabet, n_vars, constraints, edges, con_offset, var_edges, labels: None, policy })
    }

    /// Attaches k-SAT edge labels (one preferred value per scope position of
    /// every constraint) after checking that each constraint excludes
    /// exactly the tuple of negated preferred values.
    pub fn with_labels(mut self, labels: Vec<Vec<u8>>) -> Result<Self> {
        if self.q() != 2 {
            return Err(Error::ParamError("edge labels require a binary alphabet".into()));
        }
        if labels.len() != self.constraints.len() {
            return Err(Error::ParamError(format!(
                "{} label lists for {} constraints",
                labels.len(),
                self.constraints.len()
            )));
        }
        let mut flat = Vec::with_capacity(self.edges.len());
        for (ci, (c, ls)) in self.constraints.iter().zip(&labels).enumerate() {
            let bad = |reason: &str| Error::MalformedClause { index: ci, reason: reason.to_string() };
            if ls.len() != c.arity() || ls.iter().any(|&l| l > 1) {
                return Err(bad("labels must be one 0/1 value per scope position"));
            }
            let negated: Vec<u8> = ls.iter().map(|l| 1 - l).collect();
            if c.n_tuples() != (1 << c.arity()) - 1 || c.contains(&negated) {
                return Err(bad("satisfying set is not the clause defined by its labels"));
            }
            flat.extend_from_slice(ls);
        }
        self.labels = Some(flat);
        Ok(self)
    }

    /// Alphabet size `q`.
    pub fn q(&self) -> usize {
        self.alphabet.size()
    }

    /// The alphabet.
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    /// The full token over this alphabet.
    pub fn full(&self) -> Token {
        self.alphabet.full()
    }

    /// Number of coordinates.
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Number of constraints.
    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Number of edges.
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Constraint `c`.
    pub fn constraint(&self, c: usize) -> &Constraint {
        &self.constraints[c]
    }

    /// All constraints.
    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Edge `e`.
    pub fn edge(&self, e: EdgeId) -> Edge {
        self.edges[e]
    }

    /// All edges.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge `e` directed from its coordinate to its constraint.
    pub fn left_edge(&self, e: EdgeId) -> DirectedEdge {
        let Edge { var, con, .. } = self.edges[e];
        DirectedEdge { var, con, dir: Direction::VarToCon }
    }

    /// Edge `e` directed from its constraint to its coordinate.
    pub fn right_edge(&self, e: EdgeId) -> DirectedEdge {
        let Edge { var, con, .. } = self.edges[e];
        DirectedEdge { var, con, dir: Direction::ConToVar }
    }

    /// Edges at coordinate `v`, i.e. `C(v)`, in constraint order.
    pub fn var_edges(&self, v: usize) -> &[EdgeId] {
        &self.var_edges[v]
    }

    /// Edges of constraint `c`, in scope order.
    pub fn con_edges(&self, c: usize) -> Range<EdgeId> {
        self.con_offset[c]..self.con_offset[c + 1]
    }

    /// The edge joining constraint `c` and coordinate `v`.
    pub fn edge_id(&self, c: usize, v: usize) -> Option<EdgeId> {
        self.constraints[c].position(v).map(|p| self.con_offset[c] + p)
    }

    /// Number of constraints at `v`.
    pub fn degree(&self, v: usize) -> usize {
        self.var_edges[v].len()
    }

    /// Degree policy the graph was built with.
    pub fn policy(&self) -> DegreePolicy {
        self.policy
    }

    /// Preferred value `L_{v,c}` of edge `e` for k-SAT graphs.
    pub fn label(&self, e: EdgeId) -> Option<u8> {
        self.labels.as_ref().map(|l| l[e])
    }

    /// Labels grouped per constraint, if present.
    pub fn labels_per_constraint(&self) -> Option<Vec<Vec<u8>>> {
        let l = self.labels.as_ref()?;
        Some((0..self.n_constraints()).map(|c| l[self.con_edges(c)].to_vec()).collect())
    }

    /// Whether the graph carries k-SAT labels.
    pub fn is_ksat(&self) -> bool {
        self.labels.is_some()
    }

    /// Whether every constraint is a binary "different symbols" constraint.
    pub fn is_qcol(&self) -> bool {
        let q = self.q();
        self.constraints.iter().all(|c| c.arity() == 2 && c.n_tuples() == q * q - q && c.tuples().all(|t| t[0] != t[1]))
    }

    /// Problem family.
    pub fn family(&self) -> Family {
        if self.is_ksat() {
            Family::KSat
        } else if self.is_qcol() {
            Family::QCol
        } else {
            Family::General
        }
    }

    /// Constraint-index neighbours of coordinate `v` through edge `e`
    /// partitioned by label: `(same, different)` as edge lists over
    /// `C(v) \ {c}`. Only meaningful for k-SAT graphs.
    pub fn split_by_label(&self, e: EdgeId) -> (Vec<EdgeId>, Vec<EdgeId>) {
        let Edge { var, .. } = self.edges[e];
        let l = self.label(e).expect("k-SAT labels");
        self.var_edges[var].iter().filter(|&&b| b != e).partition(|&&b| self.label(b) == Some(l))
    }

    /// Whether `x` satisfies every constraint.
    pub fn satisfies(&self, x: &[u8]) -> Result<bool> {
        if x.len() != self.n_vars {
            return Err(Error::IncompleteAssignment { expected: self.n_vars, got: x.len() });
        }
        let mut buf = Vec::new();
        Ok(self.constraints.iter().all(|c| {
            buf.clear();
            buf.extend(c.scope.iter().map(|&v| x[v]));
            c.contains(&buf)
        }))
    }
}

/// Builds a k-SAT graph from clauses given as `(coordinate, preferred value)`
/// lists under the strict degree policy.
pub fn build_ksat(clauses: &[Vec<(usize, u8)>], n_vars: usize) -> Result<FactorGraph> {
    build_ksat_with(clauses, n_vars, DegreePolicy::Strict)
}

/// [`build_ksat`] with an explicit degree policy.
pub fn build_ksat_with(clauses: &[Vec<(usize, u8)>], n_vars: usize, policy: DegreePolicy) -> Result<FactorGraph> {
    let mut constraints = Vec::with_capacity(clauses.len());
    let mut labels = Vec::with_capacity(clauses.len());
    for (i, clause) in clauses.iter().enumerate() {
        let bad = |reason: String| Error::MalformedClause { index: i, reason };
        if clause.len() < 2 {
            return Err(bad(format!("clause has {} literals; at least 2 required", clause.len())));
        }
        let vars: BTreeSet<_> = clause.iter().map(|&(v, _)| v).collect();
        if vars.len() != clause.len() {
            return Err(bad("clause mentions a coordinate twice".into()));
        }
        if let Some(&(v, l)) = clause.iter().find(|&&(v, l)| l > 1 || v >= n_vars) {
            return Err(bad(format!("literal ({v}, {l}) out of range")));
        }
        let k = clause.len();
        let negated: Vec<u8> = clause.iter().map(|&(_, l)| 1 - l).collect();
        let tuples = (0..1u32 << k)
            .map(|m| (0..k).map(|i| ((m >> (k - 1 - i)) & 1) as u8).collect::<Vec<u8>>())
            .filter(|t| *t != negated)
            .collect();
        let scope = clause.iter().map(|&(v, _)| v).collect();
        constraints.push(Constraint::new(scope, tuples).map_err(|e| retag(e, i))?);
        labels.push(clause.iter().map(|&(_, l)| l).collect());
    }
    FactorGraph::new(2, n_vars, constraints, policy)?.with_labels(labels)
}

/// Builds a q-coloring graph from undirected edges under the strict degree
/// policy. The number of vertices is one more than the largest index.
pub fn build_qcol(edges: &[(usize, usize)], q: usize) -> Result<FactorGraph> {
    let n = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    build_qcol_with(edges, q, n, DegreePolicy::Strict)
}

/// [`build_qcol`] with an explicit vertex count and degree policy.
pub fn build_qcol_with(
    edges: &[(usize, usize)],
    q: usize,
    n_vertices: usize,
    policy: DegreePolicy,
) -> Result<FactorGraph> {
    Alphabet::new(q)?;
    let mut seen = HashSet::new();
    let mut constraints = Vec::with_capacity(edges.len());
    let tuples: Vec<Vec<u8>> =
        (0..q as u8).flat_map(|a| (0..q as u8).filter(move |&b| b != a).map(move |b| vec![a, b])).collect();
    for (i, &(u, v)) in edges.iter().enumerate() {
        if u == v {
            return Err(Error::MalformedEdge { index: i, reason: format!("self-loop at vertex {u}") });
        }
        if u >= n_vertices || v >= n_vertices {
            return Err(Error::MalformedEdge { index: i, reason: format!("vertex out of range 0..{n_vertices}") });
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(Error::DuplicateEdge { u, v });
        }
        constraints.push(Constraint::new(vec![u, v], tuples.clone())?);
    }
    FactorGraph::new(q, n_vertices, constraints, policy)
}

fn retag(e: Error, index: usize) -> Error {
    match e {
        Error::MalformedConstraint { reason, .. } => Error::MalformedConstraint { index, reason },
        other => other,
    }
}

/// A per-coordinate choice of tokens, read as a Cartesian product of
/// assignments.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Rectangle {
    sides: BTreeMap<usize, Token>,
}

impl Rectangle {
    /// Builds a rectangle from `(coordinate, side)` pairs.
    pub fn new(sides: impl IntoIterator<Item = (usize, Token)>) -> Rectangle {
        Rectangle { sides: sides.into_iter().collect() }
    }

    /// The rectangle with the full token on each listed coordinate.
    pub fn full(coords: impl IntoIterator<Item = usize>, q: usize) -> Rectangle {
        Rectangle::new(coords.into_iter().map(|v| (v, Token::full(q))))
    }

    /// Side at coordinate `v`.
    pub fn side(&self, v: usize) -> Option<Token> {
        self.sides.get(&v).copied()
    }

    /// Sets the side at `v`.
    pub fn set(&mut self, v: usize, t: Token) {
        self.sides.insert(v, t);
    }

    /// Covered coordinates in increasing order.
    pub fn coords(&self) -> impl Iterator<Item = usize> + '_ {
        self.sides.keys().copied()
    }

    /// `(coordinate, side)` pairs in coordinate order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, Token)> + '_ {
        self.sides.iter().map(|(&v, &t)| (v, t))
    }

    /// Number of covered coordinates.
    pub fn len(&self) -> usize {
        self.sides.len()
    }

    /// Whether no coordinate is covered.
    pub fn is_empty(&self) -> bool {
        self.sides.is_empty()
    }

    /// Whether the assignment `x` (indexed by coordinate) lies in the
    /// rectangle on the covered coordinates.
    pub fn contains(&self, x: &[u8]) -> bool {
        self.sides.iter().all(|(&v, t)| t.contains(x[v]))
    }

    /// Componentwise containment over an identical coordinate set.
    pub fn is_subset(&self, other: &Rectangle) -> bool {
        self.sides.len() == other.sides.len()
            && self.sides.iter().all(|(v, t)| other.sides.get(v).is_some_and(|o| t.is_subset(*o)))
    }
}

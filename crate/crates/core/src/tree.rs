//! Factor trees around a coordinate and exhaustive projections over
//! sub-instances.
//!
//! The projections here are computed by a backtracking search that keeps
//! generalized arc consistency on explicit tuple lists. They are written
//! independently of the message-passing code so they can serve as its
//! oracle.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forced::DEFAULT_BUDGET;
use crate::graph::{FactorGraph, Rectangle};
use crate::token::Token;

/// The `(v, l)`-tree of a factor graph: the radius-`2l` neighbourhood of
/// `root`, when it is a tree whose leaves all sit at distance `2l`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorTree {
    pub root: usize,
    pub depth: usize,
    /// Coordinates in breadth-first order, root first.
    pub vars: Vec<usize>,
    /// Constraints in breadth-first order.
    pub constraints: Vec<usize>,
    /// Leaf coordinates with the constraint joining each to its parent.
    pub leaves: Vec<(usize, usize)>,
    /// Parent constraint of every non-root coordinate.
    parent_con: BTreeMap<usize, usize>,
    /// Parent coordinate of every constraint.
    parent_var: BTreeMap<usize, usize>,
}

/// The radius-`2l` neighbourhood of a coordinate, tree or not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ball {
    pub root: usize,
    pub vars: Vec<usize>,
    pub constraints: Vec<usize>,
}

/// Nodes of one kind paired with their distance from the centre.
type Layer = Vec<(usize, usize)>;

/// Breadth-first ball of graph radius `2l` around `v`: coordinates at even
/// distance, constraints at odd distance, each with its distance.
fn bfs_ball(g: &FactorGraph, v: usize, l: usize) -> (Layer, Layer) {
    let mut var_dist: BTreeMap<usize, usize> = BTreeMap::new();
    let mut con_dist: BTreeMap<usize, usize> = BTreeMap::new();
    let mut vars = vec![(v, 0)];
    let mut cons = Vec::new();
    var_dist.insert(v, 0);
    let mut queue = VecDeque::from([(v, 0usize)]);
    while let Some((u, d)) = queue.pop_front() {
        if d == 2 * l {
            continue;
        }
        for &e in g.var_edges(u) {
            let c = g.edge(e).con;
            if con_dist.contains_key(&c) {
                continue;
            }
            con_dist.insert(c, d + 1);
            cons.push((c, d + 1));
            for &w in g.constraint(c).scope() {
                if let std::collections::btree_map::Entry::Vacant(slot) = var_dist.entry(w) {
                    slot.insert(d + 2);
                    vars.push((w, d + 2));
                    queue.push_back((w, d + 2));
                }
            }
        }
    }
    (vars, cons)
}

/// The radius-`2l` neighbourhood of `v` as a sub-instance.
pub fn ball(g: &FactorGraph, v: usize, l: usize) -> Ball {
    let (vars, cons) = bfs_ball(g, v, l);
    Ball {
        root: v,
        vars: vars.into_iter().map(|p| p.0).collect(),
        constraints: cons.into_iter().map(|p| p.0).collect(),
    }
}

/// Returns the `(v, l)`-tree when it exists.
pub fn extract_factor_tree(g: &FactorGraph, v: usize, l: usize) -> Result<Option<FactorTree>> {
    if l == 0 {
        return Err(Error::ParamError("tree depth must be at least 1".into()));
    }
    if v >= g.n_vars() {
        return Err(Error::ScopeError(format!("no coordinate {v}")));
    }
    let (vars, cons) = bfs_ball(g, v, l);
    let var_set: BTreeSet<usize> = vars.iter().map(|p| p.0).collect();
    // Every constraint inside the ball has its whole scope inside the ball,
    // so the ball is a tree exactly when edges = vertices - 1.
    let n_edges: usize = cons.iter().map(|&(c, _)| g.constraint(c).arity()).sum();
    if n_edges + 1 != vars.len() + cons.len() {
        return Ok(None);
    }
    let var_depth: BTreeMap<usize, usize> = vars.iter().copied().collect();
    let mut parent_con = BTreeMap::new();
    let mut parent_var = BTreeMap::new();
    for &(c, d) in &cons {
        for &w in g.constraint(c).scope() {
            debug_assert!(var_set.contains(&w));
            if var_depth[&w] == d + 1 {
                parent_con.insert(w, c);
            } else {
                parent_var.insert(c, w);
            }
        }
    }
    let mut leaves = Vec::new();
    for &(u, d) in &vars {
        let has_child = g.var_edges(u).iter().any(|&e| parent_var.get(&g.edge(e).con) == Some(&u));
        if !has_child {
            if d != 2 * l {
                return Ok(None);
            }
            leaves.push((u, parent_con[&u]));
        }
    }
    Ok(Some(FactorTree {
        root: v,
        depth: l,
        vars: vars.into_iter().map(|p| p.0).collect(),
        constraints: cons.into_iter().map(|p| p.0).collect(),
        leaves,
        parent_con,
        parent_var,
    }))
}

impl FactorTree {
    /// Parent constraint of a non-root coordinate.
    pub fn parent_constraint(&self, u: usize) -> Option<usize> {
        self.parent_con.get(&u).copied()
    }

    /// The subtree made of the root and everything reached through
    /// constraint `c`, which must be a child of the root.
    pub fn through(&self, c: usize) -> Result<FactorTree> {
        if self.parent_var.get(&c) != Some(&self.root) {
            return Err(Error::ScopeError(format!("constraint {c} is not attached to the root")));
        }
        let mut keep_cons = BTreeSet::from([c]);
        let mut keep_vars = BTreeSet::from([self.root]);
        // Breadth-first order guarantees parents precede children.
        for &d in &self.constraints {
            let pv = self.parent_var[&d];
            if d == c || (pv != self.root && keep_vars.contains(&pv)) {
                keep_cons.insert(d);
            }
            if keep_cons.contains(&d) {
                for (&u, &pc) in &self.parent_con {
                    if pc == d {
                        keep_vars.insert(u);
                    }
                }
            }
        }
        Ok(FactorTree {
            root: self.root,
            depth: self.depth,
            vars: self.vars.iter().copied().filter(|u| keep_vars.contains(u)).collect(),
            constraints: self.constraints.iter().copied().filter(|d| keep_cons.contains(d)).collect(),
            leaves: self.leaves.iter().copied().filter(|(u, _)| keep_vars.contains(u)).collect(),
            parent_con: self.parent_con.iter().filter(|(u, _)| keep_vars.contains(u)).map(|(&a, &b)| (a, b)).collect(),
            parent_var: self.parent_var.iter().filter(|(d, _)| keep_cons.contains(d)).map(|(&a, &b)| (a, b)).collect(),
        })
    }

    /// Leaf coordinates.
    pub fn leaf_coords(&self) -> Vec<usize> {
        self.leaves.iter().map(|p| p.0).collect()
    }
}

/// A search over the coordinates and constraints of a sub-instance.
struct Search<'g> {
    g: &'g FactorGraph,
    vars: Vec<usize>,
    /// Local index of each coordinate in `vars`.
    local: BTreeMap<usize, usize>,
    /// Constraints with their scopes translated to local indices.
    cons: Vec<(usize, Vec<usize>)>,
    nodes: u64,
    budget: u64,
}

impl<'g> Search<'g> {
    fn new(g: &'g FactorGraph, vars: &[usize], constraints: &[usize], budget: u64) -> Search<'g> {
        let local: BTreeMap<usize, usize> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let cons =
            constraints.iter().map(|&c| (c, g.constraint(c).scope().iter().map(|u| local[u]).collect())).collect();
        Search { g, vars: vars.to_vec(), local, cons, nodes: 0, budget }
    }

    /// Generalized arc consistency to a fixpoint. Returns false when some
    /// domain empties.
    fn propagate(&self, dom: &mut [u16]) -> bool {
        loop {
            let mut changed = false;
            for (c, scope) in &self.cons {
                let mut support = vec![0u16; scope.len()];
                for t in self.g.constraint(*c).tuples() {
                    if t.iter().zip(scope).all(|(&s, &i)| dom[i] & (1 << s) != 0) {
                        for (k, &s) in t.iter().enumerate() {
                            support[k] |= 1 << s;
                        }
                    }
                }
                for (k, &i) in scope.iter().enumerate() {
                    let nd = dom[i] & support[k];
                    if nd == 0 {
                        return false;
                    }
                    if nd != dom[i] {
                        dom[i] = nd;
                        changed = true;
                    }
                }
            }
            if !changed {
                return true;
            }
        }
    }

    /// Whether some assignment inside `dom` satisfies every constraint.
    fn exists(&mut self, dom: &mut [u16]) -> Result<bool> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded { needed: self.nodes as u128, budget: self.budget });
        }
        if !self.propagate(dom) {
            return Ok(false);
        }
        let Some(i) = dom.iter().position(|m| m.count_ones() > 1) else {
            return Ok(true);
        };
        let m = dom[i];
        for s in 0..16u16 {
            if m & (1 << s) != 0 {
                let mut child = dom.to_vec();
                child[i] = 1 << s;
                if self.exists(&mut child)? {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    /// Symbols at `target` that extend to a satisfying assignment inside
    /// the rectangle given by `restrict` (full elsewhere).
    fn projection(&mut self, target: usize, restrict: &Rectangle) -> Result<Option<Token>> {
        let full = self.g.full().mask();
        let mut dom = vec![full; self.vars.len()];
        for (u, t) in restrict.iter() {
            let i = *self
                .local
                .get(&u)
                .ok_or_else(|| Error::ScopeError(format!("coordinate {u} is outside the sub-instance")))?;
            dom[i] = t.mask();
        }
        let ti = *self
            .local
            .get(&target)
            .ok_or_else(|| Error::ScopeError(format!("coordinate {target} is outside the sub-instance")))?;
        let mut out = 0u16;
        for s in 0..self.g.q() as u16 {
            if dom[ti] & (1 << s) == 0 {
                continue;
            }
            let mut d = dom.clone();
            d[ti] = 1 << s;
            if self.exists(&mut d)? {
                out |= 1 << s;
            }
        }
        Ok(Token::new(out))
    }
}

/// `F_T^{U->v}`: symbols at `v` that extend, inside the rectangle on `U`
/// and freely elsewhere, to an assignment satisfying every constraint of
/// the tree.
pub fn tree_forced_token(
    g: &FactorGraph,
    tree: &FactorTree,
    v: usize,
    rect: &Rectangle,
    budget: u64,
) -> Result<Option<Token>> {
    if rect.side(v).is_some() {
        return Err(Error::ScopeError(format!("target coordinate {v} lies in the rectangle")));
    }
    Search::new(g, &tree.vars, &tree.constraints, budget).projection(v, rect)
}

/// Projection of the ball's solution set onto its root.
pub fn ball_projection(g: &FactorGraph, ball: &Ball, budget: u64) -> Result<Option<Token>> {
    Search::new(g, &ball.vars, &ball.constraints, budget).projection(ball.root, &Rectangle::default())
}

/// `m_v(l)`: number of symbols at `v` consistent with the radius-`2l`
/// neighbourhood of `v`.
pub fn local_solution_count(g: &FactorGraph, v: usize, l: usize) -> Result<usize> {
    Ok(ball_projection(g, &ball(g, v, l), DEFAULT_BUDGET)?.map_or(0, |t| t.len()))
}

/// Projection of the whole instance's solution set onto coordinate `v`.
pub fn global_projection(g: &FactorGraph, v: usize, budget: u64) -> Result<Option<Token>> {
    let vars: Vec<usize> = (0..g.n_vars()).collect();
    let cons: Vec<usize> = (0..g.n_constraints()).collect();
    Search::new(g, &vars, &cons, budget).projection(v, &Rectangle::default())
}

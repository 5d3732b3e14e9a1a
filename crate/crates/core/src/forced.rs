//! Forced tokens, forceable-token sets and local compatibility.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FactorGraph, Rectangle};
use crate::token::{subset_opt, Token};

/// Default cap on the number of rectangles or tuples one exhaustive
/// enumeration may visit.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Fails with [`Error::BudgetExceeded`] when `needed > budget`.
pub fn check_budget(needed: u128, budget: u64) -> Result<()> {
    if needed > budget as u128 {
        Err(Error::BudgetExceeded { needed, budget })
    } else {
        Ok(())
    }
}

/// `base^exp` in saturating 128-bit arithmetic.
pub(crate) fn pow_sat(base: usize, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base as u128))
}

/// Mixed-radix counter used by every exhaustive enumeration. The last digit
/// moves fastest, so tuples come out in lexicographic order.
#[derive(Debug, Clone)]
pub(crate) struct Odometer {
    radices: Vec<usize>,
    digits: Vec<usize>,
    done: bool,
}

impl Odometer {
    pub(crate) fn new(radices: Vec<usize>) -> Odometer {
        let done = radices.contains(&0);
        let digits = vec![0; radices.len()];
        Odometer { radices, digits, done }
    }

    /// Current digits, or `None` once every tuple has been produced.
    pub(crate) fn current(&self) -> Option<&[usize]> {
        (!self.done).then_some(&self.digits[..])
    }

    pub(crate) fn advance(&mut self) {
        for i in (0..self.digits.len()).rev() {
            self.digits[i] += 1;
            if self.digits[i] < self.radices[i] {
                return;
            }
            self.digits[i] = 0;
        }
        self.done = true;
    }
}

fn position(g: &FactorGraph, c: usize, v: usize) -> Result<usize> {
    if c >= g.n_constraints() {
        return Err(Error::ScopeError(format!("no constraint {c}")));
    }
    g.constraint(c)
        .position(v)
        .ok_or_else(|| Error::ScopeError(format!("coordinate {v} is not in the scope of constraint {c}")))
}

/// Forced token `F_c^v(rect)`: the set of symbols `r` such that some
/// satisfying tuple of `c` takes `r` at `v` and lies in `rect` elsewhere.
/// `None` is the empty sentinel.
pub fn forced_token(g: &FactorGraph, c: usize, v: usize, rect: &Rectangle) -> Result<Option<Token>> {
    let pos = position(g, c, v)?;
    let con = g.constraint(c);
    let expected: BTreeSet<usize> = con.scope().iter().copied().filter(|&u| u != v).collect();
    let given: BTreeSet<usize> = rect.coords().collect();
    if expected != given {
        return Err(Error::ScopeError(format!("rectangle covers {given:?} but constraint {c} needs {expected:?}")));
    }
    let sides: Vec<Option<Token>> = con.scope().iter().map(|&u| if u == v { None } else { rect.side(u) }).collect();
    let masks: Vec<u16> = sides.iter().map(|s| s.map_or(0, |t| t.mask())).collect();
    Ok(con.forced_masks(pos, &masks))
}

/// The forceable set `𝓕_c(v)`: every nonempty token produced by the forced
/// token over all rectangles on `V(c) \ {v}`, sorted by mask.
pub fn forceable_tokens(g: &FactorGraph, c: usize, v: usize, budget: u64) -> Result<Vec<Token>> {
    let pos = position(g, c, v)?;
    forceable_at(g, c, pos, budget)
}

pub(crate) fn forceable_at(g: &FactorGraph, c: usize, pos: usize, budget: u64) -> Result<Vec<Token>> {
    let con = g.constraint(c);
    let nt = g.alphabet().token_count();
    check_budget(pow_sat(nt, con.arity() - 1), budget)?;
    let mut found = BTreeSet::new();
    let mut radices = vec![nt; con.arity()];
    radices[pos] = 1;
    let mut odo = Odometer::new(radices);
    let mut masks = vec![0u16; con.arity()];
    while let Some(d) = odo.current() {
        for (i, &di) in d.iter().enumerate() {
            masks[i] = (di + 1) as u16;
        }
        if let Some(t) = con.forced_masks(pos, &masks) {
            found.insert(t);
        }
        odo.advance();
    }
    Ok(found.into_iter().collect())
}

/// Forceable sets for every edge, indexed by [`EdgeId`](crate::graph::EdgeId).
pub fn forceable_by_edge(g: &FactorGraph, budget: u64) -> Result<Vec<Vec<Token>>> {
    g.edges().iter().map(|e| forceable_at(g, e.con, e.pos, budget)).collect()
}

/// Largest forceable token `𝓐_c(v)`, the forced token of the all-full
/// rectangle.
pub fn max_forceable(g: &FactorGraph, c: usize, v: usize) -> Result<Token> {
    let pos = position(g, c, v)?;
    Ok(max_forceable_at(g, c, pos))
}

pub(crate) fn max_forceable_at(g: &FactorGraph, c: usize, pos: usize) -> Token {
    let con = g.constraint(c);
    let masks = vec![g.full().mask(); con.arity()];
    con.forced_masks(pos, &masks).expect("a nonempty satisfying set forces a nonempty token")
}

/// `𝓐_{∼c}(u)`: intersection of `𝓐_b(u)` over the constraints `b ≠ c` at
/// `u`. The empty intersection over no constraints is the full token.
pub fn max_forceable_excluding(g: &FactorGraph, c: usize, u: usize) -> Option<Token> {
    let mut acc = Some(g.full());
    for &b in g.var_edges(u) {
        let e = g.edge(b);
        if e.con != c {
            acc = acc.and_then(|t| t.intersect(max_forceable_at(g, e.con, e.pos)));
        }
    }
    acc
}

/// A violation of local compatibility: forcing `t_v` at `v` through
/// rectangle `rect` leaves `forced` at `u`, which misses part of `required`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatWitness {
    pub v: usize,
    pub t_v: Token,
    pub rect: Rectangle,
    pub u: usize,
    pub required: Option<Token>,
    pub forced: Option<Token>,
}

/// Result of the local-compatibility decision for one constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatReport {
    pub constraint: usize,
    pub compatible: bool,
    pub witness: Option<CompatWitness>,
}

/// Decides whether constraint `c` is locally compatible. On failure the
/// first violation in enumeration order is returned as a witness.
pub fn is_locally_compatible(g: &FactorGraph, c: usize, budget: u64) -> Result<CompatReport> {
    if c >= g.n_constraints() {
        return Err(Error::ScopeError(format!("no constraint {c}")));
    }
    let con = g.constraint(c);
    let arity = con.arity();
    let nt = g.alphabet().token_count();
    check_budget(pow_sat(nt, arity - 1).saturating_mul(arity as u128), budget)?;
    let required: Vec<Option<Token>> = con.scope().iter().map(|&u| max_forceable_excluding(g, c, u)).collect();
    let mut masks = vec![0u16; arity];
    for pv in 0..arity {
        let mut radices = vec![nt; arity];
        radices[pv] = 1;
        let mut odo = Odometer::new(radices);
        while let Some(d) = odo.current() {
            for (i, &di) in d.iter().enumerate() {
                masks[i] = (di + 1) as u16;
            }
            if let Some(t_v) = con.forced_masks(pv, &masks) {
                let saved = masks[pv];
                masks[pv] = t_v.mask();
                for pu in (0..arity).filter(|&p| p != pv) {
                    let forced = con.forced_masks(pu, &masks);
                    if !subset_opt(required[pu], forced) {
                        let rect = Rectangle::new(
                            (0..arity)
                                .filter(|&i| i != pv)
                                .map(|i| (con.scope()[i], Token::new((d[i] + 1) as u16).expect("nonzero"))),
                        );
                        return Ok(CompatReport {
                            constraint: c,
                            compatible: false,
                            witness: Some(CompatWitness {
                                v: con.scope()[pv],
                                t_v,
                                rect,
                                u: con.scope()[pu],
                                required: required[pu],
                                forced,
                            }),
                        });
                    }
                }
                masks[pv] = saved;
            }
            odo.advance();
        }
    }
    Ok(CompatReport { constraint: c, compatible: true, witness: None })
}

/// Runs [`is_locally_compatible`] on every constraint.
pub fn compatibility_report(g: &FactorGraph, budget: u64) -> Result<Vec<CompatReport>> {
    (0..g.n_constraints()).map(|c| is_locally_compatible(g, c, budget)).collect()
}

/// The edge-indexed table of `𝓐` tokens.
pub fn max_forceable_by_edge(g: &FactorGraph) -> Vec<Token> {
    g.edges().iter().map(|e| max_forceable_at(g, e.con, e.pos)).collect()
}

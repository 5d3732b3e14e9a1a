//! The normally realized Markov random field of a CSP and belief
//! propagation on it.
//!
//! Every factor-graph edge `(v, c)` carries a state `s = (sL, sR)`, a pair
//! of tokens: `sL` is what the coordinate announces to the constraint and
//! `sR` is what the constraint forces back. Every coordinate carries a side
//! variable `y_v`. The left function at `v` is
//! `ω_v(y_v | ∩_c sR_{v,c}) · ∏_c [sL_{v,c} = y_v]`, the right function at
//! `c` is `∏_{v ∈ V(c)} [sR_{v,c} = F_c(sL of the others)]`, and the global
//! function is the product of all of them.
//!
//! Belief propagation messages are tables over edge states. Only the states
//! `(a, r)` with `a ⊆ r` and `r` forceable on the edge can appear in a
//! configuration of positive weight, and only those entries are ever read
//! by a downstream update, so every message is kept at zero elsewhere.
//!
//! State-decoupled BP replaces every right message by its normalized
//! diagonal `ρ*(r) ∝ ρ(r, r)` before it reaches a left function.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forced::{check_budget, forceable_at, pow_sat, Odometer, DEFAULT_BUDGET};
use crate::gen::rng_from_seed;
use crate::graph::{EdgeId, FactorGraph, Family};
use crate::ptp::{intersection_fold, wptp_summary, ObedienceConditional, TokenDist};
use crate::token::Token;

/// Largest alphabet for which state tables are built. A table has
/// `(2^q - 1)^2` entries.
pub const MAX_STATE_Q: usize = 8;

/// A nonnegative table over edge states `(sL, sR)`, indexed by
/// `sL.index() * (2^q - 1) + sR.index()`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMsg {
    q: usize,
    w: Vec<f64>,
}

impl StateMsg {
    pub fn zeros(q: usize) -> StateMsg {
        let nt = (1usize << q) - 1;
        StateMsg { q, w: vec![0.0; nt * nt] }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    fn nt(&self) -> usize {
        (1 << self.q) - 1
    }

    fn at(&self, a: Token, r: Token) -> usize {
        a.index() * self.nt() + r.index()
    }

    pub fn get(&self, a: Token, r: Token) -> f64 {
        self.w[self.at(a, r)]
    }

    pub fn set(&mut self, a: Token, r: Token, x: f64) {
        let i = self.at(a, r);
        self.w[i] = x;
    }

    pub fn add(&mut self, a: Token, r: Token, x: f64) {
        let i = self.at(a, r);
        self.w[i] += x;
    }

    pub fn total(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Largest entry, zero for an all-zero table.
    pub fn max_entry(&self) -> f64 {
        self.w.iter().copied().fold(0.0, f64::max)
    }

    /// Entries with positive weight as `(sL, sR, weight)`, in index order.
    pub fn support(&self) -> impl Iterator<Item = (Token, Token, f64)> + '_ {
        let nt = self.nt();
        self.w
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(move |(i, &x)| (Token::from_index(i / nt), Token::from_index(i % nt), x))
    }

    /// Every entry multiplied by `f`.
    pub fn scaled(&self, f: f64) -> StateMsg {
        StateMsg { q: self.q, w: self.w.iter().map(|x| x * f).collect() }
    }

    /// Scales to unit total. `what` names the message in the error.
    pub fn normalized(&self, what: &str) -> Result<StateMsg> {
        let z = self.total();
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::DegenerateMessage(what.to_string()));
        }
        Ok(self.scaled(1.0 / z))
    }

    /// The diagonal `r ↦ m(r, r)`.
    pub fn diagonal(&self) -> TokenDist {
        let mut d = TokenDist::zeros(self.q);
        for r in Token::all(self.q) {
            d.set(r, self.get(r, r));
        }
        d
    }

    /// Largest absolute entry difference.
    pub fn linf(&self, other: &StateMsg) -> f64 {
        self.w.iter().zip(&other.w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    fn check(&self) -> Result<()> {
        if let Some(x) = self.w.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::ParamError(format!("state weight {x} is not a finite nonnegative number")));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct StateMsgRepr {
    q: usize,
    entries: BTreeMap<String, f64>,
}

impl Serialize for StateMsg {
    /// Nonzero entries keyed `"sL|sR"`.
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries = self.support().map(|(a, r, x)| (format!("{a}|{r}"), x)).collect();
        StateMsgRepr { q: self.q, entries }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StateMsg {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<StateMsg, D::Error> {
        use serde::de::Error as _;
        let repr = StateMsgRepr::deserialize(deserializer)?;
        if !(2..=MAX_STATE_Q).contains(&repr.q) {
            return Err(D::Error::custom(format!("alphabet size {} out of range", repr.q)));
        }
        let mut m = StateMsg::zeros(repr.q);
        for (key, x) in repr.entries {
            let (a, r) = key.split_once('|').ok_or_else(|| D::Error::custom(format!("state key {key:?}")))?;
            let a = Token::parse_for(a, repr.q).map_err(D::Error::custom)?;
            let r = Token::parse_for(r, repr.q).map_err(D::Error::custom)?;
            m.set(a, r, x);
        }
        m.check().map_err(D::Error::custom)?;
        Ok(m)
    }
}

/// A factor graph together with one obedience conditional per coordinate
/// and, per edge, the right tokens its constraint can force.
#[derive(Debug, Clone)]
pub struct ForneyGraph<'g> {
    g: &'g FactorGraph,
    omega: Vec<ObedienceConditional>,
    forceable: Vec<Vec<bool>>,
    budget: u64,
}

impl<'g> ForneyGraph<'g> {
    /// Validates the conditionals and tabulates the forceable tokens of
    /// every edge within `budget`.
    pub fn new(g: &'g FactorGraph, omega: Vec<ObedienceConditional>, budget: u64) -> Result<ForneyGraph<'g>> {
        if g.q() > MAX_STATE_Q {
            return Err(Error::ParamError(format!("state tables support q <= {MAX_STATE_Q}, got {}", g.q())));
        }
        if omega.len() != g.n_vars() {
            return Err(Error::ParamError(format!("{} conditionals for {} coordinates", omega.len(), g.n_vars())));
        }
        for w in &omega {
            if w.q() != g.q() {
                return Err(Error::ParamError(format!("conditional over q = {} on a q = {} graph", w.q(), g.q())));
            }
            w.validate()?;
        }
        let nt = g.alphabet().token_count();
        let mut forceable = Vec::with_capacity(g.n_edges());
        for ed in g.edges() {
            let mut row = vec![false; nt];
            for t in forceable_at(g, ed.con, ed.pos, budget)? {
                row[t.index()] = true;
            }
            forceable.push(row);
        }
        Ok(ForneyGraph { g, omega, forceable, budget })
    }

    /// The same conditional at every coordinate.
    pub fn shared(g: &'g FactorGraph, omega: ObedienceConditional, budget: u64) -> Result<ForneyGraph<'g>> {
        Self::new(g, vec![omega; g.n_vars()], budget)
    }

    /// The indicator conditional everywhere.
    pub fn indicator(g: &'g FactorGraph) -> Result<ForneyGraph<'g>> {
        Self::shared(g, ObedienceConditional::indicator(g.q()), DEFAULT_BUDGET)
    }

    /// The k-SAT conditional with parameter `γ` everywhere.
    pub fn ksat(g: &'g FactorGraph, gamma: f64) -> Result<ForneyGraph<'g>> {
        if g.q() != 2 {
            return Err(Error::ParamError("the γ conditional needs a binary alphabet".into()));
        }
        Self::shared(g, ObedienceConditional::ksat_gamma(gamma)?, DEFAULT_BUDGET)
    }

    pub fn graph(&self) -> &'g FactorGraph {
        self.g
    }

    pub fn q(&self) -> usize {
        self.g.q()
    }

    pub fn omega(&self, v: usize) -> &ObedienceConditional {
        &self.omega[v]
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// Whether `r` is forceable on edge `e`.
    pub fn is_forceable(&self, e: EdgeId, r: Token) -> bool {
        self.forceable[e][r.index()]
    }

    /// Whether `(a, r)` is a state that can carry weight on edge `e`.
    pub fn in_support(&self, e: EdgeId, a: Token, r: Token) -> bool {
        a.is_subset(r) && self.is_forceable(e, r)
    }

    /// Every supported state of edge `e`, in index order.
    pub fn states(&self, e: EdgeId) -> Vec<(Token, Token)> {
        let q = self.q();
        Token::all(q)
            .flat_map(|a| Token::all(q).map(move |r| (a, r)))
            .filter(|&(a, r)| self.in_support(e, a, r))
            .collect()
    }
}

/// Left function `g_v`: `ω_v(y | ∩ sR) · ∏ [sL = y]`, with one state per
/// edge of `v` in [`FactorGraph::var_edges`] order.
pub fn left_function(fg: &ForneyGraph, v: usize, y: Token, states: &[(Token, Token)]) -> f64 {
    if states.iter().any(|&(a, _)| a != y) {
        return 0.0;
    }
    let inter = states.iter().try_fold(Token::full(fg.q()), |acc, &(_, r)| acc.intersect(r));
    fg.omega(v).get(y, inter)
}

/// Right function `f_c`: one when every right token is the forced token of
/// the other coordinates' left tokens, zero otherwise. States are in scope
/// order.
pub fn right_function(fg: &ForneyGraph, c: usize, states: &[(Token, Token)]) -> f64 {
    let con = fg.graph().constraint(c);
    let sides: Vec<Option<Token>> = states.iter().map(|&(a, _)| Some(a)).collect();
    let ok = states.iter().enumerate().all(|(pos, &(_, r))| con.forced(pos, &sides) == Some(r));
    if ok {
        1.0
    } else {
        0.0
    }
}

/// Global function: the product of every left and right function. `y` is
/// indexed by coordinate and `s` by edge.
pub fn global_f(fg: &ForneyGraph, y: &[Token], s: &[(Token, Token)]) -> Result<f64> {
    let g = fg.graph();
    if y.len() != g.n_vars() {
        return Err(Error::IncompleteAssignment { expected: g.n_vars(), got: y.len() });
    }
    if s.len() != g.n_edges() {
        return Err(Error::ScopeError(format!("{} edge states for {} edges", s.len(), g.n_edges())));
    }
    let mut value = 1.0;
    for (v, &yv) in y.iter().enumerate() {
        let states: Vec<_> = g.var_edges(v).iter().map(|&e| s[e]).collect();
        value *= left_function(fg, v, yv, &states);
        if value == 0.0 {
            return Ok(0.0);
        }
    }
    for c in 0..g.n_constraints() {
        value *= right_function(fg, c, &s[g.con_edges(c)]);
        if value == 0.0 {
            return Ok(0.0);
        }
    }
    Ok(value)
}

/// A configuration in the support of the global function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidConfig {
    /// Side variables, by coordinate.
    pub y: Vec<Token>,
    /// Edge states, by edge.
    pub s: Vec<(Token, Token)>,
    pub value: f64,
}

/// Every configuration with positive global weight.
///
/// A valid configuration has `sL = y_v` on every edge and
/// `sR = F_c(y of the others)`, so it is determined by `y` alone and the
/// enumeration runs over the `(2^q - 1)^n` side assignments.
pub fn enumerate_valid(fg: &ForneyGraph, budget: u64) -> Result<Vec<ValidConfig>> {
    let g = fg.graph();
    let q = g.q();
    let nt = g.alphabet().token_count();
    check_budget(pow_sat(nt, g.n_vars()), budget)?;
    let mut out = Vec::new();
    let mut odo = Odometer::new(vec![nt; g.n_vars()]);
    let mut sides: Vec<Option<Token>> = Vec::new();
    'outer: while let Some(d) = odo.current() {
        let y: Vec<Token> = d.iter().map(|&i| Token::from_index(i)).collect();
        let mut s = Vec::with_capacity(g.n_edges());
        for c in 0..g.n_constraints() {
            let con = g.constraint(c);
            sides.clear();
            sides.extend(con.scope().iter().map(|&v| Some(y[v])));
            for (pos, &v) in con.scope().iter().enumerate() {
                match con.forced(pos, &sides) {
                    Some(r) => s.push((y[v], r)),
                    None => {
                        odo.advance();
                        continue 'outer;
                    }
                }
            }
        }
        let mut value = 1.0;
        for (v, &yv) in y.iter().enumerate() {
            let inter = g.var_edges(v).iter().try_fold(Token::full(q), |acc, &e| acc.intersect(s[e].1));
            value *= fg.omega(v).get(yv, inter);
        }
        if value > 0.0 {
            out.push(ValidConfig { y, s, value });
        }
        odo.advance();
    }
    Ok(out)
}

/// Column `r ↦ m(a, r)` of a state table.
fn column(m: &StateMsg, a: Token) -> TokenDist {
    let mut d = TokenDist::zeros(m.q);
    for r in Token::all(m.q) {
        d.set(r, m.get(a, r));
    }
    d
}

/// `Σ_X ω(a | r ∩ X) D(X)` with `D` indexed by raw mask.
fn obey(omega: &ObedienceConditional, a: Token, r: Token, d: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (xm, &dx) in d.iter().enumerate().skip(1) {
        if dx == 0.0 {
            continue;
        }
        let b = Token::new(r.mask() & xm as u16);
        let f = omega.get(a, b);
        if f != 0.0 {
            acc += f * dx;
        }
    }
    acc
}

/// Unnormalized BP left message on edge `e` from the right messages of the
/// other constraints at its coordinate:
/// `λ(a, r) = Σ ω_v(a | r ∩ X) D_a(X)`, where `D_a` is the weight of the
/// intersection `X` of the other right tokens under `ρ_b(a, ·)`.
pub fn bp_left_update(fg: &ForneyGraph, e: EdgeId, rights: &[StateMsg]) -> StateMsg {
    let g = fg.graph();
    let q = g.q();
    let v = g.edge(e).var;
    let omega = fg.omega(v);
    let mut out = StateMsg::zeros(q);
    for a in Token::all(q) {
        let cols: Vec<TokenDist> = g.var_edges(v).iter().filter(|&&b| b != e).map(|&b| column(&rights[b], a)).collect();
        let d = intersection_fold(q, &cols);
        for r in Token::all(q) {
            if fg.in_support(e, a, r) {
                out.set(a, r, obey(omega, a, r, &d));
            }
        }
    }
    out
}

/// Unnormalized BP summary at `v`: `μ(y) = Σ ω_v(y | X) D_y(X)`, where
/// `D_y` is the weight of the intersection of every right token under
/// `ρ_c(y, ·)`.
pub fn bp_summary(fg: &ForneyGraph, v: usize, rights: &[StateMsg]) -> TokenDist {
    let g = fg.graph();
    let q = g.q();
    let full = Token::full(q);
    let mut out = TokenDist::zeros(q);
    for y in Token::all(q) {
        let cols: Vec<TokenDist> = g.var_edges(v).iter().map(|&c| column(&rights[c], y)).collect();
        let d = intersection_fold(q, &cols);
        out.set(y, obey(fg.omega(v), y, full, &d));
    }
    out
}

/// Left tokens with any weight in a table.
fn left_support(m: &StateMsg) -> Vec<u16> {
    let q = m.q;
    Token::all(q).filter(|&a| Token::all(q).any(|r| m.get(a, r) > 0.0)).map(Token::mask).collect()
}

/// Shared enumeration behind the BP right update. For every tuple of left
/// tokens of the other coordinates it calls `visit(r, weight_of)` where `r`
/// is the forced right token at `e` and `weight_of(a)` is the product of
/// the other left messages with `sL_v = a`.
fn right_enumerate(
    fg: &ForneyGraph,
    e: EdgeId,
    lefts: &[StateMsg],
    budget: u64,
    per_tuple: u64,
    mut visit: impl FnMut(Token, &mut dyn FnMut(Token) -> f64),
) -> Result<()> {
    let g = fg.graph();
    let ed = g.edge(e);
    let con = g.constraint(ed.con);
    let range = g.con_edges(ed.con);
    let supports: Vec<Vec<u16>> =
        range.clone().map(|b| if b == e { vec![u16::MAX] } else { left_support(&lefts[b]) }).collect();
    let needed = supports.iter().fold(per_tuple as u128, |acc, s| acc.saturating_mul(s.len() as u128));
    check_budget(needed, budget)?;
    let mut odo = Odometer::new(supports.iter().map(Vec::len).collect());
    let mut masks = vec![0u16; supports.len()];
    while let Some(digits) = odo.current() {
        for (i, &di) in digits.iter().enumerate() {
            masks[i] = supports[i][di];
        }
        if let Some(r) = con.forced_masks(ed.pos, &masks) {
            let mut weight_of = |a: Token| {
                let mut m = masks.clone();
                m[ed.pos] = a.mask();
                let mut w = 1.0;
                for (pos, b) in range.clone().enumerate() {
                    if pos == ed.pos {
                        continue;
                    }
                    let Some(f) = con.forced_masks(pos, &m) else { return 0.0 };
                    let sl = Token::new(m[pos]).expect("supported tokens are nonempty");
                    w *= lefts[b].get(sl, f);
                    if w == 0.0 {
                        return 0.0;
                    }
                }
                w
            };
            visit(r, &mut weight_of);
        }
        odo.advance();
    }
    Ok(())
}

/// Unnormalized BP right message on edge `e`:
/// `ρ(a, r) = Σ [r = F_c(others)] ∏_u λ_u(sL_u, F_c at u with sL_v = a)`.
/// The tuples of supported left tokens of the other coordinates, times the
/// number of tokens, must stay within `budget`.
pub fn bp_right_update(fg: &ForneyGraph, e: EdgeId, lefts: &[StateMsg], budget: u64) -> Result<StateMsg> {
    let q = fg.q();
    let mut out = StateMsg::zeros(q);
    right_enumerate(fg, e, lefts, budget, (1u64 << q) - 1, |r, weight_of| {
        for a in r.subsets() {
            let w = weight_of(a);
            if w != 0.0 {
                out.add(a, r, w);
            }
        }
    })?;
    Ok(out)
}

/// Diagonal `r ↦ ρ(r, r)` of the BP right message on `e`, without the
/// off-diagonal entries.
pub fn bp_right_diagonal(fg: &ForneyGraph, e: EdgeId, lefts: &[StateMsg], budget: u64) -> Result<TokenDist> {
    let mut out = TokenDist::zeros(fg.q());
    right_enumerate(fg, e, lefts, budget, 1, |r, weight_of| {
        let w = weight_of(r);
        if w != 0.0 {
            out.add(r, w);
        }
    })?;
    Ok(out)
}

/// Whether `m(a, r) = m(r, r)` for every `a ⊊ r`, up to `tol` times the
/// largest entry.
pub fn is_state_decoupled(msg: &StateMsg, tol: f64) -> bool {
    let bound = tol * msg.max_entry();
    Token::all(msg.q).all(|r| {
        let diag = msg.get(r, r);
        r.subsets().all(|a| (msg.get(a, r) - diag).abs() <= bound)
    })
}

/// The state-decoupled right message `ρ*(r) = ρ(r, r) / Σ_r ρ(r, r)`.
pub fn decouple(msg: &StateMsg, what: &str) -> Result<TokenDist> {
    msg.diagonal().normalized(what)
}

/// The table `(a, r) ↦ d(r)` on the supported states of `e`.
pub fn lift_decoupled(fg: &ForneyGraph, e: EdgeId, d: &TokenDist) -> StateMsg {
    let mut m = StateMsg::zeros(fg.q());
    for (a, r) in fg.states(e) {
        m.set(a, r, d.get(r));
    }
    m
}

/// Decoupled right messages built from token-passing right messages:
/// `ρ(a, r) = ρ_PTP(r)` for every supported `(a, r)`.
pub fn decoupled_rights_from_ptp(fg: &ForneyGraph, rights: &[TokenDist]) -> Result<Vec<StateMsg>> {
    let g = fg.graph();
    if rights.len() != g.n_edges() {
        return Err(Error::InitError(format!("{} messages for {} edges", rights.len(), g.n_edges())));
    }
    Ok((0..g.n_edges()).map(|e| lift_decoupled(fg, e, &rights[e])).collect())
}

/// Random right messages with independent entries in `[0.1, 1)` on every
/// supported state, normalized to unit total. They are not decoupled.
pub fn random_rights(fg: &ForneyGraph, seed: u64) -> Vec<StateMsg> {
    let mut rng = rng_from_seed(seed);
    (0..fg.graph().n_edges())
        .map(|e| {
            let mut m = StateMsg::zeros(fg.q());
            for (a, r) in fg.states(e) {
                m.set(a, r, rng.gen_range(0.1..1.0));
            }
            let z = m.total();
            m.scaled(1.0 / z)
        })
        .collect()
}

/// How BP messages are scaled between half-iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpNorm {
    /// Left and right messages scaled to unit total.
    #[default]
    Total,
    /// Left messages divided by `Σ_a λ(a, full token)` and right messages
    /// left unscaled. This is the scaling under which k-SAT BP reproduces
    /// weighted token passing entry by entry.
    KsatFullColumn,
}

/// Messages of a BP run, indexed by edge and coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpState {
    /// Left messages; empty before the first iteration.
    pub left: Vec<StateMsg>,
    pub right: Vec<StateMsg>,
    /// Normalized summaries from the current right messages.
    pub summary: Vec<TokenDist>,
    pub iteration: usize,
    pub delta: f64,
}

/// BP on a Forney graph under a scaling mode.
#[derive(Debug, Clone)]
pub struct Bp<'f, 'g> {
    fg: &'f ForneyGraph<'g>,
    norm: BpNorm,
    budget: u64,
}

impl<'f, 'g> Bp<'f, 'g> {
    pub fn new(fg: &'f ForneyGraph<'g>, norm: BpNorm, budget: u64) -> Bp<'f, 'g> {
        Bp { fg, norm, budget }
    }

    pub fn forney(&self) -> &'f ForneyGraph<'g> {
        self.fg
    }

    fn scale_left(&self, m: StateMsg, what: &str) -> Result<StateMsg> {
        match self.norm {
            BpNorm::Total => m.normalized(what),
            BpNorm::KsatFullColumn => {
                let full = Token::full(self.fg.q());
                let z: f64 = Token::all(self.fg.q()).map(|a| m.get(a, full)).sum();
                if !(z.is_finite() && z > 0.0) {
                    return Err(Error::DegenerateMessage(what.to_string()));
                }
                Ok(m.scaled(1.0 / z))
            }
        }
    }

    fn scale_right(&self, m: StateMsg, what: &str) -> Result<StateMsg> {
        match self.norm {
            BpNorm::Total => m.normalized(what),
            BpNorm::KsatFullColumn => {
                if m.total().is_nan() || m.total() <= 0.0 {
                    return Err(Error::DegenerateMessage(what.to_string()));
                }
                Ok(m)
            }
        }
    }

    /// Scaled left messages on every edge.
    pub fn lefts(&self, rights: &[StateMsg]) -> Result<Vec<StateMsg>> {
        let g = self.fg.graph();
        (0..g.n_edges())
            .map(|e| self.scale_left(bp_left_update(self.fg, e, rights), &format!("bp left {}", g.left_edge(e))))
            .collect()
    }

    /// Scaled right messages on every edge.
    pub fn rights(&self, lefts: &[StateMsg]) -> Result<Vec<StateMsg>> {
        let g = self.fg.graph();
        (0..g.n_edges())
            .map(|e| {
                let m = bp_right_update(self.fg, e, lefts, self.budget)?;
                self.scale_right(m, &format!("bp right {}", g.right_edge(e)))
            })
            .collect()
    }

    /// Normalized summaries.
    pub fn summaries(&self, rights: &[StateMsg]) -> Result<Vec<TokenDist>> {
        (0..self.fg.graph().n_vars())
            .map(|v| bp_summary(self.fg, v, rights).normalized(&format!("bp summary v{v}")))
            .collect()
    }

    /// A state from initial right messages, which are checked and then
    /// scaled as the mode prescribes.
    pub fn init(&self, rights: Vec<StateMsg>) -> Result<BpState> {
        let g = self.fg.graph();
        if rights.len() != g.n_edges() {
            return Err(Error::InitError(format!("{} messages for {} edges", rights.len(), g.n_edges())));
        }
        let right = rights
            .into_iter()
            .enumerate()
            .map(|(e, m)| {
                if m.q() != g.q() {
                    return Err(Error::InitError("message over the wrong alphabet".into()));
                }
                m.check().map_err(|err| Error::InitError(err.to_string()))?;
                self.scale_right(m, &format!("initial bp right {}", g.right_edge(e)))
                    .map_err(|err| Error::InitError(err.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let summary = self.summaries(&right)?;
        Ok(BpState { left: Vec::new(), right, summary, iteration: 0, delta: f64::INFINITY })
    }

    /// One flooding iteration: left messages, then right messages, then
    /// summaries. Returns the largest change of any message.
    pub fn step(&self, state: &mut BpState) -> Result<f64> {
        let left = self.lefts(&state.right)?;
        let right = self.rights(&left)?;
        let delta = max_change(&state.left, &left).max(max_change(&state.right, &right));
        state.summary = self.summaries(&right)?;
        state.left = left;
        state.right = right;
        state.iteration += 1;
        state.delta = delta;
        Ok(delta)
    }
}

fn max_change(old: &[StateMsg], new: &[StateMsg]) -> f64 {
    if old.len() != new.len() {
        return f64::INFINITY;
    }
    old.iter().zip(new).map(|(a, b)| a.linf(b)).fold(0.0, f64::max)
}

/// Unnormalized SDBP left message on `e`:
/// `λ(a, r) = Σ ω_v(a | r ∩ X) D(X)`, with `D` the weight of the
/// intersection of the other decoupled right tokens.
pub fn sdbp_left_update(fg: &ForneyGraph, e: EdgeId, right_star: &[TokenDist]) -> StateMsg {
    let g = fg.graph();
    let q = g.q();
    let v = g.edge(e).var;
    let d = intersection_fold(q, g.var_edges(v).iter().filter(|&&b| b != e).map(|&b| &right_star[b]));
    let mut out = StateMsg::zeros(q);
    for (a, r) in fg.states(e) {
        out.set(a, r, obey(fg.omega(v), a, r, &d));
    }
    out
}

/// SDBP summary at `v`, the weighted token-passing summary of the decoupled
/// right messages.
pub fn sdbp_summary(fg: &ForneyGraph, v: usize, right_star: &[TokenDist]) -> TokenDist {
    wptp_summary(fg.graph(), v, right_star, fg.omega(v))
}

/// Messages of an SDBP run. Left messages are kept unscaled; the decoupled
/// right messages carry unit total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdbpState {
    pub left: Vec<StateMsg>,
    pub right_star: Vec<TokenDist>,
    pub summary: Vec<TokenDist>,
    pub iteration: usize,
    pub delta: f64,
}

impl SdbpState {
    /// A state from initial decoupled right messages, normalized on entry.
    pub fn new(fg: &ForneyGraph, right_star: Vec<TokenDist>) -> Result<SdbpState> {
        let g = fg.graph();
        if right_star.len() != g.n_edges() || right_star.iter().any(|d| d.q() != g.q()) {
            return Err(Error::InitError(format!("{} messages for {} edges", right_star.len(), g.n_edges())));
        }
        let right_star = right_star
            .iter()
            .enumerate()
            .map(|(e, d)| d.normalized(&format!("initial sdbp right {}", g.right_edge(e))))
            .collect::<Result<Vec<_>>>()
            .map_err(|err| Error::InitError(err.to_string()))?;
        let summary = sdbp_summaries(fg, &right_star)?;
        Ok(SdbpState { left: Vec::new(), right_star, summary, iteration: 0, delta: f64::INFINITY })
    }
}

fn sdbp_summaries(fg: &ForneyGraph, right_star: &[TokenDist]) -> Result<Vec<TokenDist>> {
    (0..fg.graph().n_vars())
        .map(|v| sdbp_summary(fg, v, right_star).normalized(&format!("sdbp summary v{v}")))
        .collect()
}

/// One SDBP flooding iteration: left messages from the decoupled right
/// messages, right diagonals from the left messages, then the diagonal
/// normalization and the summaries. Returns the largest message change.
pub fn sdbp_step(fg: &ForneyGraph, state: &mut SdbpState) -> Result<f64> {
    let g = fg.graph();
    let left: Vec<StateMsg> = (0..g.n_edges()).map(|e| sdbp_left_update(fg, e, &state.right_star)).collect();
    let right_star = (0..g.n_edges())
        .map(|e| bp_right_diagonal(fg, e, &left, fg.budget())?.normalized(&format!("sdbp right {}", g.right_edge(e))))
        .collect::<Result<Vec<_>>>()?;
    let mut delta = max_change(&state.left, &left);
    delta = delta.max(state.right_star.iter().zip(&right_star).map(|(a, b)| a.linf(b)).fold(0.0, f64::max));
    state.summary = sdbp_summaries(fg, &right_star)?;
    state.left = left;
    state.right_star = right_star;
    state.iteration += 1;
    state.delta = delta;
    Ok(delta)
}

/// Closed-form BP updates for k-SAT under the `γ` conditional. States are
/// named relative to the label `L` of their own edge: `LL = ({L}, {L})`,
/// `L̄* = ({L̄}, full)`, `L* = ({L}, full)` and `** = (full, full)`.
pub mod ksat {
    use super::*;

    /// The four supported states for label `l`, in the order
    /// `LL, L̄*, L*, **`.
    pub fn states(l: u8) -> [(Token, Token); 4] {
        let lt = Token::singleton(l);
        let lb = Token::singleton(1 - l);
        let full = Token::full(2);
        [(lt, lt), (lb, full), (lt, full), (full, full)]
    }

    /// The four entries of `m` on edge `e`, in the order of [`states`].
    pub fn entries(g: &FactorGraph, e: EdgeId, m: &StateMsg) -> [f64; 4] {
        states(g.label(e).expect("k-SAT labels")).map(|(a, r)| m.get(a, r))
    }

    fn build(g: &FactorGraph, e: EdgeId, x: [f64; 4]) -> StateMsg {
        let mut m = StateMsg::zeros(2);
        for ((a, r), w) in states(g.label(e).expect("k-SAT labels")).into_iter().zip(x) {
            m.set(a, r, w);
        }
        m
    }

    fn require(g: &FactorGraph, gamma: f64) -> Result<()> {
        crate::ptp::check_gamma(gamma)?;
        match g.family() {
            Family::KSat => Ok(()),
            _ => Err(Error::ParamError("closed form needs a k-SAT graph".into())),
        }
    }

    /// Left message on `e`.
    pub fn left(g: &FactorGraph, e: EdgeId, rights: &[StateMsg], gamma: f64) -> Result<StateMsg> {
        require(g, gamma)?;
        let (same, diff) = g.split_by_label(e);
        let r = |b: EdgeId| entries(g, b, &rights[b]);
        let s_lbar: f64 = same.iter().map(|&b| r(b)[1]).product();
        let s_sum: f64 = same.iter().map(|&b| r(b)[0] + r(b)[2]).product();
        let s_lstar: f64 = same.iter().map(|&b| r(b)[2]).product();
        let u_lbar: f64 = diff.iter().map(|&b| r(b)[1]).product();
        let u_sum: f64 = diff.iter().map(|&b| r(b)[0] + r(b)[2]).product();
        let u_lstar: f64 = diff.iter().map(|&b| r(b)[2]).product();
        let all_ss: f64 = same.iter().chain(&diff).map(|&b| r(b)[3]).product();
        let ll = u_lbar * s_sum;
        let lbar_star = s_lbar * (u_sum - gamma * u_lstar);
        let l_star = u_lbar * (s_sum - gamma * s_lstar);
        let ss = gamma * all_ss;
        Ok(build(g, e, [ll, lbar_star, l_star, ss]))
    }

    /// Right message on `e`.
    pub fn right(g: &FactorGraph, e: EdgeId, lefts: &[StateMsg]) -> Result<StateMsg> {
        require(g, 0.0)?;
        let c = g.edge(e).con;
        let others: Vec<[f64; 4]> = g.con_edges(c).filter(|&b| b != e).map(|b| entries(g, b, &lefts[b])).collect();
        let all_lbar: f64 = others.iter().map(|x| x[1]).product();
        let all_open: f64 = others.iter().map(|x| x[2] + x[3] + x[1]).product();
        let mut correction = 0.0;
        for (i, xi) in others.iter().enumerate() {
            let rest: f64 = others.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| x[1]).product();
            correction += (xi[0] - xi[2] - xi[3]) * rest;
        }
        let ll = all_lbar;
        let lbar_star = all_open + correction - all_lbar;
        let l_star = all_open - all_lbar;
        Ok(build(g, e, [ll, lbar_star, l_star, l_star]))
    }

    /// Unnormalized summary at `v`, as weights on `{0}`, `{1}` and `{0,1}`.
    pub fn summary(g: &FactorGraph, v: usize, rights: &[StateMsg], gamma: f64) -> Result<TokenDist> {
        require(g, gamma)?;
        let by_label = |l: u8| -> Vec<[f64; 4]> {
            g.var_edges(v).iter().filter(|&&c| g.label(c) == Some(l)).map(|&c| entries(g, c, &rights[c])).collect()
        };
        let side = |l: u8| -> f64 {
            let own = by_label(l);
            let other = by_label(1 - l);
            let lbar: f64 = other.iter().map(|x| x[1]).product();
            let sum: f64 = own.iter().map(|x| x[0] + x[2]).product();
            let lstar: f64 = own.iter().map(|x| x[2]).product();
            lbar * (sum - gamma * lstar)
        };
        let all_ss: f64 = g.var_edges(v).iter().map(|&c| entries(g, c, &rights[c])[3]).product();
        TokenDist::from_weights(2, vec![side(0), side(1), gamma * all_ss])
    }
}

/// Closed-form BP and SDBP updates for 3-coloring under the indicator
/// conditional. Symbols `i, j, k` are the three colours in any order.
pub mod col3 {
    use super::*;

    fn require(g: &FactorGraph) -> Result<()> {
        if g.q() == 3 && g.family() == Family::QCol {
            Ok(())
        } else {
            Err(Error::ParamError("closed form needs a 3-coloring graph".into()))
        }
    }

    fn pairs_with(i: u8) -> [Token; 2] {
        let mut out = [Token::full(3); 2];
        let mut n = 0;
        for j in 0..3u8 {
            if j != i {
                out[n] = Token::from_symbols(&[i, j]).expect("pair");
                n += 1;
            }
        }
        out
    }

    fn complement(t: Token) -> Token {
        Token::new(Token::full(3).mask() & !t.mask()).expect("proper subset")
    }

    fn not_singleton() -> impl Iterator<Item = Token> {
        Token::all(3).filter(|t| t.len() >= 2)
    }

    /// Left-message entries from per-edge lookups `rho(b, a, r)`.
    fn left_from(edges: &[EdgeId], rho: impl Fn(EdgeId, Token, Token) -> f64, mut emit: impl FnMut(Token, Token, f64)) {
        let full = Token::full(3);
        let prod = |f: &dyn Fn(EdgeId) -> f64| -> f64 { edges.iter().map(|&b| f(b)).product() };
        for i in 0..3u8 {
            let a = Token::singleton(i);
            let [p, p2] = pairs_with(i);
            let all = prod(&|b| rho(b, a, p) + rho(b, a, p2) + rho(b, a, full));
            let with_p = prod(&|b| rho(b, a, p) + rho(b, a, full));
            let with_p2 = prod(&|b| rho(b, a, p2) + rho(b, a, full));
            let only_full = prod(&|b| rho(b, a, full));
            emit(a, p, all - with_p);
            emit(a, p2, all - with_p2);
            emit(a, full, all - with_p - with_p2 + only_full);
        }
        for t in Token::all(3).filter(|t| t.len() == 2) {
            let both = prod(&|b| rho(b, t, t) + rho(b, t, full));
            let only_full = prod(&|b| rho(b, t, full));
            emit(t, t, both);
            emit(t, full, both - only_full);
        }
        emit(full, full, prod(&|b| rho(b, full, full)));
    }

    fn other_edge(g: &FactorGraph, e: EdgeId) -> EdgeId {
        g.con_edges(g.edge(e).con).find(|&b| b != e).expect("binary constraint")
    }

    /// BP left message on `e`.
    pub fn left(g: &FactorGraph, e: EdgeId, rights: &[StateMsg]) -> Result<StateMsg> {
        require(g)?;
        let others: Vec<EdgeId> = g.var_edges(g.edge(e).var).iter().copied().filter(|&b| b != e).collect();
        let mut m = StateMsg::zeros(3);
        left_from(&others, |b, a, r| rights[b].get(a, r), |a, r, x| m.set(a, r, x));
        Ok(m)
    }

    /// BP right message on `e`.
    pub fn right(g: &FactorGraph, e: EdgeId, lefts: &[StateMsg]) -> Result<StateMsg> {
        require(g)?;
        let lu = &lefts[other_edge(g, e)];
        let full = Token::full(3);
        let open: f64 = not_singleton().map(|t| lu.get(t, full)).sum();
        let mut m = StateMsg::zeros(3);
        for i in 0..3u8 {
            let a = Token::singleton(i);
            for p in pairs_with(i) {
                let k = complement(p);
                let jk = complement(a);
                m.set(a, p, lu.get(k, jk));
            }
            m.set(a, full, lu.get(complement(a), complement(a)));
        }
        for t in Token::all(3).filter(|t| t.len() == 2) {
            m.set(t, t, lu.get(complement(t), full));
            m.set(t, full, open);
        }
        m.set(full, full, open);
        Ok(m)
    }

    /// Unnormalized BP summary at `v`.
    pub fn summary(g: &FactorGraph, v: usize, rights: &[StateMsg]) -> Result<TokenDist> {
        require(g)?;
        Ok(summary_from(g.var_edges(v), |b, a, r| rights[b].get(a, r)))
    }

    fn summary_from(edges: &[EdgeId], rho: impl Fn(EdgeId, Token, Token) -> f64) -> TokenDist {
        let full = Token::full(3);
        let mut d = TokenDist::zeros(3);
        left_from(edges, rho, |a, r, x| {
            if r == full {
                d.set(a, x);
            }
        });
        d
    }

    /// SDBP left message on `e` from decoupled right messages.
    pub fn sdbp_left(g: &FactorGraph, e: EdgeId, right_star: &[TokenDist]) -> Result<StateMsg> {
        require(g)?;
        let others: Vec<EdgeId> = g.var_edges(g.edge(e).var).iter().copied().filter(|&b| b != e).collect();
        let mut m = StateMsg::zeros(3);
        left_from(&others, |b, a, r| if a.is_subset(r) { right_star[b].get(r) } else { 0.0 }, |a, r, x| m.set(a, r, x));
        Ok(m)
    }

    /// Decoupled SDBP right message on `e`.
    pub fn sdbp_right_star(g: &FactorGraph, e: EdgeId, lefts: &[StateMsg]) -> Result<TokenDist> {
        require(g)?;
        let lu = &lefts[other_edge(g, e)];
        let full = Token::full(3);
        let mut d = TokenDist::zeros(3);
        for t in Token::all(3).filter(|t| t.len() == 2) {
            d.set(t, lu.get(complement(t), full));
        }
        d.set(full, not_singleton().map(|t| lu.get(t, full)).sum());
        d.normalized(&format!("sdbp right {}", g.right_edge(e)))
    }

    /// Unnormalized SDBP summary at `v`.
    pub fn sdbp_summary(g: &FactorGraph, v: usize, right_star: &[TokenDist]) -> Result<TokenDist> {
        require(g)?;
        Ok(summary_from(g.var_edges(v), |b, a, r| if a.is_subset(r) { right_star[b].get(r) } else { 0.0 }))
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::gen::{gen_random_ksat, gen_random_qcol};
    use crate::ptp::{Ptp, PtpInit, PtpMode};

    const TOL: f64 = 1e-10;

    type EdgeState = (Token, Token);

    fn tok(s: &str) -> Token {
        s.parse().unwrap()
    }

    fn random_msgs(fg: &ForneyGraph, seed: u64) -> Vec<StateMsg> {
        random_rights(fg, seed)
    }

    /// BP left message by enumerating every tuple of other right tokens.
    fn left_by_tuples(fg: &ForneyGraph, e: EdgeId, rights: &[StateMsg]) -> StateMsg {
        let g = fg.graph();
        let q = g.q();
        let v = g.edge(e).var;
        let others: Vec<EdgeId> = g.var_edges(v).iter().copied().filter(|&b| b != e).collect();
        let mut out = StateMsg::zeros(q);
        for (a, r) in fg.states(e) {
            let mut odo = Odometer::new(vec![(1 << q) - 1; others.len()]);
            let mut acc = 0.0;
            while let Some(d) = odo.current() {
                let mut w = 1.0;
                let mut inter = Some(r);
                for (i, &b) in others.iter().enumerate() {
                    let rb = Token::from_index(d[i]);
                    w *= rights[b].get(a, rb);
                    inter = inter.and_then(|x| x.intersect(rb));
                }
                acc += fg.omega(v).get(a, inter) * w;
                odo.advance();
            }
            out.set(a, r, acc);
        }
        out
    }

    /// BP right message by enumerating every tuple of other left tokens.
    fn right_by_tuples(fg: &ForneyGraph, e: EdgeId, lefts: &[StateMsg]) -> StateMsg {
        let g = fg.graph();
        let q = g.q();
        let ed = g.edge(e);
        let con = g.constraint(ed.con);
        let others: Vec<EdgeId> = g.con_edges(ed.con).filter(|&b| b != e).collect();
        let mut out = StateMsg::zeros(q);
        for a in Token::all(q) {
            let mut odo = Odometer::new(vec![(1 << q) - 1; others.len()]);
            while let Some(d) = odo.current() {
                let mut sides = vec![Some(a); con.arity()];
                for (i, &b) in others.iter().enumerate() {
                    sides[g.edge(b).pos] = Some(Token::from_index(d[i]));
                }
                if let Some(r) = con.forced(ed.pos, &sides) {
                    let mut w = 1.0;
                    for &b in &others {
                        let pos = g.edge(b).pos;
                        w *= match con.forced(pos, &sides) {
                            Some(f) => lefts[b].get(sides[pos].unwrap(), f),
                            None => 0.0,
                        };
                    }
                    if a.is_subset(r) {
                        out.add(a, r, w);
                    }
                }
                odo.advance();
            }
        }
        out
    }

    fn random_ksat(seed: u64) -> FactorGraph {
        gen_random_ksat(7, 12, 3, seed, None).unwrap().graph
    }

    fn random_col3(seed: u64) -> FactorGraph {
        gen_random_qcol(7, 12, 3, seed, None).unwrap().graph
    }

    fn ptp_rights(g: &FactorGraph, seed: u64) -> Vec<TokenDist> {
        let ptp = Ptp::new(g, PtpMode::Plain, DEFAULT_BUDGET).unwrap();
        ptp.init(&PtpInit::default(), seed).unwrap().right
    }

    #[test]
    fn state_message_basics() {
        let mut m = StateMsg::zeros(2);
        m.set(tok("0"), tok("01"), 1.0);
        m.set(tok("01"), tok("01"), 3.0);
        assert_eq!(m.total(), 4.0);
        assert_eq!(m.max_entry(), 3.0);
        let n = m.normalized("x").unwrap();
        assert_eq!(n.get(tok("01"), tok("01")), 0.75);
        assert_eq!(n.diagonal().get(tok("01")), 0.75);
        assert!(matches!(StateMsg::zeros(2).normalized("edge"), Err(Error::DegenerateMessage(s)) if s == "edge"));
        let text = serde_json::to_string(&n).unwrap();
        assert_eq!(text, r#"{"q":2,"entries":{"01|01":0.75,"0|01":0.25}}"#);
        let back: StateMsg = serde_json::from_str(&text).unwrap();
        assert_eq!(back, n);
        assert!(serde_json::from_str::<StateMsg>(r#"{"q":2,"entries":{"0|01":-1.0}}"#).is_err());
        assert!(serde_json::from_str::<StateMsg>(r#"{"q":2,"entries":{"2|01":1.0}}"#).is_err());
    }

    #[test]
    fn forney_graph_rejects_bad_conditionals() {
        let g = fixtures::two_clause_3sat();
        assert!(ForneyGraph::new(&g, vec![ObedienceConditional::indicator(2)], DEFAULT_BUDGET).is_err());
        assert!(ForneyGraph::shared(&g, ObedienceConditional::indicator(3), DEFAULT_BUDGET).is_err());
        assert!(ForneyGraph::ksat(&g, 1.5).is_err());
        let tri = fixtures::triangle_with_tail(3);
        assert!(ForneyGraph::ksat(&tri, 0.5).is_err());
    }

    #[test]
    fn ksat_edges_support_exactly_four_states() {
        let g = fixtures::two_clause_3sat();
        let fg = ForneyGraph::ksat(&g, 0.5).unwrap();
        for e in 0..g.n_edges() {
            let mut expect = ksat::states(g.label(e).unwrap()).to_vec();
            expect.sort();
            let mut got = fg.states(e);
            got.sort();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn left_and_right_functions() {
        let g = fixtures::two_clause_3sat();
        let fg = ForneyGraph::ksat(&g, 0.3).unwrap();
        let full = tok("01");
        // y = 0 with both right tokens full: ω(0 | 01) = 1 - γ.
        assert!((left_function(&fg, 0, tok("0"), &[(tok("0"), full), (tok("0"), full)]) - 0.7).abs() < 1e-15);
        assert_eq!(left_function(&fg, 0, tok("0"), &[(tok("1"), full), (tok("0"), full)]), 0.0);
        assert_eq!(left_function(&fg, 0, tok("0"), &[(tok("0"), tok("1")), (tok("0"), full)]), 0.0);
        // Clause 0 is (x0 ∨ x1 ∨ ¬x2). With left tokens x0 = 0, x1 = 0 and
        // x2 = 1 every literal is false, so each coordinate is forced to
        // its own satisfying value.
        let states = [(tok("0"), tok("1")), (tok("0"), tok("1")), (tok("1"), tok("0"))];
        assert_eq!(right_function(&fg, 0, &states), 1.0);
        let wrong = [(tok("0"), tok("1")), (tok("0"), full), (tok("1"), tok("0"))];
        assert_eq!(right_function(&fg, 0, &wrong), 0.0);
    }

    #[test]
    fn mismatched_left_state_gives_zero() {
        let g = fixtures::two_clause_3sat();
        let fg = ForneyGraph::ksat(&g, 0.5).unwrap();
        let configs = enumerate_valid(&fg, DEFAULT_BUDGET).unwrap();
        let cfg = &configs[0];
        let mut s = cfg.s.clone();
        let e = 0;
        let other = if s[e].0 == tok("0") { tok("1") } else { tok("0") };
        s[e].0 = other;
        assert_eq!(global_f(&fg, &cfg.y, &s).unwrap(), 0.0);
        assert!(global_f(&fg, &cfg.y[..2], &cfg.s).is_err());
        assert!(global_f(&fg, &cfg.y, &cfg.s[..3]).is_err());
    }

    /// Independent count of the `γ` exponents of a configuration, with the
    /// weight multiplied out coordinate by coordinate in index order.
    fn gamma_weight(g: &FactorGraph, y: &[Token], s: &[(Token, Token)], gamma: f64) -> (i32, i32, f64) {
        let mut both = 0;
        let mut open = 0;
        let mut weight = 1.0;
        for (v, &yv) in y.iter().enumerate() {
            let all_full = g.var_edges(v).iter().all(|&e| s[e].1 == Token::full(2));
            if all_full && yv == Token::full(2) {
                both += 1;
                weight *= gamma;
            } else if all_full {
                open += 1;
                weight *= 1.0 - gamma;
            }
        }
        (both, open, weight)
    }

    /// Every `(y, sR)` pair with `sL = y`, evaluated straight from the
    /// definitions; configurations with `sL ≠ y` are zero by the indicator.
    fn brute_support(fg: &ForneyGraph) -> Vec<(Vec<Token>, Vec<EdgeState>, f64)> {
        let g = fg.graph();
        let q = g.q();
        let nt = (1usize << q) - 1;
        let mut out = Vec::new();
        let mut radices = vec![nt; g.n_vars()];
        radices.extend(vec![nt; g.n_edges()]);
        let mut odo = Odometer::new(radices);
        while let Some(d) = odo.current() {
            let y: Vec<Token> = d[..g.n_vars()].iter().map(|&i| Token::from_index(i)).collect();
            let s: Vec<(Token, Token)> =
                (0..g.n_edges()).map(|e| (y[g.edge(e).var], Token::from_index(d[g.n_vars() + e]))).collect();
            let mut value = 1.0;
            for c in 0..g.n_constraints() {
                let con = g.constraint(c);
                let sides: Vec<Option<Token>> = g.con_edges(c).map(|e| Some(s[e].0)).collect();
                for (pos, e) in g.con_edges(c).enumerate() {
                    if con.forced(pos, &sides) != Some(s[e].1) {
                        value = 0.0;
                    }
                }
            }
            for v in 0..g.n_vars() {
                let mut inter = Some(Token::full(q));
                for &e in g.var_edges(v) {
                    inter = inter.and_then(|x| x.intersect(s[e].1));
                }
                value *= fg.omega(v).get(y[v], inter);
            }
            if value > 0.0 {
                out.push((y, s, value));
            }
            odo.advance();
        }
        out
    }

    #[test]
    fn valid_configurations_follow_support_and_weight_laws() {
        let g = fixtures::two_clause_3sat();
        for gamma in [0.3, 1.0] {
            let fg = ForneyGraph::ksat(&g, gamma).unwrap();
            let configs = enumerate_valid(&fg, DEFAULT_BUDGET).unwrap();
            let brute = brute_support(&fg);
            assert_eq!(configs.len(), brute.len());
            for (cfg, (y, s, value)) in configs.iter().zip(&brute) {
                assert_eq!(&cfg.y, y);
                assert_eq!(&cfg.s, s);
                assert_eq!(cfg.value, *value);
                assert_eq!(global_f(&fg, &cfg.y, &cfg.s).unwrap(), cfg.value);
                let (both, open, weight) = gamma_weight(&g, &cfg.y, &cfg.s, gamma);
                assert_eq!(cfg.value, weight);
                assert!((cfg.value - gamma.powi(both) * (1.0 - gamma).powi(open)).abs() < 1e-15);
                for (e, &(a, r)) in cfg.s.iter().enumerate() {
                    let l = Token::singleton(g.label(e).unwrap());
                    let lbar = Token::singleton(1 - g.label(e).unwrap());
                    assert!(a.is_subset(r));
                    assert_ne!(r, lbar);
                    assert_ne!((a, r), (lbar, l));
                    assert_ne!((a, r), (Token::full(2), l));
                }
            }
        }
    }

    #[test]
    fn singleton_sides_are_valid_exactly_on_solutions() {
        let g = fixtures::two_clause_3sat();
        let fg = ForneyGraph::ksat(&g, 0.5).unwrap();
        let configs = enumerate_valid(&fg, DEFAULT_BUDGET).unwrap();
        let mut from_configs: Vec<Vec<u8>> = configs
            .iter()
            .filter(|c| c.y.iter().all(|t| t.is_singleton()))
            .map(|c| c.y.iter().map(|t| t.singleton_symbol().unwrap()).collect())
            .collect();
        from_configs.sort();
        let mut solutions = Vec::new();
        for x in 0..8u8 {
            let a = vec![x & 1, (x >> 1) & 1, (x >> 2) & 1];
            if g.satisfies(&a).unwrap() {
                solutions.push(a);
            }
        }
        solutions.sort();
        assert_eq!(from_configs, solutions);

        let unsat = fixtures::unsat_pair();
        let fu = ForneyGraph::indicator(&unsat).unwrap();
        let configs = enumerate_valid(&fu, DEFAULT_BUDGET).unwrap();
        assert!(configs.iter().all(|c| c.y.iter().any(|t| !t.is_singleton())));
    }

    #[test]
    fn enumeration_respects_budget() {
        let g = fixtures::two_clause_3sat();
        let fg = ForneyGraph::ksat(&g, 0.5).unwrap();
        assert!(matches!(enumerate_valid(&fg, 26), Err(Error::BudgetExceeded { needed: 27, budget: 26 })));
    }

    #[test]
    fn global_function_factorizes_on_random_configurations() {
        let g = random_col3(3);
        let fg = ForneyGraph::shared(&g, ObedienceConditional::random(3, 9), DEFAULT_BUDGET).unwrap();
        let mut rng = rng_from_seed(17);
        let q = g.q();
        let nt = (1usize << q) - 1;
        let valid = enumerate_valid(&fg, DEFAULT_BUDGET).unwrap();
        for trial in 0..10_000 {
            let (y, s) = if trial % 4 == 0 && !valid.is_empty() {
                let c = &valid[rng.gen_range(0..valid.len())];
                (c.y.clone(), c.s.clone())
            } else {
                let y: Vec<Token> = (0..g.n_vars()).map(|_| Token::from_index(rng.gen_range(0..nt))).collect();
                let s: Vec<(Token, Token)> = (0..g.n_edges())
                    .map(|e| {
                        let a =
                            if rng.gen_bool(0.7) { y[g.edge(e).var] } else { Token::from_index(rng.gen_range(0..nt)) };
                        (a, Token::from_index(rng.gen_range(0..nt)))
                    })
                    .collect();
                (y, s)
            };
            let mut expect = 1.0;
            for v in 0..g.n_vars() {
                let states: Vec<_> = g.var_edges(v).iter().map(|&e| s[e]).collect();
                expect *= left_function(&fg, v, y[v], &states);
            }
            for c in 0..g.n_constraints() {
                expect *= right_function(&fg, c, &s[g.con_edges(c)]);
            }
            assert_eq!(global_f(&fg, &y, &s).unwrap(), expect);
            let listed = valid.iter().find(|c| c.y == y && c.s == s).map_or(0.0, |c| c.value);
            assert_eq!(expect, listed);
        }
    }

    #[test]
    fn generic_updates_match_tuple_enumeration() {
        let graphs = [(random_ksat(1), 0u64), (random_col3(2), 1), (fixtures::incompatible_triangle(), 2)];
        for (g, seed) in &graphs {
            let fg = ForneyGraph::shared(g, ObedienceConditional::random(g.q(), *seed), DEFAULT_BUDGET).unwrap();
            let rights = random_msgs(&fg, seed + 10);
            let lefts = random_msgs(&fg, seed + 20);
            for e in 0..g.n_edges() {
                assert!(bp_left_update(&fg, e, &rights).linf(&left_by_tuples(&fg, e, &rights)) < 1e-12);
                let r = bp_right_update(&fg, e, &lefts, DEFAULT_BUDGET).unwrap();
                assert!(r.linf(&right_by_tuples(&fg, e, &lefts)) < 1e-12);
                let diag = bp_right_diagonal(&fg, e, &lefts, DEFAULT_BUDGET).unwrap();
                assert!(diag.linf(&r.diagonal()) < 1e-12);
            }
        }
    }

    #[test]
    fn full_rights_give_full_lefts() {
        let g = random_col3(0);
        let fg = ForneyGraph::indicator(&g).unwrap();
        let full = Token::full(3);
        let rights: Vec<StateMsg> = (0..g.n_edges())
            .map(|_| {
                let mut m = StateMsg::zeros(3);
                m.set(full, full, 1.0);
                m
            })
            .collect();
        for e in 0..g.n_edges() {
            let l = bp_left_update(&fg, e, &rights);
            let support: Vec<_> = l.support().map(|(a, r, _)| (a, r)).collect();
            assert_eq!(support, vec![(full, full)]);
        }
    }

    #[test]
    fn ksat_closed_forms_match_generic() {
        for seed in 0..4 {
            let g = random_ksat(seed);
            for gamma in [0.0, 0.3, 1.0] {
                let fg = ForneyGraph::ksat(&g, gamma).unwrap();
                let rights = random_msgs(&fg, seed + 100);
                let lefts = random_msgs(&fg, seed + 200);
                for e in 0..g.n_edges() {
                    let closed = ksat::left(&g, e, &rights, gamma).unwrap();
                    assert!(closed.linf(&bp_left_update(&fg, e, &rights)) < TOL);
                    let closed = ksat::right(&g, e, &lefts).unwrap();
                    assert!(closed.linf(&bp_right_update(&fg, e, &lefts, DEFAULT_BUDGET).unwrap()) < TOL);
                }
                for v in 0..g.n_vars() {
                    let closed = ksat::summary(&g, v, &rights, gamma).unwrap();
                    assert!(closed.linf(&bp_summary(&fg, v, &rights)) < TOL);
                }
            }
        }
    }

    #[test]
    fn coloring_closed_forms_match_generic() {
        for seed in 0..4 {
            let g = random_col3(seed);
            let fg = ForneyGraph::indicator(&g).unwrap();
            let rights = random_msgs(&fg, seed + 100);
            let lefts = random_msgs(&fg, seed + 200);
            let stars: Vec<TokenDist> = rights.iter().map(|m| decouple(m, "t").unwrap()).collect();
            for e in 0..g.n_edges() {
                assert!(col3::left(&g, e, &rights).unwrap().linf(&bp_left_update(&fg, e, &rights)) < TOL);
                let generic = bp_right_update(&fg, e, &lefts, DEFAULT_BUDGET).unwrap();
                assert!(col3::right(&g, e, &lefts).unwrap().linf(&generic) < TOL);
                assert!(col3::sdbp_left(&g, e, &stars).unwrap().linf(&sdbp_left_update(&fg, e, &stars)) < TOL);
                let star = decouple(&generic, "t").unwrap();
                assert!(col3::sdbp_right_star(&g, e, &lefts).unwrap().linf(&star) < TOL);
            }
            for v in 0..g.n_vars() {
                assert!(col3::summary(&g, v, &rights).unwrap().linf(&bp_summary(&fg, v, &rights)) < TOL);
                assert!(col3::sdbp_summary(&g, v, &stars).unwrap().linf(&sdbp_summary(&fg, v, &stars)) < TOL);
            }
        }
        let k = random_ksat(0);
        assert!(col3::left(&k, 0, &[]).is_err());
    }

    #[test]
    fn sdbp_left_is_bp_left_of_the_lifted_message() {
        let g = fixtures::incompatible_triangle();
        let fg = ForneyGraph::shared(&g, ObedienceConditional::random(3, 4), DEFAULT_BUDGET).unwrap();
        let stars: Vec<TokenDist> = random_msgs(&fg, 5).iter().map(|m| decouple(m, "t").unwrap()).collect();
        let lifted: Vec<StateMsg> = stars.iter().enumerate().map(|(e, d)| lift_decoupled(&fg, e, d)).collect();
        for e in 0..g.n_edges() {
            assert!(sdbp_left_update(&fg, e, &stars).linf(&bp_left_update(&fg, e, &lifted)) < 1e-14);
        }
    }

    #[test]
    fn decoupling_check() {
        let mut m = StateMsg::zeros(2);
        for (a, r) in ksat::states(0) {
            m.set(a, r, 0.25);
        }
        assert!(is_state_decoupled(&m, TOL));
        m.set(tok("0"), tok("0"), 0.9);
        assert!(is_state_decoupled(&m, TOL));
        m.set(tok("1"), tok("01"), 0.3);
        assert!(!is_state_decoupled(&m, TOL));
        assert!(is_state_decoupled(&m, 0.1));
        assert!(is_state_decoupled(&StateMsg::zeros(3), TOL));
    }

    #[test]
    fn ksat_decoupling_is_preserved() {
        for seed in 0..3 {
            let g = random_ksat(seed);
            let fg = ForneyGraph::ksat(&g, 0.6).unwrap();
            for norm in [BpNorm::Total, BpNorm::KsatFullColumn] {
                let bp = Bp::new(&fg, norm, DEFAULT_BUDGET);
                let init = decoupled_rights_from_ptp(&fg, &ptp_rights(&g, seed)).unwrap();
                let mut state = bp.init(init).unwrap();
                for _ in 0..50 {
                    bp.step(&mut state).unwrap();
                    assert!(state.right.iter().all(|m| is_state_decoupled(m, TOL)));
                }
            }
        }
    }

    #[test]
    fn ksat_random_init_is_not_decoupled() {
        let g = random_ksat(0);
        let fg = ForneyGraph::ksat(&g, 0.6).unwrap();
        let bp = Bp::new(&fg, BpNorm::Total, DEFAULT_BUDGET);
        let state = bp.init(random_rights(&fg, 1)).unwrap();
        assert!(state.right.iter().any(|m| !is_state_decoupled(m, TOL)));
    }

    #[test]
    fn coloring_decoupling_breaks_after_one_step() {
        let g = random_col3(5);
        let fg = ForneyGraph::indicator(&g).unwrap();
        let bp = Bp::new(&fg, BpNorm::Total, DEFAULT_BUDGET);
        let init = decoupled_rights_from_ptp(&fg, &ptp_rights(&g, 3)).unwrap();
        assert!(init.iter().all(|m| is_state_decoupled(m, TOL)));
        let mut state = bp.init(init).unwrap();
        bp.step(&mut state).unwrap();
        assert!(state.right.iter().any(|m| !is_state_decoupled(m, TOL)));

        // The trivial decoupled state, all mass on the full token, stays
        // decoupled.
        let full = Token::full(3);
        let trivial = (0..g.n_edges()).map(|e| lift_decoupled(&fg, e, &TokenDist::point(3, full))).collect();
        let mut state = bp.init(trivial).unwrap();
        bp.step(&mut state).unwrap();
        assert!(state.right.iter().all(|m| is_state_decoupled(m, TOL)));
    }

    #[test]
    fn coloring_decoupling_twice_forces_trivial_rights() {
        let g = random_col3(6);
        let fg = ForneyGraph::indicator(&g).unwrap();
        let bp = Bp::new(&fg, BpNorm::Total, DEFAULT_BUDGET);
        let full = Token::full(3);
        let mut rng = rng_from_seed(8);
        for trial in 0..200 {
            // Decoupled rights with positive full-token mass; pair tokens
            // are zeroed at random so that some trials are trivial.
            let zero_prob = [0.0, 0.5, 0.9, 1.0][trial % 4];
            let rights: Vec<StateMsg> = (0..g.n_edges())
                .map(|e| {
                    let mut d = TokenDist::zeros(3);
                    d.set(full, rng.gen_range(0.1..1.0));
                    for t in Token::all(3).filter(|t| t.len() == 2) {
                        if !rng.gen_bool(zero_prob) {
                            d.set(t, rng.gen_range(0.1..1.0));
                        }
                    }
                    lift_decoupled(&fg, e, &d)
                })
                .collect();
            let mut state = bp.init(rights.clone()).unwrap();
            bp.step(&mut state).unwrap();
            let next_decoupled = state.right.iter().all(|m| is_state_decoupled(m, TOL));
            let trivial = rights.iter().all(|m| m.support().all(|(_, r, _)| r == full));
            assert_eq!(next_decoupled, trivial, "trial {trial}");
        }
    }

    #[test]
    fn sdbp_step_on_decoupled_rights_is_bp_then_diagonal() {
        let g = random_col3(7);
        let fg = ForneyGraph::indicator(&g).unwrap();
        let stars: Vec<TokenDist> = ptp_rights(&g, 2);
        let lifted = decoupled_rights_from_ptp(&fg, &stars).unwrap();
        let mut sd = SdbpState::new(&fg, stars).unwrap();
        sdbp_step(&fg, &mut sd).unwrap();
        for e in 0..g.n_edges() {
            let left = bp_left_update(&fg, e, &lifted);
            assert!(left.linf(&sd.left[e]) < 1e-14);
        }
        for e in 0..g.n_edges() {
            let right = bp_right_update(&fg, e, &sd.left, DEFAULT_BUDGET).unwrap();
            assert!(decouple(&right, "t").unwrap().linf(&sd.right_star[e]) < 1e-14);
        }
    }

    #[test]
    fn ksat_sdbp_coincides_with_decoupled_bp() {
        let g = random_ksat(4);
        let fg = ForneyGraph::ksat(&g, 0.4).unwrap();
        let stars = ptp_rights(&g, 6);
        let bp = Bp::new(&fg, BpNorm::Total, DEFAULT_BUDGET);
        let mut state = bp.init(decoupled_rights_from_ptp(&fg, &stars).unwrap()).unwrap();
        let mut sd = SdbpState::new(&fg, stars).unwrap();
        for _ in 0..30 {
            bp.step(&mut state).unwrap();
            sdbp_step(&fg, &mut sd).unwrap();
            for e in 0..g.n_edges() {
                assert!(decouple(&state.right[e], "t").unwrap().linf(&sd.right_star[e]) < TOL);
                let sd_left = sd.left[e].normalized("t").unwrap();
                assert!(state.left[e].linf(&sd_left) < TOL);
            }
            for v in 0..g.n_vars() {
                assert!(state.summary[v].linf(&sd.summary[v]) < TOL);
            }
        }
    }

    #[test]
    fn sdbp_rejects_zero_diagonal() {
        let g = fixtures::triangle_with_tail(3);
        let fg = ForneyGraph::indicator(&g).unwrap();
        let zero = vec![TokenDist::zeros(3); g.n_edges()];
        assert!(matches!(SdbpState::new(&fg, zero), Err(Error::InitError(_))));
    }

    #[test]
    fn right_update_respects_budget() {
        let g = random_ksat(0);
        let fg = ForneyGraph::ksat(&g, 0.5).unwrap();
        let lefts = random_msgs(&fg, 1);
        // Two other coordinates with three left tokens each, times three.
        assert!(matches!(bp_right_update(&fg, 0, &lefts, 26), Err(Error::BudgetExceeded { needed: 27, budget: 26 })));
        assert!(bp_right_diagonal(&fg, 0, &lefts, 9).is_ok());
    }
}

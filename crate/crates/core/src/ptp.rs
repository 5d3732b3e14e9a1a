//! Probabilistic and weighted token passing.
//!
//! Messages are distributions over the `2^q - 1` tokens of a coordinate.
//! A left message is the distribution of the intersection of independent
//! random incoming right tokens, and a right message is the distribution of
//! the forced token of independent random incoming left tokens. Mass that
//! would land on the empty set is dropped, and the stored messages are
//! renormalized after every update.
//!
//! Weighted token passing replaces the intersection at a coordinate by an
//! obedience conditional `ω(a | b)`, which spreads the intersection `b`
//! over its subsets `a`. With the indicator conditional it is plain token
//! passing, bit for bit.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forced::{check_budget, forceable_at, Odometer, DEFAULT_BUDGET};
use crate::gen::rng_from_seed;
use crate::graph::{EdgeId, FactorGraph, Family};
use crate::token::Token;

/// Nonnegative weights over every token of an alphabet, indexed by
/// [`Token::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDist {
    q: usize,
    w: Vec<f64>,
}

impl TokenDist {
    /// All-zero weights.
    pub fn zeros(q: usize) -> TokenDist {
        TokenDist { q, w: vec![0.0; (1 << q) - 1] }
    }

    /// Equal weight on every token.
    pub fn uniform(q: usize) -> TokenDist {
        let n = (1usize << q) - 1;
        TokenDist { q, w: vec![1.0 / n as f64; n] }
    }

    /// All mass on `t`.
    pub fn point(q: usize, t: Token) -> TokenDist {
        let mut d = TokenDist::zeros(q);
        d.set(t, 1.0);
        d
    }

    /// Wraps a weight vector, checking its length and that every entry is
    /// finite and nonnegative.
    pub fn from_weights(q: usize, w: Vec<f64>) -> Result<TokenDist> {
        if w.len() != (1 << q) - 1 {
            return Err(Error::ParamError(format!("{} weights for {} tokens", w.len(), (1 << q) - 1)));
        }
        if let Some(x) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::ParamError(format!("token weight {x} is not a finite nonnegative number")));
        }
        Ok(TokenDist { q, w })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn get(&self, t: Token) -> f64 {
        self.w[t.index()]
    }

    pub fn set(&mut self, t: Token, x: f64) {
        self.w[t.index()] = x;
    }

    pub fn add(&mut self, t: Token, x: f64) {
        self.w[t.index()] += x;
    }

    /// Weights in token-index order.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn total(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Tokens with positive weight, in mask order.
    pub fn support(&self) -> impl Iterator<Item = (Token, f64)> + '_ {
        self.w.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, &x)| (Token::from_index(i), x))
    }

    /// Scales to unit total. `what` names the message in the error.
    pub fn normalized(&self, what: &str) -> Result<TokenDist> {
        let z = self.total();
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::DegenerateMessage(what.to_string()));
        }
        Ok(TokenDist { q: self.q, w: self.w.iter().map(|x| x / z).collect() })
    }

    /// Largest absolute entry difference.
    pub fn linf(&self, other: &TokenDist) -> f64 {
        self.w.iter().zip(&other.w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Weight of the singleton token `{s}`.
    pub fn singleton_mass(&self, s: u8) -> f64 {
        self.get(Token::singleton(s))
    }
}

#[derive(Serialize, Deserialize)]
struct TokenDistRepr {
    q: usize,
    weights: BTreeMap<Token, f64>,
}

impl Serialize for TokenDist {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let weights = self.w.iter().enumerate().map(|(i, &x)| (Token::from_index(i), x)).collect();
        TokenDistRepr { q: self.q, weights }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TokenDist {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<TokenDist, D::Error> {
        let repr = TokenDistRepr::deserialize(deserializer)?;
        if !(2..=crate::token::MAX_Q).contains(&repr.q) {
            return Err(serde::de::Error::custom(format!("alphabet size {} out of range", repr.q)));
        }
        let mut d = TokenDist::zeros(repr.q);
        for (t, x) in repr.weights {
            if t.index() >= d.w.len() {
                return Err(serde::de::Error::custom(format!("token {t} outside alphabet of size {}", repr.q)));
            }
            d.w[t.index()] = x;
        }
        TokenDist::from_weights(repr.q, d.w).map_err(serde::de::Error::custom)
    }
}

/// An obedience conditional `ω(a | b)`: nonnegative, zero unless `a ⊆ b`,
/// and zero when `b` is empty. Stored as a table indexed by the token index
/// of `a` and the raw mask of `b` (mask 0 is the empty set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObedienceConditional {
    q: usize,
    table: Vec<f64>,
}

impl ObedienceConditional {
    /// Builds and validates a conditional from `f(a, b)`.
    pub fn from_fn(q: usize, f: impl Fn(Token, Token) -> f64) -> Result<ObedienceConditional> {
        let cols = 1usize << q;
        let mut table = vec![0.0; (cols - 1) * cols];
        for a in Token::all(q) {
            for b in Token::all(q) {
                table[a.index() * cols + b.mask() as usize] = f(a, b);
            }
        }
        let w = ObedienceConditional { q, table };
        w.validate()?;
        Ok(w)
    }

    /// `ω(a | b) = [a = b]`, under which weighted token passing is plain
    /// token passing.
    pub fn indicator(q: usize) -> ObedienceConditional {
        Self::from_fn(q, |a, b| if a == b { 1.0 } else { 0.0 }).expect("indicator is obedient")
    }

    /// The binary conditional with parameter `γ`: `γ` for `a = b = {0,1}`,
    /// `1 - γ` for a singleton `a` inside `b = {0,1}`, and `1` for
    /// `a = b` a singleton.
    pub fn ksat_gamma(gamma: f64) -> Result<ObedienceConditional> {
        check_gamma(gamma)?;
        let full = Token::full(2);
        Self::from_fn(2, |a, b| {
            if a == b && a == full {
                gamma
            } else if b == full && a.is_proper_subset(b) {
                1.0 - gamma
            } else if a == b {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Random obedient conditional with entries drawn from `[0.1, 1)` on
    /// every pair `a ⊆ b`.
    pub fn random(q: usize, seed: u64) -> ObedienceConditional {
        let mut rng = rng_from_seed(seed);
        let cols = 1usize << q;
        let mut table = vec![0.0; (cols - 1) * cols];
        for a in Token::all(q) {
            for b in Token::all(q) {
                if a.is_subset(b) {
                    table[a.index() * cols + b.mask() as usize] = rng.gen_range(0.1..1.0);
                }
            }
        }
        ObedienceConditional { q, table }
    }

    /// Checks the obedience invariants.
    pub fn validate(&self) -> Result<()> {
        let cols = 1usize << self.q;
        if self.table.len() != (cols - 1) * cols {
            return Err(Error::ParamError("conditional table has the wrong shape".into()));
        }
        for a in Token::all(self.q) {
            for bm in 0..cols {
                let x = self.table[a.index() * cols + bm];
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::ParamError(format!(
                        "ω({a} | mask {bm}) = {x} is not a finite nonnegative number"
                    )));
                }
                let obedient = bm != 0 && a.mask() as usize & !bm == 0;
                if !obedient && x != 0.0 {
                    return Err(Error::ParamError(format!("ω({a} | mask {bm}) must vanish")));
                }
            }
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// `ω(a | b)`, with `None` for the empty `b`.
    pub fn get(&self, a: Token, b: Option<Token>) -> f64 {
        self.get_mask(a, b.map_or(0, |t| t.mask() as usize))
    }

    fn get_mask(&self, a: Token, bm: usize) -> f64 {
        self.table[a.index() * (1 << self.q) + bm]
    }

    /// Whether this is the indicator conditional.
    pub fn is_indicator(&self) -> bool {
        *self == Self::indicator(self.q)
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::ParamError(format!("γ = {gamma} is outside [0, 1]")))
    }
}

/// Distribution of the intersection of independent random tokens, one per
/// incoming distribution, indexed by raw mask. Entry 0 (the empty set) is
/// dropped at every step and always reads zero.
pub(crate) fn intersection_fold<'a>(q: usize, incoming: impl IntoIterator<Item = &'a TokenDist>) -> Vec<f64> {
    let size = 1usize << q;
    let mut d = vec![0.0; size];
    d[size - 1] = 1.0;
    let mut next = vec![0.0; size];
    for rho in incoming {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (x, &dx) in d.iter().enumerate().skip(1) {
            if dx == 0.0 {
                continue;
            }
            for (si, &w) in rho.w.iter().enumerate() {
                if w != 0.0 {
                    next[x & (si + 1)] += dx * w;
                }
            }
        }
        std::mem::swap(&mut d, &mut next);
        d[0] = 0.0;
    }
    d
}

/// Turns an intersection distribution into a message, optionally through
/// an obedience conditional.
pub(crate) fn apply_conditional(q: usize, d: &[f64], omega: Option<&ObedienceConditional>) -> TokenDist {
    let mut out = TokenDist::zeros(q);
    match omega {
        None => out.w.copy_from_slice(&d[1..]),
        Some(w) => {
            for a in Token::all(q) {
                let mut acc = 0.0;
                for (bm, &dx) in d.iter().enumerate().skip(1) {
                    let f = w.get_mask(a, bm);
                    if f != 0.0 && dx != 0.0 {
                        acc += f * dx;
                    }
                }
                out.set(a, acc);
            }
        }
    }
    out
}

/// Unnormalized left message on edge `e` from the normalized right
/// messages (indexed by edge) of the other constraints at its coordinate.
pub fn ptp_left_update(g: &FactorGraph, e: EdgeId, rights: &[TokenDist]) -> TokenDist {
    left_raw(g, e, rights, None)
}

/// Weighted left message on edge `e`.
pub fn wptp_left_update(g: &FactorGraph, e: EdgeId, rights: &[TokenDist], omega: &ObedienceConditional) -> TokenDist {
    left_raw(g, e, rights, Some(omega))
}

fn left_raw(g: &FactorGraph, e: EdgeId, rights: &[TokenDist], omega: Option<&ObedienceConditional>) -> TokenDist {
    let v = g.edge(e).var;
    let d = intersection_fold(g.q(), g.var_edges(v).iter().filter(|&&b| b != e).map(|&b| &rights[b]));
    apply_conditional(g.q(), &d, omega)
}

/// Unnormalized summary at coordinate `v`.
pub fn ptp_summary(g: &FactorGraph, v: usize, rights: &[TokenDist]) -> TokenDist {
    summary_raw(g, v, rights, None)
}

/// Weighted summary at coordinate `v`.
pub fn wptp_summary(g: &FactorGraph, v: usize, rights: &[TokenDist], omega: &ObedienceConditional) -> TokenDist {
    summary_raw(g, v, rights, Some(omega))
}

fn summary_raw(g: &FactorGraph, v: usize, rights: &[TokenDist], omega: Option<&ObedienceConditional>) -> TokenDist {
    let d = intersection_fold(g.q(), g.var_edges(v).iter().map(|&b| &rights[b]));
    apply_conditional(g.q(), &d, omega)
}

/// Unnormalized right message on edge `e` from the normalized left messages
/// of the other coordinates of its constraint. Only tuples of supported
/// tokens are enumerated; their number must stay within `budget`.
pub fn ptp_right_update(g: &FactorGraph, e: EdgeId, lefts: &[TokenDist], budget: u64) -> Result<TokenDist> {
    let ed = g.edge(e);
    let con = g.constraint(ed.con);
    let range = g.con_edges(ed.con);
    let supports: Vec<Vec<(u16, f64)>> = range
        .clone()
        .map(|b| if b == e { vec![(u16::MAX, 1.0)] } else { lefts[b].support().map(|(t, x)| (t.mask(), x)).collect() })
        .collect();
    let needed = supports.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128));
    check_budget(needed, budget)?;
    let mut out = TokenDist::zeros(g.q());
    let mut odo = Odometer::new(supports.iter().map(Vec::len).collect());
    let mut masks = vec![0u16; supports.len()];
    while let Some(digits) = odo.current() {
        let mut weight = 1.0;
        for (i, &di) in digits.iter().enumerate() {
            let (m, x) = supports[i][di];
            masks[i] = m;
            if i != ed.pos {
                weight *= x;
            }
        }
        if let Some(t) = con.forced_masks(ed.pos, &masks) {
            out.add(t, weight);
        }
        odo.advance();
    }
    Ok(out)
}

/// Which tokens receive initial mass in a right-initialized run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSupport {
    /// Only the tokens the constraint can force on the coordinate.
    #[default]
    Forceable,
    /// Every token.
    All,
}

/// How a run is initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PtpInit {
    /// Random right messages, entries uniform in `[0.1, 1)` then normalized.
    RandomRight(InitSupport),
    /// Random left messages, strictly positive on every token. The first
    /// iteration then only computes right messages, as in DTP.
    RandomLeft,
    /// Given right messages, indexed by edge. They are normalized on use.
    Right(Vec<TokenDist>),
    /// Given left messages, indexed by edge.
    Left(Vec<TokenDist>),
}

impl Default for PtpInit {
    fn default() -> Self {
        PtpInit::RandomRight(InitSupport::Forceable)
    }
}

/// Plain or weighted updates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PtpMode {
    #[default]
    Plain,
    /// One obedience conditional per coordinate.
    Weighted(Vec<ObedienceConditional>),
}

impl PtpMode {
    /// The same conditional at every coordinate.
    pub fn weighted_shared(g: &FactorGraph, omega: ObedienceConditional) -> PtpMode {
        PtpMode::Weighted(vec![omega; g.n_vars()])
    }

    fn omega(&self, v: usize) -> Option<&ObedienceConditional> {
        match self {
            PtpMode::Plain => None,
            PtpMode::Weighted(ws) => Some(&ws[v]),
        }
    }

    fn validate(&self, g: &FactorGraph) -> Result<()> {
        if let PtpMode::Weighted(ws) = self {
            if ws.len() != g.n_vars() {
                return Err(Error::ParamError(format!("{} conditionals for {} coordinates", ws.len(), g.n_vars())));
            }
            for w in ws {
                if w.q() != g.q() {
                    return Err(Error::ParamError(format!("conditional over q = {} on a q = {} graph", w.q(), g.q())));
                }
                w.validate()?;
            }
        }
        Ok(())
    }
}

/// Run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtpConfig {
    pub mode: PtpMode,
    pub init: PtpInit,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub budget: u64,
}

impl Default for PtpConfig {
    fn default() -> Self {
        PtpConfig {
            mode: PtpMode::Plain,
            init: PtpInit::default(),
            max_iters: 1000,
            tol: 1e-8,
            seed: 0,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Normalized messages of a run, indexed by edge (messages) and coordinate
/// (summaries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtpState {
    /// Left messages; empty in a right-initialized run until the first
    /// iteration.
    pub left: Vec<TokenDist>,
    /// Right messages; empty in a left-initialized run until the first
    /// iteration.
    pub right: Vec<TokenDist>,
    /// Summaries from the current right messages; empty when there are none.
    pub summary: Vec<TokenDist>,
    pub iteration: usize,
    /// Largest change of any message in the last iteration.
    pub delta: f64,
}

/// Convergence report of [`run_ptp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtpReport {
    pub converged: bool,
    pub iterations: usize,
    pub delta: f64,
}

/// A graph bound to an update mode.
#[derive(Debug, Clone)]
pub struct Ptp<'g> {
    g: &'g FactorGraph,
    mode: PtpMode,
    budget: u64,
}

impl<'g> Ptp<'g> {
    pub fn new(g: &'g FactorGraph, mode: PtpMode, budget: u64) -> Result<Ptp<'g>> {
        mode.validate(g)?;
        Ok(Ptp { g, mode, budget })
    }

    pub fn graph(&self) -> &'g FactorGraph {
        self.g
    }

    /// Unnormalized left message on `e`.
    pub fn left_raw(&self, e: EdgeId, rights: &[TokenDist]) -> TokenDist {
        left_raw(self.g, e, rights, self.mode.omega(self.g.edge(e).var))
    }

    /// Unnormalized right message on `e`.
    pub fn right_raw(&self, e: EdgeId, lefts: &[TokenDist]) -> Result<TokenDist> {
        ptp_right_update(self.g, e, lefts, self.budget)
    }

    /// Unnormalized summary at `v`.
    pub fn summary_raw(&self, v: usize, rights: &[TokenDist]) -> TokenDist {
        summary_raw(self.g, v, rights, self.mode.omega(v))
    }

    /// Normalized left messages on every edge.
    pub fn lefts(&self, rights: &[TokenDist]) -> Result<Vec<TokenDist>> {
        (0..self.g.n_edges())
            .map(|e| self.left_raw(e, rights).normalized(&format!("left {}", self.g.left_edge(e))))
            .collect()
    }

    /// Normalized right messages on every edge.
    pub fn rights(&self, lefts: &[TokenDist]) -> Result<Vec<TokenDist>> {
        (0..self.g.n_edges())
            .map(|e| self.right_raw(e, lefts)?.normalized(&format!("right {}", self.g.right_edge(e))))
            .collect()
    }

    /// Normalized summaries at every coordinate.
    pub fn summaries(&self, rights: &[TokenDist]) -> Result<Vec<TokenDist>> {
        (0..self.g.n_vars()).map(|v| self.summary_raw(v, rights).normalized(&format!("summary v{v}"))).collect()
    }

    /// Builds the initial state.
    pub fn init(&self, init: &PtpInit, seed: u64) -> Result<PtpState> {
        let g = self.g;
        let q = g.q();
        let mut rng = rng_from_seed(seed);
        let check = |msgs: &[TokenDist]| -> Result<()> {
            if msgs.len() != g.n_edges() {
                return Err(Error::InitError(format!("{} messages for {} edges", msgs.len(), g.n_edges())));
            }
            if msgs.iter().any(|m| m.q() != q) {
                return Err(Error::InitError("message over the wrong alphabet".into()));
            }
            Ok(())
        };
        let (left, right) = match init {
            PtpInit::RandomRight(support) => {
                let mut right = Vec::with_capacity(g.n_edges());
                for ed in g.edges() {
                    let tokens = match support {
                        InitSupport::Forceable => forceable_at(g, ed.con, ed.pos, self.budget)?,
                        InitSupport::All => Token::all(q).collect(),
                    };
                    let mut d = TokenDist::zeros(q);
                    for t in tokens {
                        d.set(t, rng.gen_range(0.1..1.0));
                    }
                    right.push(d.normalized("initial right")?);
                }
                (Vec::new(), right)
            }
            PtpInit::RandomLeft => {
                let left = (0..g.n_edges())
                    .map(|_| {
                        let w = (0..(1 << q) - 1).map(|_| rng.gen_range(0.1..1.0)).collect();
                        TokenDist { q, w }.normalized("initial left")
                    })
                    .collect::<Result<_>>()?;
                (left, Vec::new())
            }
            PtpInit::Right(msgs) => {
                check(msgs)?;
                let right = msgs
                    .iter()
                    .enumerate()
                    .map(|(e, m)| m.normalized(&format!("initial right {}", g.right_edge(e))))
                    .collect::<Result<_>>()
                    .map_err(|e| Error::InitError(e.to_string()))?;
                (Vec::new(), right)
            }
            PtpInit::Left(msgs) => {
                check(msgs)?;
                let left = msgs
                    .iter()
                    .enumerate()
                    .map(|(e, m)| m.normalized(&format!("initial left {}", g.left_edge(e))))
                    .collect::<Result<_>>()
                    .map_err(|e| Error::InitError(e.to_string()))?;
                (left, Vec::new())
            }
        };
        let summary = if right.is_empty() { Vec::new() } else { self.summaries(&right)? };
        Ok(PtpState { left, right, summary, iteration: 0, delta: f64::INFINITY })
    }

    /// One flooding iteration: left messages from the current right
    /// messages (skipped when there are none yet), then right messages,
    /// then summaries. Returns the largest message change, which is
    /// infinite when some message had no previous value.
    pub fn step(&self, state: &mut PtpState) -> Result<f64> {
        let mut delta: f64 = 0.0;
        if !state.right.is_empty() {
            let left = self.lefts(&state.right)?;
            delta = max_change(&state.left, &left);
            state.left = left;
        } else if state.left.is_empty() {
            return Err(Error::InitError("state has neither left nor right messages".into()));
        }
        let right = self.rights(&state.left)?;
        delta = delta.max(max_change(&state.right, &right));
        state.summary = self.summaries(&right)?;
        state.right = right;
        state.iteration += 1;
        state.delta = delta;
        Ok(delta)
    }
}

fn max_change(old: &[TokenDist], new: &[TokenDist]) -> f64 {
    if old.len() != new.len() {
        return f64::INFINITY;
    }
    old.iter().zip(new).map(|(a, b)| a.linf(b)).fold(0.0, f64::max)
}

/// Runs token passing until the largest message change drops below `tol`
/// or `max_iters` iterations have run.
pub fn run_ptp(g: &FactorGraph, cfg: &PtpConfig) -> Result<(PtpState, PtpReport)> {
    let engine = Ptp::new(g, cfg.mode.clone(), cfg.budget)?;
    let mut state = engine.init(&cfg.init, cfg.seed)?;
    let mut converged = false;
    while state.iteration < cfg.max_iters {
        if engine.step(&mut state)? < cfg.tol {
            converged = true;
            break;
        }
    }
    let report = PtpReport { converged, iterations: state.iteration, delta: state.delta };
    Ok((state, report))
}

/// Closed-form updates for k-SAT graphs under the `γ` conditional. They
/// read normalized messages and agree with the enumeration path up to
/// rounding.
pub mod ksat {
    use super::*;

    fn require(g: &FactorGraph) -> Result<()> {
        match g.family() {
            Family::KSat => Ok(()),
            _ => Err(Error::ParamError("closed form needs a k-SAT graph".into())),
        }
    }

    fn fold_form(q: usize, rights: impl Iterator<Item = (f64, f64, f64)> + Clone, gamma: f64) -> TokenDist {
        let p0: f64 = rights.clone().map(|(r0, _, r01)| r0 + r01).product();
        let p1: f64 = rights.clone().map(|(_, r1, r01)| r1 + r01).product();
        let pf: f64 = rights.map(|(_, _, r01)| r01).product();
        TokenDist { q, w: vec![p0 - gamma * pf, p1 - gamma * pf, gamma * pf] }
    }

    fn triple(d: &TokenDist) -> (f64, f64, f64) {
        (d.w[0], d.w[1], d.w[2])
    }

    /// `λ(0) = ∏(ρ(0)+ρ(01)) - γ∏ρ(01)`, symmetric `λ(1)`, and
    /// `λ(01) = γ∏ρ(01)` over the other constraints at the coordinate.
    pub fn left(g: &FactorGraph, e: EdgeId, rights: &[TokenDist], gamma: f64) -> Result<TokenDist> {
        require(g)?;
        check_gamma(gamma)?;
        let v = g.edge(e).var;
        let others = g.var_edges(v).iter().filter(move |&&b| b != e).map(|&b| triple(&rights[b]));
        Ok(fold_form(2, others, gamma))
    }

    /// Summary with the same form as [`left`] over every constraint.
    pub fn summary(g: &FactorGraph, v: usize, rights: &[TokenDist], gamma: f64) -> Result<TokenDist> {
        require(g)?;
        check_gamma(gamma)?;
        Ok(fold_form(2, g.var_edges(v).iter().map(|&b| triple(&rights[b])), gamma))
    }

    /// `ρ(L) = ∏ λ(L̄_u)` over the other coordinates of the clause, where
    /// `L` is the preferred value at the target and `L̄_u` the violating
    /// value at `u`; `ρ(L̄) = 0` and `ρ(01) = 1 - ∏ λ(L̄_u)`.
    pub fn right(g: &FactorGraph, e: EdgeId, lefts: &[TokenDist]) -> Result<TokenDist> {
        require(g)?;
        let c = g.edge(e).con;
        let warn: f64 = g
            .con_edges(c)
            .filter(|&b| b != e)
            .map(|b| {
                let bad = 1 - g.label(b).expect("labels");
                lefts[b].singleton_mass(bad)
            })
            .product();
        let l = g.label(e).expect("labels");
        let mut out = TokenDist::zeros(2);
        out.set(Token::singleton(l), warn);
        out.set(Token::full(2), 1.0 - warn);
        Ok(out)
    }
}

/// Closed-form plain updates for 3-coloring graphs. Right messages are
/// assumed to sit on pairs and the full token, which is where the
/// constraint can put mass.
pub mod col3 {
    use super::*;

    fn require(g: &FactorGraph) -> Result<()> {
        if g.family() == Family::QCol && g.q() == 3 {
            Ok(())
        } else {
            Err(Error::ParamError("closed form needs a 3-coloring graph".into()))
        }
    }

    fn pair(i: usize, j: usize) -> usize {
        ((1 << i) | (1 << j)) - 1
    }

    fn fold_form<'a>(rights: impl Iterator<Item = &'a TokenDist> + Clone) -> TokenDist {
        let prod = |f: &dyn Fn(&[f64]) -> f64| rights.clone().map(|d| f(&d.w)).product::<f64>();
        let full = 6;
        let mut out = TokenDist::zeros(3);
        let all = prod(&|w| w[full]);
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let (ij, ik) = (pair(i, j), pair(i, k));
            let both = prod(&|w| w[ij] + w[ik] + w[full]);
            let with_j = prod(&|w| w[ij] + w[full]);
            let with_k = prod(&|w| w[ik] + w[full]);
            out.w[(1 << i) - 1] = both - with_j - with_k + all;
        }
        for i in 0..3 {
            for j in i + 1..3 {
                let ij = pair(i, j);
                out.w[ij] = prod(&|w| w[ij] + w[full]) - all;
            }
        }
        out.w[full] = all;
        out
    }

    /// `λ(i) = ∏(ρ(ij)+ρ(ik)+ρ(ijk)) - ∏(ρ(ij)+ρ(ijk)) - ∏(ρ(ik)+ρ(ijk)) + ∏ρ(ijk)`,
    /// `λ(ij) = ∏(ρ(ij)+ρ(ijk)) - ∏ρ(ijk)` and `λ(ijk) = ∏ρ(ijk)`.
    pub fn left(g: &FactorGraph, e: EdgeId, rights: &[TokenDist]) -> Result<TokenDist> {
        require(g)?;
        let v = g.edge(e).var;
        Ok(fold_form(g.var_edges(v).iter().filter(|&&b| b != e).map(|&b| &rights[b])))
    }

    /// Summary with the same form as [`left`] over every constraint.
    pub fn summary(g: &FactorGraph, v: usize, rights: &[TokenDist]) -> Result<TokenDist> {
        require(g)?;
        Ok(fold_form(g.var_edges(v).iter().map(|&b| &rights[b])))
    }

    /// `ρ(ij) = λ_u(k)` and `ρ(ijk) = λ(ij)+λ(ik)+λ(jk)+λ(ijk)`, where
    /// `λ_u` is the normalized left message of the other endpoint.
    pub fn right(g: &FactorGraph, e: EdgeId, lefts: &[TokenDist]) -> Result<TokenDist> {
        require(g)?;
        let c = g.edge(e).con;
        let other = g.con_edges(c).find(|&b| b != e).expect("binary constraint");
        let lam = &lefts[other].w;
        let mut out = TokenDist::zeros(3);
        for k in 0..3 {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            out.w[pair(i, j)] = lam[(1 << k) - 1];
        }
        out.w[6] = lam[2] + lam[4] + lam[5] + lam[6];
        Ok(out)
    }
}

//! Classical survey propagation: SP(γ) and SP*(γ) for k-SAT and the
//! compact quadruplet rule for 3-coloring.
//!
//! k-SAT messages live on factor-graph edges: the left message of edge
//! `(v, c)` is the triplet `(Π^u, Π^s, Π^*)` and the right message is the
//! warning probability `η_{c->v}`. For 3-coloring the message `u -> v` of
//! the compact rule is stored on the edge `(u, c)` with `c = {u, v}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, FactorGraph, Family};
use crate::ptp::{check_gamma, InitSupport, Ptp, PtpInit, PtpMode, TokenDist};
use crate::token::Token;

/// Left message `(Π^u, Π^s, Π^*)` of k-SAT survey propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatLeft {
    pub pi_u: f64,
    pub pi_s: f64,
    pub pi_star: f64,
}

impl SatLeft {
    pub fn total(&self) -> f64 {
        self.pi_u + self.pi_s + self.pi_star
    }

    /// Scaled to unit total.
    pub fn normalized(&self, what: &str) -> Result<SatLeft> {
        let z = self.total();
        if z.is_nan() || z <= 0.0 {
            return Err(Error::DegenerateMessage(what.to_string()));
        }
        Ok(SatLeft { pi_u: self.pi_u / z, pi_s: self.pi_s / z, pi_star: self.pi_star / z })
    }
}

/// Normalized summary `(ζ^1, ζ^0, ζ^*)` with polarity `B = ζ^0 - ζ^1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatSummary {
    pub zeta1: f64,
    pub zeta0: f64,
    pub zeta_star: f64,
    pub bias: f64,
}

impl SatSummary {
    /// The summary as a token distribution over `{0}`, `{1}`, `{0,1}`.
    pub fn to_dist(&self) -> TokenDist {
        TokenDist::from_weights(2, vec![self.zeta0, self.zeta1, self.zeta_star]).expect("nonnegative summary")
    }
}

/// Which of the two equivalent k-SAT rules to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpVariant {
    /// SP(γ).
    #[default]
    Gamma,
    /// SP*(γ), with `γ` moved into `Π^s` and `Π^*`.
    Star,
}

fn check_eta(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::ParamError(format!("η = {x} is outside [0, 1]")))
    }
}

fn require_ksat(g: &FactorGraph) -> Result<()> {
    if g.family() == Family::KSat {
        Ok(())
    } else {
        Err(Error::ParamError("k-SAT survey propagation needs a labelled k-SAT graph".into()))
    }
}

/// `∏(1 - η)` over the edges of the same label as `e` and over the edges
/// of the other label, excluding `e`.
fn split_products(g: &FactorGraph, e: EdgeId, etas: &[f64]) -> Result<(f64, f64)> {
    let (same, diff) = g.split_by_label(e);
    let prod = |edges: &[EdgeId]| -> Result<f64> {
        edges.iter().try_fold(1.0, |acc, &b| {
            check_eta(etas[b])?;
            Ok(acc * (1.0 - etas[b]))
        })
    };
    Ok((prod(&same)?, prod(&diff)?))
}

/// SP(γ) left message on edge `e` from the right messages `etas`, indexed
/// by edge.
pub fn sp_gamma_left(g: &FactorGraph, e: EdgeId, etas: &[f64], gamma: f64) -> Result<SatLeft> {
    check_gamma(gamma)?;
    let (ps, pu) = split_products(g, e, etas)?;
    Ok(SatLeft { pi_u: (1.0 - gamma * pu) * ps, pi_s: (1.0 - ps) * pu, pi_star: ps * pu })
}

/// SP*(γ) left message on edge `e`.
pub fn sp_star_left(g: &FactorGraph, e: EdgeId, etas: &[f64], gamma: f64) -> Result<SatLeft> {
    check_gamma(gamma)?;
    let (ps, pu) = split_products(g, e, etas)?;
    Ok(SatLeft { pi_u: (1.0 - gamma * pu) * ps, pi_s: (1.0 - gamma * ps) * pu, pi_star: gamma * ps * pu })
}

/// Right message `η_{c->v} = ∏ Π^u / (Π^u + Π^s + Π^*)` over the other
/// coordinates of the clause of edge `e`.
pub fn sp_right(g: &FactorGraph, e: EdgeId, lefts: &[SatLeft]) -> Result<f64> {
    let c = g.edge(e).con;
    g.con_edges(c).filter(|&b| b != e).try_fold(1.0, |acc, b| {
        let z = lefts[b].total();
        if z.is_nan() || z <= 0.0 {
            return Err(Error::DegenerateMessage(format!("left {} has zero total", g.left_edge(b))));
        }
        Ok(acc * lefts[b].pi_u / z)
    })
}

/// Unnormalized summary `(ζ^1, ζ^0, ζ^*)` at `v`.
pub fn sp_summary_raw(g: &FactorGraph, v: usize, etas: &[f64], gamma: f64) -> Result<(f64, f64, f64)> {
    check_gamma(gamma)?;
    let (mut p1, mut p0) = (1.0, 1.0);
    for &b in g.var_edges(v) {
        check_eta(etas[b])?;
        match g.label(b) {
            Some(1) => p1 *= 1.0 - etas[b],
            Some(_) => p0 *= 1.0 - etas[b],
            None => return Err(Error::ParamError("summary needs edge labels".into())),
        }
    }
    Ok(((1.0 - gamma * p1) * p0, (1.0 - gamma * p0) * p1, gamma * p1 * p0))
}

/// Normalized summary and polarity at `v`.
pub fn sp_summary(g: &FactorGraph, v: usize, etas: &[f64], gamma: f64) -> Result<SatSummary> {
    let (z1, z0, zs) = sp_summary_raw(g, v, etas, gamma)?;
    let z = z1 + z0 + zs;
    if z.is_nan() || z <= 0.0 {
        return Err(Error::DegenerateMessage(format!("summary v{v}")));
    }
    let (zeta1, zeta0, zeta_star) = (z1 / z, z0 / z, zs / z);
    Ok(SatSummary { zeta1, zeta0, zeta_star, bias: zeta0 - zeta1 })
}

/// Initial warnings paired with a right-initialized token-passing run of
/// the same seed: `η = ρ({0}) + ρ({1})` of the normalized initial right
/// message, which puts no mass on the violating value.
pub fn sp_init_from_ptp(g: &FactorGraph, seed: u64) -> Result<Vec<f64>> {
    let ptp = Ptp::new(g, PtpMode::Plain, crate::forced::DEFAULT_BUDGET)?;
    let state = ptp.init(&PtpInit::RandomRight(InitSupport::Forceable), seed)?;
    Ok(state.right.iter().map(|r| r.singleton_mass(0) + r.singleton_mass(1)).collect())
}

/// k-SAT survey propagation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpState {
    /// Right messages `η`, indexed by edge.
    pub eta: Vec<f64>,
    /// Left messages from the last iteration; empty before the first.
    pub left: Vec<SatLeft>,
    /// Summaries from the current `η`.
    pub summary: Vec<SatSummary>,
    pub iteration: usize,
    /// Largest change of any `η` in the last iteration.
    pub delta: f64,
}

/// A k-SAT graph bound to a rule and a `γ`.
#[derive(Debug, Clone)]
pub struct Sp<'g> {
    g: &'g FactorGraph,
    variant: SpVariant,
    gamma: f64,
}

impl<'g> Sp<'g> {
    pub fn new(g: &'g FactorGraph, variant: SpVariant, gamma: f64) -> Result<Sp<'g>> {
        require_ksat(g)?;
        check_gamma(gamma)?;
        Ok(Sp { g, variant, gamma })
    }

    /// State holding the given warnings, with summaries computed.
    pub fn init(&self, eta: Vec<f64>) -> Result<SpState> {
        if eta.len() != self.g.n_edges() {
            return Err(Error::InitError(format!("{} warnings for {} edges", eta.len(), self.g.n_edges())));
        }
        if let Some(x) = eta.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InitError(format!("warning {x} is outside [0, 1]")));
        }
        let summary = self.summaries(&eta)?;
        Ok(SpState { eta, left: Vec::new(), summary, iteration: 0, delta: f64::INFINITY })
    }

    pub fn lefts(&self, eta: &[f64]) -> Result<Vec<SatLeft>> {
        (0..self.g.n_edges())
            .map(|e| match self.variant {
                SpVariant::Gamma => sp_gamma_left(self.g, e, eta, self.gamma),
                SpVariant::Star => sp_star_left(self.g, e, eta, self.gamma),
            })
            .collect()
    }

    pub fn rights(&self, lefts: &[SatLeft]) -> Result<Vec<f64>> {
        (0..self.g.n_edges()).map(|e| sp_right(self.g, e, lefts)).collect()
    }

    pub fn summaries(&self, eta: &[f64]) -> Result<Vec<SatSummary>> {
        (0..self.g.n_vars()).map(|v| sp_summary(self.g, v, eta, self.gamma)).collect()
    }

    /// One flooding iteration: lefts, rights, summaries.
    pub fn step(&self, state: &mut SpState) -> Result<f64> {
        let left = self.lefts(&state.eta)?;
        let eta = self.rights(&left)?;
        self.finish(state, left, eta)
    }

    /// Installs freshly computed messages and returns the largest change
    /// of `η`.
    pub fn finish(&self, state: &mut SpState, left: Vec<SatLeft>, eta: Vec<f64>) -> Result<f64> {
        let delta = state.eta.iter().zip(&eta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        state.summary = self.summaries(&eta)?;
        state.left = left;
        state.eta = eta;
        state.iteration += 1;
        state.delta = delta;
        Ok(delta)
    }

    /// Iterates until the largest change drops below `tol` or `max_iters`
    /// iterations have run; returns whether it converged.
    pub fn run(&self, state: &mut SpState, max_iters: usize, tol: f64) -> Result<bool> {
        for _ in 0..max_iters {
            if self.step(state)? < tol {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Message `(η^1, η^2, η^3, η^*)` of the compact 3-coloring rule, with
/// colors indexed `0..3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColMsg {
    pub eta: [f64; 3],
    pub star: f64,
}

impl ColMsg {
    /// Message with `η^* = 1 - Σ η^i`.
    pub fn new(eta: [f64; 3]) -> ColMsg {
        ColMsg { eta, star: 1.0 - eta.iter().sum::<f64>() }
    }

    /// The all-joker message `(0, 0, 0, 1)`.
    pub fn joker() -> ColMsg {
        ColMsg::new([0.0; 3])
    }
}

fn require_col3(g: &FactorGraph) -> Result<()> {
    if g.family() == Family::QCol && g.q() == 3 {
        Ok(())
    } else {
        Err(Error::ParamError("compact coloring SP needs a 3-coloring graph".into()))
    }
}

/// The other edge of the binary constraint of `e`.
pub fn partner(g: &FactorGraph, e: EdgeId) -> EdgeId {
    let c = g.edge(e).con;
    g.con_edges(c).find(|&b| b != e).expect("binary constraint")
}

/// Evaluates the compact ratio over the given incoming messages.
fn col_ratio<'a>(incoming: impl Iterator<Item = &'a ColMsg> + Clone, what: impl Fn() -> String) -> Result<ColMsg> {
    let prod = |f: &dyn Fn(&ColMsg) -> f64| incoming.clone().map(f).product::<f64>();
    let open: [f64; 3] = std::array::from_fn(|i| prod(&|m| 1.0 - m.eta[i]));
    let with: [f64; 3] = std::array::from_fn(|j| prod(&|m| m.star + m.eta[j]));
    let jokers = prod(&|m| m.star);
    let den = open.iter().sum::<f64>() - with.iter().sum::<f64>() + jokers;
    if den.is_nan() || den <= 0.0 {
        return Err(Error::DegenerateMessage(what()));
    }
    let eta = std::array::from_fn(|i| {
        let others: f64 = (0..3).filter(|&j| j != i).map(|j| with[j]).sum();
        (open[i] - others + jokers) / den
    });
    Ok(ColMsg::new(eta))
}

/// Message `u -> v` stored on edge `e = (u, {u, v})`, from the messages
/// `w -> u` of the other neighbours of `u`.
pub fn col_sp_update(g: &FactorGraph, e: EdgeId, msgs: &[ColMsg]) -> Result<ColMsg> {
    require_col3(g)?;
    let u = g.edge(e).var;
    let incoming: Vec<&ColMsg> = g.var_edges(u).iter().filter(|&&b| b != e).map(|&b| &msgs[partner(g, b)]).collect();
    col_ratio(incoming.iter().copied(), || format!("message {}", g.left_edge(e)))
}

/// Summary at `v` from the messages of every neighbour.
pub fn col_sp_summary(g: &FactorGraph, v: usize, msgs: &[ColMsg]) -> Result<ColMsg> {
    require_col3(g)?;
    let incoming: Vec<&ColMsg> = g.var_edges(v).iter().map(|&b| &msgs[partner(g, b)]).collect();
    col_ratio(incoming.iter().copied(), || format!("summary v{v}"))
}

/// Messages paired with token-passing right messages: the SP message
/// `w -> u` over constraint `c` takes `η^i = ρ_{c->u}(χ \ {i})` and
/// `η^* = ρ_{c->u}(χ)`, and is stored on the edge `(w, c)`.
pub fn col_init_from_rights(g: &FactorGraph, rights: &[TokenDist]) -> Result<Vec<ColMsg>> {
    require_col3(g)?;
    let full = Token::full(3);
    let mut msgs = vec![ColMsg::joker(); g.n_edges()];
    for e in 0..g.n_edges() {
        let r = rights[e].normalized(&format!("right {}", g.right_edge(e)))?;
        let eta = std::array::from_fn(|i| r.get(Token::new(full.mask() & !(1 << i)).expect("pair")));
        msgs[partner(g, e)] = ColMsg { eta, star: r.get(full) };
    }
    Ok(msgs)
}

/// Compact 3-coloring SP state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColSpState {
    pub msgs: Vec<ColMsg>,
    pub summary: Vec<ColMsg>,
    pub iteration: usize,
    pub delta: f64,
}

impl ColSpState {
    /// Starts from the given messages and computes summaries.
    pub fn new(g: &FactorGraph, msgs: Vec<ColMsg>) -> Result<ColSpState> {
        require_col3(g)?;
        if msgs.len() != g.n_edges() {
            return Err(Error::InitError(format!("{} messages for {} edges", msgs.len(), g.n_edges())));
        }
        let summary = (0..g.n_vars()).map(|v| col_sp_summary(g, v, &msgs)).collect::<Result<_>>()?;
        Ok(ColSpState { msgs, summary, iteration: 0, delta: f64::INFINITY })
    }

    /// One flooding iteration of every message, then summaries.
    pub fn step(&mut self, g: &FactorGraph) -> Result<f64> {
        let msgs: Vec<ColMsg> = (0..g.n_edges()).map(|e| col_sp_update(g, e, &self.msgs)).collect::<Result<_>>()?;
        let delta = self
            .msgs
            .iter()
            .zip(&msgs)
            .flat_map(|(a, b)| (0..3).map(move |i| (a.eta[i] - b.eta[i]).abs()))
            .fold(0.0, f64::max);
        self.summary = (0..g.n_vars()).map(|v| col_sp_summary(g, v, &msgs)).collect::<Result<_>>()?;
        self.msgs = msgs;
        self.iteration += 1;
        self.delta = delta;
        Ok(delta)
    }
}

/// Converts a coloring summary to a token distribution: color masses on
/// singletons and `η^*` on the full token.
pub fn col_summary_dist(m: &ColMsg) -> TokenDist {
    let mut d = TokenDist::zeros(3);
    for i in 0..3 {
        d.set(Token::singleton(i as u8), m.eta[i]);
    }
    d.set(Token::full(3), m.star.max(0.0));
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::gen::{gen_random_ksat, gen_random_qcol, rng_from_seed};
    use crate::graph::build_qcol;
    use rand::Rng;

    #[test]
    fn zero_warnings() {
        let g = fixtures::two_clause_3sat();
        let eta = vec![0.0; g.n_edges()];
        for gamma in [0.0, 0.4, 1.0] {
            let a = sp_gamma_left(&g, 0, &eta, gamma).unwrap();
            assert_eq!((a.pi_u, a.pi_s, a.pi_star), (1.0 - gamma, 0.0, 1.0));
            let b = sp_star_left(&g, 0, &eta, gamma).unwrap();
            assert_eq!((b.pi_u, b.pi_s, b.pi_star), (1.0 - gamma, 1.0 - gamma, gamma));
        }
        let s = sp_summary(&g, 0, &eta, 1.0).unwrap();
        assert_eq!((s.zeta1, s.zeta0, s.zeta_star, s.bias), (0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn bad_inputs() {
        let g = fixtures::two_clause_3sat();
        let mut eta = vec![0.2; g.n_edges()];
        assert!(matches!(sp_gamma_left(&g, 0, &eta, 1.2), Err(Error::ParamError(_))));
        eta[g.edge_id(1, 0).unwrap()] = 1.5;
        assert!(matches!(sp_star_left(&g, 0, &eta, 0.5), Err(Error::ParamError(_))));
        assert!(Sp::new(&fixtures::triangle_with_tail(3), SpVariant::Gamma, 1.0).is_err());
    }

    #[test]
    fn same_label_certain_warning_zeroes_product() {
        let clauses = vec![vec![(0, 1), (1, 1)], vec![(0, 1), (1, 0)], vec![(0, 1), (1, 1)]];
        let g = crate::graph::build_ksat(&clauses, 2).unwrap();
        let mut eta = vec![0.3; g.n_edges()];
        eta[g.edge_id(2, 0).unwrap()] = 1.0;
        let e = g.edge_id(0, 0).unwrap();
        let a = sp_gamma_left(&g, e, &eta, 1.0).unwrap();
        assert_eq!((a.pi_u, a.pi_star), (0.0, 0.0));
    }

    #[test]
    fn s_plus_star_agree_between_rules() {
        let g = gen_random_ksat(20, 70, 3, 5, None).unwrap().graph;
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let eta: Vec<f64> = (0..g.n_edges()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let gamma = rng.gen_range(0.0..1.0);
            for e in 0..g.n_edges() {
                let a = sp_gamma_left(&g, e, &eta, gamma).unwrap();
                let b = sp_star_left(&g, e, &eta, gamma).unwrap();
                assert!((a.pi_s + a.pi_star - (b.pi_s + b.pi_star)).abs() < 1e-15);
                assert_eq!(a.pi_u, b.pi_u);
                let (_, pu) = split_products(&g, e, &eta).unwrap();
                assert!((a.pi_s + a.pi_star - pu).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn right_extremes() {
        let g = fixtures::two_clause_3sat();
        let mut lefts = vec![SatLeft { pi_u: 1.0, pi_s: 0.0, pi_star: 0.0 }; g.n_edges()];
        assert_eq!(sp_right(&g, 0, &lefts).unwrap(), 1.0);
        lefts[1].pi_u = 0.0;
        lefts[1].pi_s = 1.0;
        assert_eq!(sp_right(&g, 0, &lefts).unwrap(), 0.0);
        lefts[2] = SatLeft { pi_u: 0.0, pi_s: 0.0, pi_star: 0.0 };
        assert!(matches!(sp_right(&g, 0, &lefts), Err(Error::DegenerateMessage(_))));
    }

    #[test]
    fn certain_warnings_on_one_side_kill_joker() {
        let g = fixtures::two_clause_3sat();
        let mut eta = vec![0.4; g.n_edges()];
        for &b in g.var_edges(1) {
            if g.label(b) == Some(1) {
                eta[b] = 1.0;
            }
        }
        assert_eq!(sp_summary(&g, 1, &eta, 0.7).unwrap().zeta_star, 0.0);
    }

    #[test]
    fn rules_agree_over_iterations() {
        let g = gen_random_ksat(30, 120, 3, 3, None).unwrap().graph;
        let eta = sp_init_from_ptp(&g, 8).unwrap();
        let a = Sp::new(&g, SpVariant::Gamma, 0.5).unwrap();
        let b = Sp::new(&g, SpVariant::Star, 0.5).unwrap();
        let (mut sa, mut sb) = (a.init(eta.clone()).unwrap(), b.init(eta).unwrap());
        for _ in 0..30 {
            a.step(&mut sa).unwrap();
            b.step(&mut sb).unwrap();
            for (x, y) in sa.eta.iter().zip(&sb.eta) {
                assert!((x - y).abs() <= 1e-12);
            }
            for (x, y) in sa.summary.iter().zip(&sb.summary) {
                assert!((x.zeta_star - y.zeta_star).abs() <= 1e-12 && (x.bias - y.bias).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn coloring_joker_fixed_point() {
        let g = build_qcol(&[(0, 1), (1, 2), (0, 2), (2, 3), (3, 0)], 3).unwrap();
        let msgs = vec![ColMsg::joker(); g.n_edges()];
        for e in 0..g.n_edges() {
            assert_eq!(col_sp_update(&g, e, &msgs).unwrap(), ColMsg::joker());
        }
    }

    #[test]
    fn coloring_excludes_certain_neighbour_color() {
        let g = build_qcol(&[(0, 1), (1, 2), (0, 2)], 3).unwrap();
        let mut msgs = vec![ColMsg::joker(); g.n_edges()];
        let e = g.edge_id(0, 0).unwrap();
        let b = g.edge_id(2, 0).unwrap();
        msgs[partner(&g, b)] = ColMsg::new([1.0, 0.0, 0.0]);
        let out = col_sp_update(&g, e, &msgs).unwrap();
        assert_eq!(out.eta[0], 0.0);
        assert!((out.star - (1.0 - out.eta.iter().sum::<f64>())).abs() < 1e-15);
    }

    #[test]
    fn coloring_state_runs() {
        let g = gen_random_qcol(12, 22, 3, 2, None).unwrap().graph;
        let mut rng = rng_from_seed(4);
        let msgs: Vec<ColMsg> = (0..g.n_edges())
            .map(|_| {
                let w: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.1..1.0));
                let z: f64 = w.iter().sum();
                ColMsg::new([w[0] / z, w[1] / z, w[2] / z])
            })
            .collect();
        let mut state = ColSpState::new(&g, msgs).unwrap();
        for _ in 0..10 {
            state.step(&g).unwrap();
        }
        for m in state.msgs.iter().chain(&state.summary) {
            assert!(m.eta.iter().all(|x| (-1e-12..=1.0 + 1e-12).contains(x)));
            assert!((m.star + m.eta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

//! Paired runs of two engines from a shared initialization, compared
//! identity by identity after every iteration.
//!
//! Each check maps the messages of one engine onto the messages of the
//! other, records the largest absolute divergence of every identity at
//! every iteration, and reports the first place where a divergence exceeds
//! the tolerance. Iteration 0 is the shared initialization; identities on
//! messages that do not exist yet at that point record 0 there.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forced::{compatibility_report, CompatReport, DEFAULT_BUDGET};
use crate::gen::{gen_random_ksat, gen_random_qcol};
use crate::graph::{EdgeId, FactorGraph, Family};
use crate::mrf::{
    decoupled_rights_from_ptp, ksat as bp_ksat, random_rights, sdbp_step, Bp, BpNorm, ForneyGraph, SdbpState,
};
use crate::ptp::{InitSupport, ObedienceConditional, Ptp, PtpInit, PtpMode, PtpState, TokenDist};
use crate::sp::{col_init_from_rights, ColSpState, Sp, SpVariant};
use crate::token::Token;

/// Size of the deliberate disturbance used by the perturbation control.
pub const PERTURBATION: f64 = 1e-6;

/// Tolerance of the SP(γ) against SP*(γ) check.
pub const SP_STAR_TOL: f64 = 1e-12;

/// Tolerance of every other check.
pub const THEOREM_TOL: f64 = 1e-10;

/// The correspondences under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    /// SP(γ) and SP*(γ) produce the same warnings and summaries.
    #[serde(rename = "sp-star-sp")]
    SpStarSp,
    /// Plain token passing equals compact SP on 3-coloring.
    #[serde(rename = "ptp-sp-3col")]
    PtpSp3col,
    /// Weighted token passing equals SP*(γ) on k-SAT.
    #[serde(rename = "wptp-spstar-ksat")]
    WptpSpstarKsat,
    /// BP from a decoupled state equals weighted token passing on k-SAT.
    #[serde(rename = "bp-wptp-ksat")]
    BpWptpKsat,
    /// State-decoupled BP equals plain token passing on 3-coloring.
    #[serde(rename = "sdbp-ptp-3col")]
    SdbpPtp3col,
    /// State-decoupled BP equals weighted token passing when every
    /// constraint is locally compatible.
    #[serde(rename = "sdbp-wptp")]
    SdbpWptp,
}

impl TheoremId {
    pub const ALL: [TheoremId; 6] = [
        TheoremId::SpStarSp,
        TheoremId::PtpSp3col,
        TheoremId::WptpSpstarKsat,
        TheoremId::BpWptpKsat,
        TheoremId::SdbpPtp3col,
        TheoremId::SdbpWptp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::SpStarSp => "sp-star-sp",
            TheoremId::PtpSp3col => "ptp-sp-3col",
            TheoremId::WptpSpstarKsat => "wptp-spstar-ksat",
            TheoremId::BpWptpKsat => "bp-wptp-ksat",
            TheoremId::SdbpPtp3col => "sdbp-ptp-3col",
            TheoremId::SdbpWptp => "sdbp-wptp",
        }
    }

    /// Tolerance the check uses by default.
    pub fn tol(self) -> f64 {
        match self {
            TheoremId::SpStarSp => SP_STAR_TOL,
            _ => THEOREM_TOL,
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<TheoremId> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::ParamError(format!("unknown theorem {s:?}")))
    }
}

/// A deliberate departure from the theorem's hypotheses, used to show that
/// the harness detects a broken correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeControl {
    /// One message of the second engine is shifted by [`PERTURBATION`]
    /// after the first iteration.
    Perturb,
    /// BP starts from random right messages that are not decoupled.
    CoupledInit,
    /// Plain BP, without the decoupling step, in place of SDBP.
    PlainBp,
}

/// Parameters of one paired run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub seed: u64,
    pub iterations: usize,
    pub tol: f64,
    pub control: Option<NegativeControl>,
    pub budget: u64,
}

impl CheckConfig {
    /// Default configuration of `theorem` with the given seed.
    pub fn new(theorem: TheoremId, seed: u64) -> CheckConfig {
        CheckConfig { seed, iterations: 30, tol: theorem.tol(), control: None, budget: DEFAULT_BUDGET }
    }

    pub fn with_control(mut self, control: NegativeControl) -> CheckConfig {
        self.control = Some(control);
        self
    }

    fn perturb(&self, iteration: usize) -> bool {
        iteration == 1 && self.control == Some(NegativeControl::Perturb)
    }
}

/// What was compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDescriptor {
    pub name: String,
    pub family: Family,
    pub q: usize,
    pub n_vars: usize,
    pub n_constraints: usize,
}

impl InstanceDescriptor {
    pub fn of(name: impl Into<String>, g: &FactorGraph) -> InstanceDescriptor {
        InstanceDescriptor {
            name: name.into(),
            family: g.family(),
            q: g.q(),
            n_vars: g.n_vars(),
            n_constraints: g.n_constraints(),
        }
    }
}

/// Per-iteration maximum divergence of one identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityTrace {
    pub name: String,
    /// Diagnostic identities are recorded but do not affect the verdict.
    pub diagnostic: bool,
    /// Index `l` holds the largest divergence after iteration `l`.
    pub divergence: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Hold,
    Violated,
}

/// The first divergence above tolerance, in iteration order and then in
/// comparison order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub identity: String,
    pub iteration: usize,
    /// Directed edge such as `v3->c1` or `c1->v3`, or a coordinate `v3`.
    pub location: String,
    pub divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRunReport {
    pub theorem: TheoremId,
    pub instance: InstanceDescriptor,
    pub seed: u64,
    pub iterations: usize,
    pub tol: f64,
    pub control: Option<NegativeControl>,
    /// Conditional used by the weighted engines, when there is one.
    pub omega: Option<String>,
    pub identities: Vec<IdentityTrace>,
    pub verdict: Verdict,
    pub first_violation: Option<Violation>,
}

impl PairedRunReport {
    /// Largest divergence over every non-diagnostic identity and iteration.
    pub fn max_divergence(&self) -> f64 {
        self.identities.iter().filter(|t| !t.diagnostic).flat_map(|t| t.divergence.iter().copied()).fold(0.0, f64::max)
    }
}

/// Absolute difference, with non-finite results recorded as `f64::MAX` so
/// that reports stay representable in JSON.
fn divergence(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d.is_finite() {
        d
    } else {
        f64::MAX
    }
}

/// Accumulates divergences while a paired run proceeds.
struct Recorder {
    tol: f64,
    traces: Vec<IdentityTrace>,
    first: Option<Violation>,
}

impl Recorder {
    fn new(tol: f64, names: &[&str], diagnostic: &[&str]) -> Recorder {
        let mk = |n: &&str, d| IdentityTrace { name: n.to_string(), diagnostic: d, divergence: Vec::new() };
        let traces = names.iter().map(|n| mk(n, false)).chain(diagnostic.iter().map(|n| mk(n, true))).collect();
        Recorder { tol, traces, first: None }
    }

    fn begin(&mut self) {
        for t in &mut self.traces {
            t.divergence.push(0.0);
        }
    }

    fn iteration(&self) -> usize {
        self.traces[0].divergence.len() - 1
    }

    fn compare(&mut self, id: usize, location: impl Fn() -> String, a: f64, b: f64) {
        let d = divergence(a, b);
        let iteration = self.iteration();
        let t = &mut self.traces[id];
        let slot = t.divergence.last_mut().expect("begin was called");
        *slot = slot.max(d);
        if d > self.tol && !t.diagnostic && self.first.is_none() {
            self.first = Some(Violation { identity: t.name.clone(), iteration, location: location(), divergence: d });
        }
    }

    fn finish(
        self,
        theorem: TheoremId,
        instance: InstanceDescriptor,
        cfg: &CheckConfig,
        omega: Option<String>,
    ) -> PairedRunReport {
        let verdict = if self.first.is_some() { Verdict::Violated } else { Verdict::Hold };
        PairedRunReport {
            theorem,
            instance,
            seed: cfg.seed,
            iterations: cfg.iterations,
            tol: self.tol,
            control: cfg.control,
            omega,
            identities: self.traces,
            verdict,
            first_violation: self.first,
        }
    }
}

fn require(g: &FactorGraph, family: Family, q: Option<usize>, what: &str) -> Result<()> {
    if g.family() != family || q.is_some_and(|q| q != g.q()) {
        return Err(Error::ParamError(format!("{what} needs a {family:?} instance")));
    }
    Ok(())
}

fn reject_control(cfg: &CheckConfig, allowed: &[NegativeControl], theorem: TheoremId) -> Result<()> {
    match cfg.control {
        Some(c) if !allowed.contains(&c) => {
            Err(Error::ParamError(format!("control {c:?} does not apply to {theorem}")))
        }
        _ => Ok(()),
    }
}

fn initial_rights(g: &FactorGraph, seed: u64, budget: u64) -> Result<Vec<TokenDist>> {
    let ptp = Ptp::new(g, PtpMode::Plain, budget)?;
    Ok(ptp.init(&PtpInit::RandomRight(InitSupport::Forceable), seed)?.right)
}

fn ptp_state(ptp: &Ptp, rights: &[TokenDist]) -> Result<PtpState> {
    ptp.init(&PtpInit::Right(rights.to_vec()), 0)
}

fn left_loc(g: &FactorGraph, e: EdgeId) -> impl Fn() -> String + '_ {
    move || g.left_edge(e).to_string()
}

fn right_loc(g: &FactorGraph, e: EdgeId) -> impl Fn() -> String + '_ {
    move || g.right_edge(e).to_string()
}

fn var_loc(v: usize) -> impl Fn() -> String {
    move || format!("v{v}")
}

/// SP(γ) against SP*(γ) on a k-SAT instance from shared warnings: `η` per
/// edge and the normalized summaries per coordinate.
pub fn check_sp_star_vs_sp(g: &FactorGraph, name: &str, gamma: f64, cfg: &CheckConfig) -> Result<PairedRunReport> {
    let theorem = TheoremId::SpStarSp;
    require(g, Family::KSat, None, "SP comparison")?;
    reject_control(cfg, &[NegativeControl::Perturb], theorem)?;
    let eta0: Vec<f64> =
        initial_rights(g, cfg.seed, cfg.budget)?.iter().map(|r| r.singleton_mass(0) + r.singleton_mass(1)).collect();
    let a = Sp::new(g, SpVariant::Gamma, gamma)?;
    let b = Sp::new(g, SpVariant::Star, gamma)?;
    let mut sa = a.init(eta0.clone())?;
    let mut sb = b.init(eta0)?;
    let mut rec = Recorder::new(cfg.tol, &["eta", "zeta"], &[]);
    for it in 0..=cfg.iterations {
        if it > 0 {
            a.step(&mut sa)?;
            let mut left = b.lefts(&sb.eta)?;
            if cfg.perturb(it) {
                left[0].pi_s += PERTURBATION;
            }
            let eta = b.rights(&left)?;
            b.finish(&mut sb, left, eta)?;
        }
        rec.begin();
        for e in 0..g.n_edges() {
            rec.compare(0, right_loc(g, e), sa.eta[e], sb.eta[e]);
        }
        for v in 0..g.n_vars() {
            let (x, y) = (&sa.summary[v], &sb.summary[v]);
            for (p, q) in [(x.zeta1, y.zeta1), (x.zeta0, y.zeta0), (x.zeta_star, y.zeta_star)] {
                rec.compare(1, var_loc(v), p, q);
            }
        }
    }
    Ok(rec.finish(theorem, InstanceDescriptor::of(name, g), cfg, Some(format!("gamma={gamma}"))))
}

/// Plain token passing against compact SP on a 3-coloring instance. The
/// SP message `u -> v`, stored on edge `(u, c)`, takes `η^i = λ_{u->c}({i})`
/// and `η^* = 1 - Σ_i λ_{u->c}({i})`, with `λ` normalized; summaries map
/// the same way.
pub fn check_ptp_vs_sp_3col(g: &FactorGraph, name: &str, cfg: &CheckConfig) -> Result<PairedRunReport> {
    let theorem = TheoremId::PtpSp3col;
    require(g, Family::QCol, Some(3), "coloring SP comparison")?;
    reject_control(cfg, &[NegativeControl::Perturb], theorem)?;
    let rights = initial_rights(g, cfg.seed, cfg.budget)?;
    let ptp = Ptp::new(g, PtpMode::Plain, cfg.budget)?;
    let mut ps = ptp_state(&ptp, &rights)?;
    let mut cs = ColSpState::new(g, col_init_from_rights(g, &rights)?)?;
    let mut rec = Recorder::new(cfg.tol, &["eta", "zeta"], &[]);
    let single = |d: &TokenDist, i: usize| d.singleton_mass(i as u8);
    for it in 0..=cfg.iterations {
        if it > 0 {
            ptp.step(&mut ps)?;
            cs.step(g)?;
            if cfg.perturb(it) {
                cs.msgs[0].eta[0] += PERTURBATION;
                cs.msgs[0].star -= PERTURBATION;
            }
        }
        rec.begin();
        if it > 0 {
            for e in 0..g.n_edges() {
                let (m, l) = (&cs.msgs[e], &ps.left[e]);
                let singles: f64 = (0..3).map(|i| single(l, i)).sum();
                for i in 0..3 {
                    rec.compare(0, left_loc(g, e), m.eta[i], single(l, i));
                }
                rec.compare(0, left_loc(g, e), m.star, 1.0 - singles);
            }
        }
        for v in 0..g.n_vars() {
            let (m, mu) = (&cs.summary[v], &ps.summary[v]);
            let singles: f64 = (0..3).map(|i| single(mu, i)).sum();
            for i in 0..3 {
                rec.compare(1, var_loc(v), m.eta[i], single(mu, i));
            }
            rec.compare(1, var_loc(v), m.star, 1.0 - singles);
        }
    }
    Ok(rec.finish(theorem, InstanceDescriptor::of(name, g), cfg, None))
}

/// Weighted token passing under the `γ` conditional against SP*(γ) on a
/// k-SAT instance. With `L` the label of the edge, the normalized SP* left
/// message maps as `Π^s ↔ λ({L})`, `Π^u ↔ λ({L̄})`, `Π^* ↔ λ({0,1})`, the
/// warning as `η ↔ ρ({0}) + ρ({1})` and the summary as `ζ^s ↔ μ({s})`,
/// `ζ^* ↔ μ({0,1})`.
pub fn check_wptp_vs_spstar_ksat(
    g: &FactorGraph,
    name: &str,
    gamma: f64,
    cfg: &CheckConfig,
) -> Result<PairedRunReport> {
    let theorem = TheoremId::WptpSpstarKsat;
    require(g, Family::KSat, None, "weighted SP comparison")?;
    reject_control(cfg, &[NegativeControl::Perturb], theorem)?;
    let rights = initial_rights(g, cfg.seed, cfg.budget)?;
    let ptp = Ptp::new(g, PtpMode::weighted_shared(g, ObedienceConditional::ksat_gamma(gamma)?), cfg.budget)?;
    let mut ps = ptp_state(&ptp, &rights)?;
    let sp = Sp::new(g, SpVariant::Star, gamma)?;
    let mut ss = sp.init(rights.iter().map(|r| r.singleton_mass(0) + r.singleton_mass(1)).collect())?;
    let mut rec = Recorder::new(cfg.tol, &["pi_s", "pi_u", "pi_star", "eta", "zeta"], &[]);
    let full = Token::full(2);
    for it in 0..=cfg.iterations {
        if it > 0 {
            ptp.step(&mut ps)?;
            let mut left = sp.lefts(&ss.eta)?;
            if cfg.perturb(it) {
                left[0].pi_s += PERTURBATION;
            }
            let eta = sp.rights(&left)?;
            sp.finish(&mut ss, left, eta)?;
        }
        rec.begin();
        if it > 0 {
            for e in 0..g.n_edges() {
                let l = g.label(e).expect("k-SAT labels");
                let pi = ss.left[e].normalized("SP* left")?;
                let lam = &ps.left[e];
                rec.compare(0, left_loc(g, e), pi.pi_s, lam.singleton_mass(l));
                rec.compare(1, left_loc(g, e), pi.pi_u, lam.singleton_mass(1 - l));
                rec.compare(2, left_loc(g, e), pi.pi_star, lam.get(full));
            }
        }
        for e in 0..g.n_edges() {
            let r = &ps.right[e];
            rec.compare(3, right_loc(g, e), ss.eta[e], r.singleton_mass(0) + r.singleton_mass(1));
        }
        for v in 0..g.n_vars() {
            let (z, mu) = (&ss.summary[v], &ps.summary[v]);
            rec.compare(4, var_loc(v), z.zeta0, mu.singleton_mass(0));
            rec.compare(4, var_loc(v), z.zeta1, mu.singleton_mass(1));
            rec.compare(4, var_loc(v), z.zeta_star, mu.get(full));
        }
    }
    Ok(rec.finish(theorem, InstanceDescriptor::of(name, g), cfg, Some(format!("gamma={gamma}"))))
}

/// Names of the k-SAT BP identities, in comparison order.
pub const BP_KSAT_IDENTITIES: [&str; 11] = [
    "left_ll",
    "left_lbar_star",
    "left_l_star",
    "left_star_star",
    "right_ll",
    "right_lbar_star",
    "right_l_star",
    "right_star_star",
    "summary_0",
    "summary_1",
    "summary_01",
];

/// BP under the `γ` conditional with full-column scaling against weighted
/// token passing on a k-SAT instance. BP starts from the decoupled lift of
/// the shared token-passing right messages. With `λ`, `ρ`, `μ` the
/// normalized token-passing messages:
///
/// * `λ(LL) ↔ λ({L}) + λ({0,1})`, `λ(L̄*) ↔ λ({L̄})`, `λ(L*) ↔ λ({L})`,
///   `λ(**) ↔ λ({0,1})`;
/// * `ρ(LL) ↔ ρ({0}) + ρ({1})` and `ρ(L̄*)`, `ρ(L*)`, `ρ(**)` each
///   `↔ ρ({0,1})`, which includes the decoupling of the right message;
/// * the normalized BP summary equals `μ` on every token.
pub fn check_bp_vs_wptp_ksat(g: &FactorGraph, name: &str, gamma: f64, cfg: &CheckConfig) -> Result<PairedRunReport> {
    let theorem = TheoremId::BpWptpKsat;
    require(g, Family::KSat, None, "BP comparison")?;
    reject_control(cfg, &[NegativeControl::Perturb, NegativeControl::CoupledInit], theorem)?;
    let rights = initial_rights(g, cfg.seed, cfg.budget)?;
    let ptp = Ptp::new(g, PtpMode::weighted_shared(g, ObedienceConditional::ksat_gamma(gamma)?), cfg.budget)?;
    let mut ps = ptp_state(&ptp, &rights)?;
    let fg = ForneyGraph::shared(g, ObedienceConditional::ksat_gamma(gamma)?, cfg.budget)?;
    let bp = Bp::new(&fg, BpNorm::KsatFullColumn, cfg.budget);
    let init = match cfg.control {
        Some(NegativeControl::CoupledInit) => random_rights(&fg, cfg.seed),
        _ => decoupled_rights_from_ptp(&fg, &rights)?,
    };
    let mut bs = bp.init(init)?;
    let mut rec = Recorder::new(cfg.tol, &BP_KSAT_IDENTITIES, &[]);
    let full = Token::full(2);
    for it in 0..=cfg.iterations {
        if it > 0 {
            ptp.step(&mut ps)?;
            bp.step(&mut bs)?;
            if cfg.perturb(it) {
                let (a, r) = bp_ksat::states(g.label(0).expect("k-SAT labels"))[2];
                bs.right[0].add(a, r, PERTURBATION);
            }
        }
        rec.begin();
        for e in 0..g.n_edges() {
            let l = g.label(e).expect("k-SAT labels");
            if it > 0 {
                let lam = &ps.left[e];
                let [ll, lbar_star, l_star, ss] = bp_ksat::entries(g, e, &bs.left[e]);
                let loc = left_loc(g, e);
                rec.compare(0, &loc, ll, lam.singleton_mass(l) + lam.get(full));
                rec.compare(1, &loc, lbar_star, lam.singleton_mass(1 - l));
                rec.compare(2, &loc, l_star, lam.singleton_mass(l));
                rec.compare(3, &loc, ss, lam.get(full));
            }
            let rho = &ps.right[e];
            let [ll, lbar_star, l_star, ss] = bp_ksat::entries(g, e, &bs.right[e]);
            let loc = right_loc(g, e);
            rec.compare(4, &loc, ll, rho.singleton_mass(0) + rho.singleton_mass(1));
            rec.compare(5, &loc, lbar_star, rho.get(full));
            rec.compare(6, &loc, l_star, rho.get(full));
            rec.compare(7, &loc, ss, rho.get(full));
        }
        for v in 0..g.n_vars() {
            let (b, mu) = (&bs.summary[v], &ps.summary[v]);
            for (i, t) in Token::all(2).enumerate() {
                rec.compare(8 + i, var_loc(v), b.get(t), mu.get(t));
            }
        }
    }
    Ok(rec.finish(theorem, InstanceDescriptor::of(name, g), cfg, Some(format!("gamma={gamma}"))))
}

/// State-decoupled BP under the indicator conditional against plain token
/// passing on a 3-coloring instance: the unnormalized token-passing left
/// message equals the SDBP left message on the full right state,
/// `λ(t) ↔ λ(t, χ)`, the normalized right messages equal `ρ*`, and the
/// summaries agree. With [`NegativeControl::PlainBp`], BP without the
/// decoupling step takes SDBP's place and its normalized diagonal is
/// compared instead.
pub fn check_sdbp_vs_ptp_3col(g: &FactorGraph, name: &str, cfg: &CheckConfig) -> Result<PairedRunReport> {
    let theorem = TheoremId::SdbpPtp3col;
    require(g, Family::QCol, Some(3), "SDBP comparison")?;
    reject_control(cfg, &[NegativeControl::Perturb, NegativeControl::PlainBp], theorem)?;
    let rights = initial_rights(g, cfg.seed, cfg.budget)?;
    let ptp = Ptp::new(g, PtpMode::Plain, cfg.budget)?;
    let mut ps = ptp_state(&ptp, &rights)?;
    let fg = ForneyGraph::shared(g, ObedienceConditional::indicator(3), cfg.budget)?;
    let full = Token::full(3);
    let mut rec = Recorder::new(cfg.tol, &["left_raw", "right", "summary"], &[]);
    if cfg.control == Some(NegativeControl::PlainBp) {
        let bp = Bp::new(&fg, BpNorm::Total, cfg.budget);
        let mut bs = bp.init(decoupled_rights_from_ptp(&fg, &rights)?)?;
        for it in 0..=cfg.iterations {
            if it > 0 {
                ptp.step(&mut ps)?;
                bp.step(&mut bs)?;
            }
            rec.begin();
            for e in 0..g.n_edges() {
                let star = bs.right[e].diagonal().normalized("bp diagonal")?;
                for t in Token::all(3) {
                    rec.compare(1, right_loc(g, e), star.get(t), ps.right[e].get(t));
                }
            }
            for v in 0..g.n_vars() {
                for t in Token::all(3) {
                    rec.compare(2, var_loc(v), bs.summary[v].get(t), ps.summary[v].get(t));
                }
            }
        }
        return Ok(rec.finish(theorem, InstanceDescriptor::of(name, g), cfg, Some("indicator".into())));
    }
    let mut ss = SdbpState::new(&fg, rights)?;
    for it in 0..=cfg.iterations {
        let mut raw: Vec<TokenDist> = Vec::new();
        if it > 0 {
            raw = (0..g.n_edges()).map(|e| ptp.left_raw(e, &ps.right)).collect();
            ptp.step(&mut ps)?;
            sdbp_step(&fg, &mut ss)?;
            if cfg.perturb(it) {
                let t = ss.right_star[0].support().next().expect("nonzero message").0;
                ss.right_star[0].add(t, PERTURBATION);
            }
        }
        rec.begin();
        #[allow(clippy::needless_range_loop)]
        for e in 0..g.n_edges() {
            for t in Token::all(3) {
                if it > 0 {
                    rec.compare(0, left_loc(g, e), raw[e].get(t), ss.left[e].get(t, full));
                }
                rec.compare(1, right_loc(g, e), ss.right_star[e].get(t), ps.right[e].get(t));
            }
        }
        for v in 0..g.n_vars() {
            for t in Token::all(3) {
                rec.compare(2, var_loc(v), ss.summary[v].get(t), ps.summary[v].get(t));
            }
        }
    }
    Ok(rec.finish(theorem, InstanceDescriptor::of(name, g), cfg, Some("indicator".into())))
}

/// One weighted token-passing run against SDBP under the same conditional
/// `omega`: normalized right messages against `ρ*`. Summaries are compared
/// as a diagnostic only.
pub fn check_sdbp_vs_wptp(
    g: &FactorGraph,
    name: &str,
    omega: &ObedienceConditional,
    omega_name: &str,
    cfg: &CheckConfig,
) -> Result<PairedRunReport> {
    let theorem = TheoremId::SdbpWptp;
    reject_control(cfg, &[NegativeControl::Perturb], theorem)?;
    let rights = initial_rights(g, cfg.seed, cfg.budget)?;
    let ptp = Ptp::new(g, PtpMode::weighted_shared(g, omega.clone()), cfg.budget)?;
    let mut ps = ptp_state(&ptp, &rights)?;
    let fg = ForneyGraph::shared(g, omega.clone(), cfg.budget)?;
    let mut ss = SdbpState::new(&fg, rights)?;
    let mut rec = Recorder::new(cfg.tol, &["right"], &["summary"]);
    for it in 0..=cfg.iterations {
        if it > 0 {
            ptp.step(&mut ps)?;
            sdbp_step(&fg, &mut ss)?;
            if cfg.perturb(it) {
                let t = ss.right_star[0].support().next().expect("nonzero message").0;
                ss.right_star[0].add(t, PERTURBATION);
            }
        }
        rec.begin();
        for e in 0..g.n_edges() {
            for t in Token::all(g.q()) {
                rec.compare(0, right_loc(g, e), ss.right_star[e].get(t), ps.right[e].get(t));
            }
        }
        for v in 0..g.n_vars() {
            for t in Token::all(g.q()) {
                rec.compare(1, var_loc(v), ss.summary[v].get(t), ps.summary[v].get(t));
            }
        }
    }
    Ok(rec.finish(theorem, InstanceDescriptor::of(name, g), cfg, Some(omega_name.into())))
}

/// The conditionals tried against an instance: the indicator and two
/// random obedient conditionals.
pub fn probe_family(q: usize, seed: u64) -> Vec<(String, ObedienceConditional)> {
    vec![
        ("indicator".to_string(), ObedienceConditional::indicator(q)),
        (format!("random-{seed}"), ObedienceConditional::random(q, seed)),
        (format!("random-{}", seed + 1), ObedienceConditional::random(q, seed + 1)),
    ]
}

/// How the local-compatibility check and the probe runs relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneralOutcome {
    /// Every constraint is compatible and every probe run held.
    Hold,
    /// Every constraint is compatible but some probe diverged.
    Violated,
    /// Some constraint is incompatible and some probe diverged.
    DivergenceFound,
    /// Some constraint is incompatible but no probe diverged. The probe
    /// family is finite, so this does not show that the engines agree for
    /// every conditional.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralReport {
    pub instance: InstanceDescriptor,
    pub compatibility: Vec<CompatReport>,
    pub all_compatible: bool,
    pub probes: Vec<PairedRunReport>,
    pub outcome: GeneralOutcome,
}

/// Decides local compatibility of every constraint and runs SDBP against
/// weighted token passing for every conditional of the probe family.
pub fn check_sdbp_vs_wptp_general(g: &FactorGraph, name: &str, cfg: &CheckConfig) -> Result<GeneralReport> {
    let compatibility = compatibility_report(g, cfg.budget)?;
    let all_compatible = compatibility.iter().all(|r| r.compatible);
    let probes = probe_family(g.q(), cfg.seed)
        .iter()
        .map(|(n, w)| check_sdbp_vs_wptp(g, name, w, n, cfg))
        .collect::<Result<Vec<_>>>()?;
    let diverged = probes.iter().any(|p| p.verdict == Verdict::Violated);
    let outcome = match (all_compatible, diverged) {
        (true, false) => GeneralOutcome::Hold,
        (true, true) => GeneralOutcome::Violated,
        (false, true) => GeneralOutcome::DivergenceFound,
        (false, false) => GeneralOutcome::Inconclusive,
    };
    Ok(GeneralReport { instance: InstanceDescriptor::of(name, g), compatibility, all_compatible, probes, outcome })
}

/// Size of a seeded suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub instances: usize,
    pub iterations: usize,
    pub base_seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { instances: 25, iterations: 30, base_seed: 0 }
    }
}

/// Every run of one theorem's suite. `runs` must hold and `controls` must
/// be flagged; for [`TheoremId::SdbpWptp`] the compatible instances must
/// hold and the incompatible ones must show a divergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub theorem: TheoremId,
    pub runs: Vec<PairedRunReport>,
    pub controls: Vec<PairedRunReport>,
    pub general: Vec<GeneralReport>,
    pub passed: bool,
}

/// Random 3-SAT instance of the suites: `n` cycles through 30, 45 and 60
/// with clause density 4.
pub fn suite_ksat(seed: u64) -> Result<(String, FactorGraph)> {
    let n = [30, 45, 60][(seed % 3) as usize];
    let g = gen_random_ksat(n, 4 * n, 3, seed, None)?.graph;
    Ok((format!("3sat-n{n}-a4-s{seed}"), g))
}

/// Random 3-coloring instance of the suites: `n` cycles through 12, 30
/// and 60 with `2 n` edges.
pub fn suite_col3(seed: u64) -> Result<(String, FactorGraph)> {
    let n = [12, 30, 60][(seed % 3) as usize];
    let g = gen_random_qcol(n, 2 * n, 3, seed, None)?.graph;
    Ok((format!("3col-n{n}-s{seed}"), g))
}

/// `γ` used by the suites of the weighted checks, cycling through 0, 0.5
/// and 1 for the SP* check and fixed at 0.8 for BP.
fn suite_gamma(theorem: TheoremId, seed: u64) -> f64 {
    match theorem {
        TheoremId::SpStarSp => 0.5,
        TheoremId::WptpSpstarKsat => [0.0, 0.5, 1.0][(seed % 3) as usize],
        _ => 0.8,
    }
}

/// Runs the seeded suite of `theorem`.
pub fn run_suite(theorem: TheoremId, sc: &SuiteConfig) -> Result<SuiteReport> {
    let mut runs = Vec::new();
    let mut controls = Vec::new();
    let mut general = Vec::new();
    let cfg = |seed| CheckConfig { iterations: sc.iterations, ..CheckConfig::new(theorem, seed) };
    let seeds = sc.base_seed..sc.base_seed + sc.instances as u64;
    let run = |g: &FactorGraph, name: &str, c: &CheckConfig| -> Result<PairedRunReport> {
        let gamma = suite_gamma(theorem, c.seed);
        match theorem {
            TheoremId::SpStarSp => check_sp_star_vs_sp(g, name, gamma, c),
            TheoremId::PtpSp3col => check_ptp_vs_sp_3col(g, name, c),
            TheoremId::WptpSpstarKsat => check_wptp_vs_spstar_ksat(g, name, gamma, c),
            TheoremId::BpWptpKsat => check_bp_vs_wptp_ksat(g, name, gamma, c),
            TheoremId::SdbpPtp3col => check_sdbp_vs_ptp_3col(g, name, c),
            TheoremId::SdbpWptp => unreachable!("handled separately"),
        }
    };
    let uses_col3 = matches!(theorem, TheoremId::PtpSp3col | TheoremId::SdbpPtp3col);
    if theorem == TheoremId::SdbpWptp {
        for seed in seeds {
            let (name, g) = if seed % 2 == 0 { suite_ksat(seed)? } else { suite_col3(seed)? };
            general.push(check_sdbp_vs_wptp_general(&g, &name, &cfg(seed))?);
        }
        let g = crate::fixtures::incompatible_triangle();
        general.push(check_sdbp_vs_wptp_general(&g, "incompatible-triangle", &cfg(sc.base_seed))?);
        let (name, g) = suite_ksat(sc.base_seed)?;
        let (w_name, w) = &probe_family(2, sc.base_seed)[0];
        let c = cfg(sc.base_seed).with_control(NegativeControl::Perturb);
        controls.push(check_sdbp_vs_wptp(&g, &name, w, w_name, &c)?);
    } else {
        for seed in seeds {
            let (name, g) = if uses_col3 { suite_col3(seed)? } else { suite_ksat(seed)? };
            runs.push(run(&g, &name, &cfg(seed))?);
        }
        let (name, g) = if uses_col3 { suite_col3(sc.base_seed)? } else { suite_ksat(sc.base_seed)? };
        let mut kinds = vec![NegativeControl::Perturb];
        match theorem {
            TheoremId::BpWptpKsat => kinds.push(NegativeControl::CoupledInit),
            TheoremId::SdbpPtp3col => kinds.push(NegativeControl::PlainBp),
            _ => {}
        }
        for k in kinds {
            controls.push(run(&g, &name, &cfg(sc.base_seed).with_control(k))?);
        }
    }
    let passed = runs.iter().all(|r| r.verdict == Verdict::Hold)
        && controls.iter().all(|r| r.verdict == Verdict::Violated)
        && general.iter().all(|r| {
            if r.all_compatible {
                r.outcome == GeneralOutcome::Hold
            } else {
                r.outcome == GeneralOutcome::DivergenceFound
            }
        });
    Ok(SuiteReport { theorem, runs, controls, general, passed })
}

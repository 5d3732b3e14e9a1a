//! Decimation: run a propagation engine, fix the most polarized coordinate,
//! simplify, and repeat until the residual instance is small enough to
//! search exhaustively.
//!
//! The polarization of symbol `r` at `v` is the normalized summary mass of
//! the singleton token `{r}`. For k-SAT this ranks coordinates the same way
//! as the classical bias `|ζ^0 - ζ^1|` whenever one of the two singletons
//! carries no mass, and it applies unchanged to every other alphabet.
//!
//! A [`SolveStatus::Contradiction`] only says that the heuristic choices
//! led to an empty constraint or an unsatisfiable residual. It is not a
//! proof that the instance is unsatisfiable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forced::DEFAULT_BUDGET;
use crate::graph::{Constraint, DegreePolicy, FactorGraph};
use crate::mrf::{decoupled_rights_from_ptp, sdbp_step, Bp, BpNorm, ForneyGraph, SdbpState};
use crate::ptp::{run_ptp, InitSupport, ObedienceConditional, Ptp, PtpConfig, PtpInit, PtpMode, TokenDist};
use crate::sp::{sp_init_from_ptp, Sp, SpVariant};
use crate::token::Token;

/// Propagation engine driving the decimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// SP(γ), k-SAT only.
    #[default]
    SpGamma,
    /// SP*(γ), k-SAT only.
    SpStar,
    /// Plain token passing.
    Ptp,
    /// Weighted token passing.
    Wptp,
    /// Belief propagation on the normally realized MRF, started from a
    /// decoupled state.
    Bp,
    /// State-decoupled belief propagation.
    Sdbp,
}

/// What a decimation step fixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecimationTarget {
    /// A single symbol, chosen by singleton mass.
    #[default]
    Singleton,
    /// Any token strictly inside the current domain, chosen by summary
    /// mass. Only meaningful for alphabets with more than two symbols.
    Token,
}

/// Solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub algorithm: Algorithm,
    /// `γ` of SP and of the k-SAT conditional.
    pub gamma: f64,
    /// Conditional for the weighted engines. When absent, k-SAT graphs use
    /// the `γ` conditional and every other graph the indicator.
    pub omega: Option<ObedienceConditional>,
    /// Propagation iterations per decimation round.
    pub max_iters: usize,
    /// Propagation stops early once the largest message change is below
    /// this value.
    pub tol: f64,
    pub seed: u64,
    /// A coordinate is only fixed when its polarization exceeds this value.
    pub threshold: f64,
    /// The residual instance is searched exhaustively once the product of
    /// its open domain sizes is at most this value.
    pub brute_force_limit: u128,
    pub target: DecimationTarget,
    /// Enumeration budget of the constraint-side updates.
    pub budget: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            algorithm: Algorithm::SpGamma,
            gamma: 1.0,
            omega: None,
            max_iters: 200,
            tol: 1e-6,
            seed: 0,
            threshold: 0.0,
            brute_force_limit: 1 << 20,
            target: DecimationTarget::Singleton,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl SolveConfig {
    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        crate::ptp::check_gamma(self.gamma)?;
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::ParamError(format!("tolerance {} must be positive", self.tol)));
        }
        if self.max_iters == 0 || self.brute_force_limit == 0 || self.budget == 0 {
            return Err(Error::ParamError("iteration, search and enumeration limits must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::ParamError(format!("threshold {} is outside [0, 1)", self.threshold)));
        }
        if let Some(w) = &self.omega {
            w.validate()?;
        }
        Ok(())
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveStatus {
    /// A verified satisfying assignment.
    Sat { assignment: Vec<u8> },
    /// The engine stopped giving usable guidance while the residual was
    /// still too large to search.
    GaveUp { reason: String },
    /// Decimation emptied a constraint or a domain, or the residual search
    /// found no solution. Not a proof of unsatisfiability.
    Contradiction { reason: String },
}

/// One decimation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecimationStep {
    pub var: usize,
    /// Token the coordinate was restricted to.
    pub token: Token,
    /// Summary mass of that token.
    pub bias: f64,
    /// Propagation iterations run before the choice.
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    #[serde(flatten)]
    pub status: SolveStatus,
    pub trace: Vec<DecimationStep>,
    /// Propagation iterations summed over every round.
    pub iterations: usize,
}

/// A decimation choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub var: usize,
    pub token: Token,
    pub bias: f64,
}

/// Picks the eligible coordinate whose largest singleton mass is largest,
/// breaking ties by the lowest coordinate and then the lowest symbol. Only
/// masses above `threshold` count.
pub fn decimate_once(summaries: &[TokenDist], eligible: &[bool], threshold: f64) -> Result<Decision> {
    let mut best: Option<Decision> = None;
    for (v, mu) in summaries.iter().enumerate() {
        if !eligible.get(v).copied().unwrap_or(false) {
            continue;
        }
        for s in 0..mu.q() as u8 {
            let b = mu.singleton_mass(s);
            if b > threshold && best.map_or(true, |d| b > d.bias) {
                best = Some(Decision { var: v, token: Token::singleton(s), bias: b });
            }
        }
    }
    best.ok_or(Error::NoPolarizedVariable)
}

/// Token variant of [`decimate_once`]: candidates are the tokens strictly
/// inside the coordinate's domain, ranked by summary mass.
pub fn decimate_token(
    summaries: &[TokenDist],
    domains: &[Token],
    eligible: &[bool],
    threshold: f64,
) -> Result<Decision> {
    let mut best: Option<Decision> = None;
    for (v, mu) in summaries.iter().enumerate() {
        if !eligible.get(v).copied().unwrap_or(false) {
            continue;
        }
        for (t, b) in mu.support() {
            if !t.is_proper_subset(domains[v]) {
                continue;
            }
            if b > threshold && best.map_or(true, |d| b > d.bias) {
                best = Some(Decision { var: v, token: t, bias: b });
            }
        }
    }
    best.ok_or(Error::NoPolarizedVariable)
}

#[derive(Debug, Clone, PartialEq)]
struct ResidualConstraint {
    scope: Vec<usize>,
    tuples: Vec<Vec<u8>>,
    labels: Option<Vec<u8>>,
}

/// An instance under decimation: per-coordinate domains plus the
/// constraints that still restrict something. Coordinates keep their
/// original indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    q: usize,
    domain: Vec<Token>,
    cons: Vec<ResidualConstraint>,
    ksat: bool,
}

impl Residual {
    pub fn new(g: &FactorGraph) -> Residual {
        let labels = g.labels_per_constraint();
        let cons = g
            .constraints()
            .iter()
            .enumerate()
            .map(|(c, con)| ResidualConstraint {
                scope: con.scope().to_vec(),
                tuples: con.tuples().map(<[u8]>::to_vec).collect(),
                labels: labels.as_ref().map(|l| l[c].clone()),
            })
            .collect();
        Residual { q: g.q(), domain: vec![g.full(); g.n_vars()], cons, ksat: g.is_ksat() }
    }

    pub fn n_vars(&self) -> usize {
        self.domain.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.cons.len()
    }

    pub fn domain(&self, v: usize) -> Token {
        self.domain[v]
    }

    /// The fixed symbol of `v`, if its domain is a singleton.
    pub fn fixed(&self, v: usize) -> Option<u8> {
        self.domain[v].singleton_symbol()
    }

    /// Number of remaining constraints on `v`.
    pub fn degree(&self, v: usize) -> usize {
        self.cons.iter().filter(|c| c.scope.contains(&v)).count()
    }

    /// Unfixed coordinates that still appear in some constraint.
    pub fn active(&self) -> Vec<bool> {
        let mut a = vec![false; self.n_vars()];
        for c in &self.cons {
            for &v in &c.scope {
                a[v] = self.fixed(v).is_none();
            }
        }
        a
    }

    /// Product of the domain sizes of the active coordinates.
    pub fn search_space(&self) -> u128 {
        self.active()
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .fold(1u128, |acc, (v, _)| acc.saturating_mul(self.domain[v].len() as u128))
    }

    /// The residual as a factor graph over the original coordinates, with
    /// fixed and unconstrained coordinates left isolated.
    pub fn graph(&self) -> Result<FactorGraph> {
        let constraints =
            self.cons.iter().map(|c| Constraint::new(c.scope.clone(), c.tuples.clone())).collect::<Result<Vec<_>>>()?;
        let g = FactorGraph::new(self.q, self.n_vars(), constraints, DegreePolicy::AllowLow)?;
        if self.ksat {
            let labels = self.cons.iter().map(|c| c.labels.clone()).collect::<Option<Vec<_>>>();
            if let Some(labels) = labels {
                return g.with_labels(labels);
            }
        }
        Ok(g)
    }

    /// Fixes `v` to `symbol` and simplifies.
    pub fn fix_and_simplify(&mut self, v: usize, symbol: u8) -> Result<()> {
        if symbol as usize >= self.q {
            return Err(Error::ParamError(format!("symbol {symbol} outside alphabet of size {}", self.q)));
        }
        self.restrict(v, Token::singleton(symbol))
    }

    /// Intersects the domain of `v` with `t` and simplifies: constraints
    /// lose the tuples that left the domains, fixed coordinates are
    /// projected out, constraints that no longer restrict anything are
    /// dropped, and single-coordinate residues become domain restrictions
    /// in turn.
    pub fn restrict(&mut self, v: usize, t: Token) -> Result<()> {
        if v >= self.n_vars() {
            return Err(Error::ScopeError(format!("coordinate {v} out of range")));
        }
        let mut queue = vec![(v, t)];
        while let Some((u, t)) = queue.pop() {
            let new = self.domain[u]
                .intersect(t)
                .ok_or_else(|| Error::Contradiction(format!("coordinate {u} has no symbol left")))?;
            if new == self.domain[u] {
                continue;
            }
            self.domain[u] = new;
            let mut i = 0;
            while i < self.cons.len() {
                let Some(pos) = self.cons[i].scope.iter().position(|&w| w == u) else {
                    i += 1;
                    continue;
                };
                let c = &mut self.cons[i];
                c.tuples.retain(|tu| new.contains(tu[pos]));
                if c.tuples.is_empty() {
                    return Err(Error::Contradiction(format!("constraint on {:?} has no tuple left", c.scope)));
                }
                if new.is_singleton() {
                    c.scope.remove(pos);
                    for tu in &mut c.tuples {
                        tu.remove(pos);
                    }
                    if let Some(l) = &mut c.labels {
                        l.remove(pos);
                    }
                }
                let open: usize = c.scope.iter().map(|&w| self.domain[w].len()).product();
                if c.scope.len() == 1 {
                    let mask = c.tuples.iter().fold(0u16, |m, tu| m | 1 << tu[0]);
                    queue.push((c.scope[0], Token::new(mask).expect("nonempty tuples")));
                    self.cons.remove(i);
                } else if c.scope.is_empty() || c.tuples.len() == open {
                    self.cons.remove(i);
                } else {
                    i += 1;
                }
            }
        }
        Ok(())
    }

    /// Backtracking search over the active coordinates in index order.
    /// Returns a full assignment (free coordinates take their lowest domain
    /// symbol) or `None` when the residual has no solution.
    pub fn search(&self) -> Option<Vec<u8>> {
        let active = self.active();
        let order: Vec<usize> = (0..self.n_vars()).filter(|&v| active[v]).collect();
        let mut rank = vec![usize::MAX; self.n_vars()];
        for (i, &v) in order.iter().enumerate() {
            rank[v] = i;
        }
        let mut check_at: Vec<Vec<usize>> = vec![Vec::new(); order.len()];
        for (ci, c) in self.cons.iter().enumerate() {
            let last = c.scope.iter().map(|&v| rank[v]).max().expect("nonempty scope");
            check_at[last].push(ci);
        }
        let mut x: Vec<u8> = self.domain.iter().map(|d| d.symbols().next().expect("nonempty domain")).collect();
        let choices: Vec<Vec<u8>> = order.iter().map(|&v| self.domain[v].symbols().collect()).collect();
        let mut digit = vec![0usize; order.len()];
        let mut depth = 0usize;
        if order.is_empty() {
            return Some(x);
        }
        loop {
            if digit[depth] == choices[depth].len() {
                digit[depth] = 0;
                if depth == 0 {
                    return None;
                }
                depth -= 1;
                digit[depth] += 1;
                continue;
            }
            x[order[depth]] = choices[depth][digit[depth]];
            let ok = check_at[depth].iter().all(|&ci| {
                let c = &self.cons[ci];
                let tuple: Vec<u8> = c.scope.iter().map(|&v| x[v]).collect();
                c.tuples.contains(&tuple)
            });
            if !ok {
                digit[depth] += 1;
            } else if depth + 1 == order.len() {
                return Some(x);
            } else {
                depth += 1;
            }
        }
    }
}

/// Normalized summaries of one propagation run on `g`, with the iteration
/// count and whether the run converged.
pub fn propagate(g: &FactorGraph, cfg: &SolveConfig, seed: u64) -> Result<(Vec<TokenDist>, usize, bool)> {
    let omega = || -> Result<ObedienceConditional> {
        match &cfg.omega {
            Some(w) => Ok(w.clone()),
            None if g.is_ksat() => ObedienceConditional::ksat_gamma(cfg.gamma),
            None => Ok(ObedienceConditional::indicator(g.q())),
        }
    };
    let init_rights = || -> Result<Vec<TokenDist>> {
        let ptp = Ptp::new(g, PtpMode::Plain, cfg.budget)?;
        Ok(ptp.init(&PtpInit::RandomRight(InitSupport::Forceable), seed)?.right)
    };
    match cfg.algorithm {
        Algorithm::SpGamma | Algorithm::SpStar => {
            let variant = if cfg.algorithm == Algorithm::SpGamma { SpVariant::Gamma } else { SpVariant::Star };
            let sp = Sp::new(g, variant, cfg.gamma)?;
            let mut state = sp.init(sp_init_from_ptp(g, seed)?)?;
            let converged = sp.run(&mut state, cfg.max_iters, cfg.tol)?;
            Ok((state.summary.iter().map(|s| s.to_dist()).collect(), state.iteration, converged))
        }
        Algorithm::Ptp | Algorithm::Wptp => {
            let mode =
                if cfg.algorithm == Algorithm::Ptp { PtpMode::Plain } else { PtpMode::weighted_shared(g, omega()?) };
            let pc = PtpConfig {
                mode,
                init: PtpInit::default(),
                max_iters: cfg.max_iters,
                tol: cfg.tol,
                seed,
                budget: cfg.budget,
            };
            let (state, report) = run_ptp(g, &pc)?;
            Ok((state.summary, report.iterations, report.converged))
        }
        Algorithm::Bp => {
            let fg = ForneyGraph::shared(g, omega()?, cfg.budget)?;
            let bp = Bp::new(&fg, BpNorm::Total, cfg.budget);
            let mut state = bp.init(decoupled_rights_from_ptp(&fg, &init_rights()?)?)?;
            let mut converged = false;
            while state.iteration < cfg.max_iters {
                if bp.step(&mut state)? < cfg.tol {
                    converged = true;
                    break;
                }
            }
            Ok((state.summary, state.iteration, converged))
        }
        Algorithm::Sdbp => {
            let fg = ForneyGraph::shared(g, omega()?, cfg.budget)?;
            let mut state = SdbpState::new(&fg, init_rights()?)?;
            let mut converged = false;
            while state.iteration < cfg.max_iters {
                if sdbp_step(&fg, &mut state)? < cfg.tol {
                    converged = true;
                    break;
                }
            }
            Ok((state.summary, state.iteration, converged))
        }
    }
}

/// Decimation loop. Every `Sat` assignment is checked against the original
/// graph before it is returned.
pub fn solve(g: &FactorGraph, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if matches!(cfg.algorithm, Algorithm::SpGamma | Algorithm::SpStar) && !g.is_ksat() {
        return Err(Error::ParamError("survey propagation needs a k-SAT instance".into()));
    }
    let mut res = Residual::new(g);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let finish = |status, trace, iterations| Ok(SolveResult { status, trace, iterations });
    for round in 0u64.. {
        if res.search_space() <= cfg.brute_force_limit {
            let status = match res.search() {
                Some(x) if g.satisfies(&x)? => SolveStatus::Sat { assignment: x },
                Some(_) => SolveStatus::GaveUp { reason: "residual solution failed verification".into() },
                None => SolveStatus::Contradiction { reason: "residual instance has no solution".into() },
            };
            return finish(status, trace, iterations);
        }
        let rg = res.graph()?;
        let (summaries, iters, converged) = match propagate(&rg, cfg, cfg.seed.wrapping_add(round)) {
            Ok(out) => out,
            Err(Error::DegenerateMessage(m)) => {
                let reason = format!("propagation degenerated at {m}");
                return finish(SolveStatus::GaveUp { reason }, trace, iterations);
            }
            Err(e) => return Err(e),
        };
        iterations += iters;
        let active = res.active();
        let decision = match cfg.target {
            DecimationTarget::Singleton => decimate_once(&summaries, &active, cfg.threshold),
            DecimationTarget::Token => {
                let domains: Vec<Token> = (0..res.n_vars()).map(|v| res.domain(v)).collect();
                decimate_token(&summaries, &domains, &active, cfg.threshold)
            }
        };
        let d = match decision {
            Ok(d) => d,
            Err(Error::NoPolarizedVariable) => {
                let reason = format!("no polarized variable; residual search space {}", res.search_space());
                return finish(SolveStatus::GaveUp { reason }, trace, iterations);
            }
            Err(e) => return Err(e),
        };
        trace.push(DecimationStep { var: d.var, token: d.token, bias: d.bias, iterations: iters, converged });
        match res.restrict(d.var, d.token) {
            Ok(()) => {}
            Err(Error::Contradiction(reason)) => {
                return finish(SolveStatus::Contradiction { reason }, trace, iterations)
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("the round counter does not run out")
}

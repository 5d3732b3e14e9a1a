//! Per-iteration message dumps of any engine, for inspection and for the
//! command-line `propagate` subcommand.
//!
//! Messages are keyed by their directed edge (`v3->c1` for left messages,
//! `c1->v3` for right messages) and serialize to JSON with token keys
//! written as sorted symbol strings.

use serde::{Deserialize, Serialize};

use crate::dtp::{dtp_init_full, dtp_iterate, dtp_summary, DtpStatus};
use crate::error::{Error, Result};
use crate::forced::DEFAULT_BUDGET;
use crate::graph::FactorGraph;
use crate::mrf::{decoupled_rights_from_ptp, sdbp_step, Bp, BpNorm, ForneyGraph, SdbpState, StateMsg};
use crate::ptp::{InitSupport, ObedienceConditional, Ptp, PtpInit, PtpMode, TokenDist};
use crate::sp::{sp_init_from_ptp, SatLeft, Sp, SpVariant};
use crate::token::Token;

/// Engine selectable for a dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Dtp,
    Ptp,
    Wptp,
    Sp,
    SpStar,
    Bp,
    Sdbp,
}

/// One message of any engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Message {
    /// An SP warning `η`.
    Warning(f64),
    /// A DTP token; `null` is the empty set.
    Token(Option<Token>),
    Dist(TokenDist),
    Table(StateMsg),
    Survey(SatLeft),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMessage {
    pub edge: String,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDump {
    pub iteration: usize,
    pub left: Vec<EdgeMessage>,
    pub right: Vec<EdgeMessage>,
    /// Summaries indexed by coordinate.
    pub summary: Vec<Message>,
    /// Largest message change in this iteration, when defined.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationTrace {
    pub engine: Engine,
    pub converged: bool,
    pub iterations: Vec<IterationDump>,
}

/// Parameters of a dump run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceConfig {
    pub engine: Engine,
    pub gamma: f64,
    /// Conditional of the weighted engines; defaults as in the solver.
    pub omega: Option<ObedienceConditional>,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub budget: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            engine: Engine::Ptp,
            gamma: 1.0,
            omega: None,
            max_iters: 50,
            tol: 1e-8,
            seed: 0,
            budget: DEFAULT_BUDGET,
        }
    }
}

fn finite(delta: f64) -> Option<f64> {
    delta.is_finite().then_some(delta)
}

struct Dumper<'g> {
    g: &'g FactorGraph,
    out: Vec<IterationDump>,
}

impl Dumper<'_> {
    fn push<L, R, S>(&mut self, iteration: usize, left: &[L], right: &[R], summary: &[S], delta: f64)
    where
        L: Clone + Into<Message>,
        R: Clone + Into<Message>,
        S: Clone + Into<Message>,
    {
        let g = self.g;
        self.out.push(IterationDump {
            iteration,
            left: left
                .iter()
                .enumerate()
                .map(|(e, m)| EdgeMessage { edge: g.left_edge(e).to_string(), message: m.clone().into() })
                .collect(),
            right: right
                .iter()
                .enumerate()
                .map(|(e, m)| EdgeMessage { edge: g.right_edge(e).to_string(), message: m.clone().into() })
                .collect(),
            summary: summary.iter().map(|s| s.clone().into()).collect(),
            delta: finite(delta),
        });
    }
}

impl From<f64> for Message {
    fn from(x: f64) -> Message {
        Message::Warning(x)
    }
}

impl From<Option<Token>> for Message {
    fn from(t: Option<Token>) -> Message {
        Message::Token(t)
    }
}

impl From<TokenDist> for Message {
    fn from(d: TokenDist) -> Message {
        Message::Dist(d)
    }
}

impl From<StateMsg> for Message {
    fn from(m: StateMsg) -> Message {
        Message::Table(m)
    }
}

impl From<SatLeft> for Message {
    fn from(m: SatLeft) -> Message {
        Message::Survey(m)
    }
}

fn default_omega(g: &FactorGraph, cfg: &TraceConfig) -> Result<ObedienceConditional> {
    match &cfg.omega {
        Some(w) => Ok(w.clone()),
        None if g.is_ksat() => ObedienceConditional::ksat_gamma(cfg.gamma),
        None => Ok(ObedienceConditional::indicator(g.q())),
    }
}

/// Runs the chosen engine and records every iteration, starting with the
/// initialization as iteration 0.
pub fn trace(g: &FactorGraph, cfg: &TraceConfig) -> Result<PropagationTrace> {
    if cfg.max_iters == 0 {
        return Err(Error::ParamError("at least one iteration is needed".into()));
    }
    let mut d = Dumper { g, out: Vec::new() };
    let mut converged = false;
    let none: [TokenDist; 0] = [];
    match cfg.engine {
        Engine::Dtp => {
            let mut state = dtp_init_full(g);
            let empty: [Option<Token>; 0] = [];
            d.push(0, &state.left, &empty, &empty, f64::INFINITY);
            for _ in 0..cfg.max_iters {
                let status = dtp_iterate(g, &mut state);
                let summary = dtp_summary(g, &state)?.tokens;
                d.push(state.iteration, &state.left, state.right.as_deref().unwrap_or(&[]), &summary, f64::INFINITY);
                if status == DtpStatus::FixedPoint {
                    converged = true;
                    break;
                }
            }
        }
        Engine::Ptp | Engine::Wptp => {
            let mode = match cfg.engine {
                Engine::Ptp => PtpMode::Plain,
                _ => PtpMode::weighted_shared(g, default_omega(g, cfg)?),
            };
            let ptp = Ptp::new(g, mode, cfg.budget)?;
            let mut state = ptp.init(&PtpInit::RandomRight(InitSupport::Forceable), cfg.seed)?;
            d.push(0, &none, &state.right, &state.summary, f64::INFINITY);
            for _ in 0..cfg.max_iters {
                let delta = ptp.step(&mut state)?;
                d.push(state.iteration, &state.left, &state.right, &state.summary, delta);
                if delta < cfg.tol {
                    converged = true;
                    break;
                }
            }
        }
        Engine::Sp | Engine::SpStar => {
            let variant = if cfg.engine == Engine::Sp { SpVariant::Gamma } else { SpVariant::Star };
            let sp = Sp::new(g, variant, cfg.gamma)?;
            let mut state = sp.init(sp_init_from_ptp(g, cfg.seed)?)?;
            let dists = |s: &[crate::sp::SatSummary]| s.iter().map(|z| z.to_dist()).collect::<Vec<_>>();
            let no_left: [SatLeft; 0] = [];
            d.push(0, &no_left, &state.eta, &dists(&state.summary), f64::INFINITY);
            for _ in 0..cfg.max_iters {
                let delta = sp.step(&mut state)?;
                d.push(state.iteration, &state.left, &state.eta, &dists(&state.summary), delta);
                if delta < cfg.tol {
                    converged = true;
                    break;
                }
            }
        }
        Engine::Bp | Engine::Sdbp => {
            let fg = ForneyGraph::shared(g, default_omega(g, cfg)?, cfg.budget)?;
            let ptp = Ptp::new(g, PtpMode::Plain, cfg.budget)?;
            let rights = ptp.init(&PtpInit::RandomRight(InitSupport::Forceable), cfg.seed)?.right;
            let no_left: [StateMsg; 0] = [];
            if cfg.engine == Engine::Bp {
                let bp = Bp::new(&fg, BpNorm::Total, cfg.budget);
                let mut state = bp.init(decoupled_rights_from_ptp(&fg, &rights)?)?;
                d.push(0, &no_left, &state.right, &state.summary, f64::INFINITY);
                for _ in 0..cfg.max_iters {
                    let delta = bp.step(&mut state)?;
                    d.push(state.iteration, &state.left, &state.right, &state.summary, delta);
                    if delta < cfg.tol {
                        converged = true;
                        break;
                    }
                }
            } else {
                let mut state = SdbpState::new(&fg, rights)?;
                d.push(0, &no_left, &state.right_star, &state.summary, f64::INFINITY);
                for _ in 0..cfg.max_iters {
                    let delta = sdbp_step(&fg, &mut state)?;
                    d.push(state.iteration, &state.left, &state.right_star, &state.summary, delta);
                    if delta < cfg.tol {
                        converged = true;
                        break;
                    }
                }
            }
        }
    }
    Ok(PropagationTrace { engine: cfg.engine, converged, iterations: d.out })
}

//! Deterministic token passing.
//!
//! Left messages intersect the incoming right tokens at a coordinate,
//! right messages apply the forced-token function of a constraint. One
//! call to [`dtp_iterate`] is one flooding iteration. The first iteration
//! only computes right messages from the initial left tokens, so after `l`
//! calls the right messages are the iteration-`l` tokens `t_{c->v}^{(l)}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedEdge, EdgeId, FactorGraph, Rectangle};
use crate::token::Token;

/// What to do when a message becomes the empty set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyPolicy {
    /// Keep iterating; emptiness propagates through later updates.
    #[default]
    Record,
    /// Freeze the state at the iteration that produced the empty message.
    Halt,
}

/// Outcome of one DTP iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtpStatus {
    Running,
    FixedPoint,
    /// First empty message of the iteration, in update order (all left
    /// messages by edge index, then all right messages).
    EmptyToken(DirectedEdge),
}

/// Messages of a DTP run, indexed by [`EdgeId`]. `None` is the empty set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenState {
    pub left: Vec<Option<Token>>,
    /// Right messages; absent until the first iteration.
    pub right: Option<Vec<Option<Token>>>,
    pub iteration: usize,
    pub policy: EmptyPolicy,
    /// Set once a `Halt` run has stopped.
    pub halted_at: Option<DirectedEdge>,
}

impl TokenState {
    /// Right message on edge `e`, if computed.
    pub fn right_token(&self, e: EdgeId) -> Option<Option<Token>> {
        self.right.as_ref().map(|r| r[e])
    }
}

/// Starts a run from one initial left token per edge.
pub fn dtp_init(g: &FactorGraph, initial_left: Vec<Token>) -> Result<TokenState> {
    if initial_left.len() != g.n_edges() {
        return Err(Error::InitError(format!("{} initial tokens for {} edges", initial_left.len(), g.n_edges())));
    }
    let full = g.full();
    if let Some(e) = initial_left.iter().position(|t| !t.is_subset(full)) {
        return Err(Error::InitError(format!("token on edge {} uses a symbol outside the alphabet", g.left_edge(e))));
    }
    Ok(TokenState {
        left: initial_left.into_iter().map(Some).collect(),
        right: None,
        iteration: 0,
        policy: EmptyPolicy::Record,
        halted_at: None,
    })
}

/// [`dtp_init`] from raw masks; a zero mask is rejected.
pub fn dtp_init_masks(g: &FactorGraph, masks: &[u16]) -> Result<TokenState> {
    let tokens = masks
        .iter()
        .enumerate()
        .map(|(e, &m)| Token::new(m).ok_or_else(|| Error::InitError(format!("empty initial token on edge {e}"))))
        .collect::<Result<Vec<_>>>()?;
    dtp_init(g, tokens)
}

/// Every left message starts as the full token.
pub fn dtp_init_full(g: &FactorGraph) -> TokenState {
    dtp_init(g, vec![g.full(); g.n_edges()]).expect("full tokens are valid")
}

/// Every left message starts as the singleton of `x` at its coordinate.
pub fn dtp_init_assignment(g: &FactorGraph, x: &[u8]) -> Result<TokenState> {
    if x.len() != g.n_vars() {
        return Err(Error::IncompleteAssignment { expected: g.n_vars(), got: x.len() });
    }
    if x.iter().any(|&s| s as usize >= g.q()) {
        return Err(Error::InitError("assignment symbol outside the alphabet".into()));
    }
    dtp_init(g, g.edges().iter().map(|e| Token::singleton(x[e.var])).collect())
}

/// Left message on edge `e` from the current right messages:
/// intersection over the other constraints at the coordinate.
fn left_update(g: &FactorGraph, right: &[Option<Token>], e: EdgeId) -> Option<Token> {
    let v = g.edge(e).var;
    let mut acc = Some(g.full());
    for &b in g.var_edges(v) {
        if b != e {
            acc = match (acc, right[b]) {
                (Some(a), Some(t)) => a.intersect(t),
                _ => None,
            };
        }
    }
    acc
}

/// Right message on edge `e`: forced token from the other left messages.
fn right_update(g: &FactorGraph, left: &[Option<Token>], e: EdgeId, masks: &mut Vec<u16>) -> Option<Token> {
    let ed = g.edge(e);
    let range = g.con_edges(ed.con);
    masks.clear();
    for (pos, b) in range.enumerate() {
        masks.push(if pos == ed.pos { 0 } else { left[b].map_or(0, |t| t.mask()) });
    }
    if masks.iter().enumerate().any(|(p, &m)| p != ed.pos && m == 0) {
        return None;
    }
    g.constraint(ed.con).forced_masks(ed.pos, masks)
}

/// One flooding iteration.
pub fn dtp_iterate(g: &FactorGraph, state: &mut TokenState) -> DtpStatus {
    if let Some(at) = state.halted_at {
        return DtpStatus::EmptyToken(at);
    }
    let mut first_empty: Option<DirectedEdge> = None;
    let mut changed = state.right.is_none();
    let new_left: Vec<Option<Token>> = match &state.right {
        Some(right) => (0..g.n_edges()).map(|e| left_update(g, right, e)).collect(),
        None => state.left.clone(),
    };
    if state.right.is_some() {
        if let Some(e) = new_left.iter().position(Option::is_none) {
            first_empty = Some(g.left_edge(e));
        }
    }
    let mut masks = Vec::new();
    let new_right: Vec<Option<Token>> = (0..g.n_edges()).map(|e| right_update(g, &new_left, e, &mut masks)).collect();
    if first_empty.is_none() {
        if let Some(e) = new_right.iter().position(Option::is_none) {
            first_empty = Some(g.right_edge(e));
        }
    }
    changed |= new_left != state.left || state.right.as_ref() != Some(&new_right);
    state.left = new_left;
    state.right = Some(new_right);
    state.iteration += 1;
    match first_empty {
        Some(at) => {
            if state.policy == EmptyPolicy::Halt {
                state.halted_at = Some(at);
            }
            DtpStatus::EmptyToken(at)
        }
        None if !changed => DtpStatus::FixedPoint,
        None => DtpStatus::Running,
    }
}

/// Per-coordinate summary tokens `t_v`, the intersection of every incoming
/// right message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtpSummary {
    pub tokens: Vec<Option<Token>>,
}

impl DtpSummary {
    /// Coordinates whose summary is empty.
    pub fn empty_coords(&self) -> Vec<usize> {
        self.tokens.iter().enumerate().filter(|(_, t)| t.is_none()).map(|(v, _)| v).collect()
    }

    /// The summary as a rectangle over every coordinate, or `None` when
    /// some summary is empty.
    pub fn rectangle(&self) -> Option<Rectangle> {
        let sides: Option<Vec<(usize, Token)>> =
            self.tokens.iter().enumerate().map(|(v, t)| t.map(|t| (v, t))).collect();
        sides.map(Rectangle::new)
    }

    /// Whether `x` lies in the product of the summary tokens.
    pub fn contains(&self, x: &[u8]) -> bool {
        self.tokens.iter().zip(x).all(|(t, &s)| t.is_some_and(|t| t.contains(s)))
    }
}

/// Summary tokens from the current right messages. Fails before the
/// first iteration.
pub fn dtp_summary(g: &FactorGraph, state: &TokenState) -> Result<DtpSummary> {
    let right =
        state.right.as_ref().ok_or_else(|| Error::InitError("summary requested before the first iteration".into()))?;
    let tokens =
        (0..g.n_vars()).map(|v| g.var_edges(v).iter().try_fold(g.full(), |acc, &b| acc.intersect(right[b]?))).collect();
    Ok(DtpSummary { tokens })
}

/// Runs until a fixed point, an empty token under [`EmptyPolicy::Halt`],
/// or `max_iters` iterations. Returns the last status.
pub fn run_dtp(g: &FactorGraph, state: &mut TokenState, max_iters: usize) -> DtpStatus {
    let mut status = DtpStatus::Running;
    for _ in 0..max_iters {
        status = dtp_iterate(g, state);
        match status {
            DtpStatus::FixedPoint => break,
            DtpStatus::EmptyToken(_) if state.policy == EmptyPolicy::Halt => break,
            _ => {}
        }
    }
    status
}

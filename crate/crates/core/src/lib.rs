//! Token-passing message engines for constraint satisfaction problems.
//!
//! The crate models a CSP as a factor graph over a uniform alphabet and
//! runs several families of message passing on it:
//!
//! * deterministic token passing ([`dtp`]), where messages are sets of
//!   symbols;
//! * probabilistic and weighted token passing ([`ptp`]), where messages are
//!   distributions over those sets;
//! * classical survey propagation for k-SAT and 3-coloring ([`sp`]);
//! * belief propagation on the normally realized Markov random field
//!   ([`mrf`]), with and without the state-decoupling restriction.
//!
//! [`equivalence`] runs these engines side by side and reports how far
//! their messages drift apart, [`solver`] uses any of them to drive
//! decimation, and [`trace`] records their messages iteration by
//! iteration.

pub mod dtp;
pub mod equivalence;
pub mod error;
pub mod fixtures;
pub mod forced;
pub mod gen;
pub mod graph;
pub mod io;
pub mod mrf;
pub mod ptp;
pub mod solver;
pub mod sp;
pub mod token;
pub mod trace;
pub mod tree;

pub use error::{Error, Result};
pub use forced::{
    compatibility_report, forceable_tokens, forced_token, is_locally_compatible, max_forceable, CompatReport,
    CompatWitness, DEFAULT_BUDGET,
};
pub use graph::{
    build_ksat, build_ksat_with, build_qcol, build_qcol_with, Constraint, DegreePolicy, EdgeId, FactorGraph, Family,
    Rectangle,
};
pub use token::{Alphabet, Token};

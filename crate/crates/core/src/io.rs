//! Text formats: DIMACS CNF, whitespace edge lists and the native JSON
//! instance format.
//!
//! DIMACS variables and edge-list vertices are 1-indexed in text and
//! 0-indexed in memory.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_ksat_with, build_qcol_with, Constraint, DegreePolicy, FactorGraph};

/// Parses DIMACS CNF under the strict degree policy.
pub fn parse_dimacs(text: &str) -> Result<FactorGraph> {
    parse_dimacs_with(text, DegreePolicy::Strict)
}

/// Parses DIMACS CNF. A positive literal `i` becomes preferred value 1 on
/// coordinate `i - 1`, a negative one preferred value 0.
pub fn parse_dimacs_with(text: &str, policy: DegreePolicy) -> Result<FactorGraph> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<Vec<(usize, u8)>> = Vec::new();
    let mut current: Vec<(usize, u8)> = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(Error::MalformedHeader(format!("second header on line {line_no}")));
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parsed = match parts.as_slice() {
                ["p", "cnf", n, m] => n.parse::<usize>().ok().zip(m.parse::<usize>().ok()),
                _ => None,
            };
            header = Some(parsed.ok_or_else(|| Error::MalformedHeader(line.to_string()))?);
            continue;
        }
        let (n, _) = header.ok_or_else(|| Error::MalformedHeader("clause before 'p cnf' header".into()))?;
        last_line = line_no;
        for tok in line.split_whitespace() {
            let lit: i64 =
                tok.parse().map_err(|_| Error::Parse { line: line_no, reason: format!("invalid literal {tok:?}") })?;
            if lit == 0 {
                clauses.push(std::mem::take(&mut current));
                continue;
            }
            let var = lit.unsigned_abs() as usize;
            if var > n {
                return Err(Error::Parse { line: line_no, reason: format!("variable {var} exceeds declared {n}") });
            }
            current.push((var - 1, u8::from(lit > 0)));
        }
    }
    let (n, m) = header.ok_or_else(|| Error::MalformedHeader("missing 'p cnf' header".into()))?;
    if !current.is_empty() {
        return Err(Error::Parse { line: last_line, reason: "clause is not terminated by 0".into() });
    }
    if clauses.len() != m {
        return Err(Error::MalformedHeader(format!("header declares {m} clauses, found {}", clauses.len())));
    }
    build_ksat_with(&clauses, n, policy)
}

/// Writes a k-SAT graph as DIMACS CNF.
pub fn write_dimacs(g: &FactorGraph) -> Result<String> {
    if !g.is_ksat() {
        return Err(Error::ParamError("DIMACS output needs a labelled k-SAT graph".into()));
    }
    let mut out = format!("p cnf {} {}\n", g.n_vars(), g.n_constraints());
    for c in 0..g.n_constraints() {
        for e in g.con_edges(c) {
            let ed = g.edge(e);
            let v = ed.var as i64 + 1;
            let lit = if g.label(e) == Some(1) { v } else { -v };
            out.push_str(&format!("{lit} "));
        }
        out.push_str("0\n");
    }
    Ok(out)
}

/// Parses an edge list under the strict degree policy.
pub fn parse_edge_list(text: &str, q: usize) -> Result<FactorGraph> {
    parse_edge_list_with(text, q, DegreePolicy::Strict)
}

/// Parses lines `u v` of 1-indexed vertices into a q-coloring graph. Lines
/// starting with `#` are comments. The vertex count is the largest index.
pub fn parse_edge_list_with(text: &str, q: usize, policy: DegreePolicy) -> Result<FactorGraph> {
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| Error::Parse { line: i + 1, reason };
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| bad(format!("invalid vertex {t:?}"))))
            .collect::<Result<_>>()?;
        match nums.as_slice() {
            [u, v] if *u >= 1 && *v >= 1 => edges.push((u - 1, v - 1)),
            _ => return Err(bad("expected two 1-indexed vertices".into())),
        }
    }
    if edges.is_empty() {
        return Err(Error::Parse { line: 0, reason: "no edges".into() });
    }
    let n = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    build_qcol_with(&edges, q, n, policy)
}

/// Writes the constraints of a binary graph as a 1-indexed edge list.
pub fn write_edge_list(g: &FactorGraph) -> Result<String> {
    if !g.is_qcol() {
        return Err(Error::ParamError("edge-list output needs a coloring graph".into()));
    }
    Ok(g.constraints().iter().map(|c| format!("{} {}\n", c.scope()[0] + 1, c.scope()[1] + 1)).collect())
}

/// Serialized form of a factor graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub q: usize,
    pub n_vars: usize,
    #[serde(default)]
    pub policy: DegreePolicy,
    pub constraints: Vec<ConstraintFile>,
    /// Per-constraint preferred values, present for k-SAT graphs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Vec<u8>>>,
}

/// Serialized form of one constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub scope: Vec<usize>,
    pub tuples: Vec<Vec<u8>>,
}

impl GraphFile {
    pub fn from_graph(g: &FactorGraph) -> GraphFile {
        GraphFile {
            q: g.q(),
            n_vars: g.n_vars(),
            policy: g.policy(),
            constraints: g
                .constraints()
                .iter()
                .map(|c| ConstraintFile { scope: c.scope().to_vec(), tuples: c.tuples().map(|t| t.to_vec()).collect() })
                .collect(),
            labels: g.labels_per_constraint(),
        }
    }

    pub fn into_graph(self) -> Result<FactorGraph> {
        let cs = self
            .constraints
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                Constraint::new(c.scope, c.tuples).map_err(|e| match e {
                    Error::MalformedConstraint { reason, .. } => Error::MalformedConstraint { index: i, reason },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let g = FactorGraph::new(self.q, self.n_vars, cs, self.policy)?;
        match self.labels {
            Some(l) => g.with_labels(l),
            None => Ok(g),
        }
    }
}

/// Native JSON text of a graph.
pub fn graph_to_json(g: &FactorGraph) -> Result<String> {
    to_json(&GraphFile::from_graph(g))
}

/// Parses native JSON into a graph, re-running every validation.
pub fn graph_from_json(text: &str) -> Result<FactorGraph> {
    from_json::<GraphFile>(text)?.into_graph()
}

/// Pretty JSON for any serializable value.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

/// Parses JSON into any deserializable value.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

/// Supported instance formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    DimacsCnf,
    EdgeList,
    NativeJson,
}

impl Format {
    /// Guesses a format from a file name: `.cnf` is DIMACS, `.json` native,
    /// anything else an edge list.
    pub fn from_path(path: &str) -> Format {
        if path.ends_with(".cnf") {
            Format::DimacsCnf
        } else if path.ends_with(".json") {
            Format::NativeJson
        } else {
            Format::EdgeList
        }
    }
}

/// Parses text in the given format. `q` applies to edge lists only.
pub fn parse_instance(text: &str, format: Format, q: usize, policy: DegreePolicy) -> Result<FactorGraph> {
    match format {
        Format::DimacsCnf => parse_dimacs_with(text, policy),
        Format::EdgeList => parse_edge_list_with(text, q, policy),
        Format::NativeJson => graph_from_json(text),
    }
}

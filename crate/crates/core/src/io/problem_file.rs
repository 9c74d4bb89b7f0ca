//! JSON problem files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{BlockKind, Resolution, Tolerances, DEFAULT_NT, DEFAULT_NX};
use crate::graph::{Edge, GraphError, MetricGraph, Vertex, VertexKind};
use crate::potentials::PipeParams;
use crate::problem::{BoundaryRegime, Coupling, DensityProfile, FluxProfile, ProblemError, Storage, TransportProblem};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Io,
    Syntax,
    Schema,
    UnknownId,
    ModeMismatch,
    Invalid,
}

impl ParseErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ParseErrorKind::Io => "io",
            ParseErrorKind::Syntax => "syntax",
            ParseErrorKind::Schema => "schema",
            ParseErrorKind::UnknownId => "unknown_id",
            ParseErrorKind::ModeMismatch => "mode_mismatch",
            ParseErrorKind::Invalid => "invalid",
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("cannot read `{}`: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema { line: usize, column: usize, message: String },
    #[error("{field}: unknown {what} id `{id}`")]
    UnknownId { field: String, what: &'static str, id: String },
    #[error("{field}: {reason}")]
    ModeMismatch { field: String, reason: String },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ParseError {
    pub fn kind(&self) -> ParseErrorKind {
        match self {
            ParseError::Io { .. } => ParseErrorKind::Io,
            ParseError::Syntax { .. } => ParseErrorKind::Syntax,
            ParseError::Schema { .. } => ParseErrorKind::Schema,
            ParseError::UnknownId { .. } => ParseErrorKind::UnknownId,
            ParseError::ModeMismatch { .. } => ParseErrorKind::ModeMismatch,
            ParseError::Invalid { .. } => ParseErrorKind::Invalid,
        }
    }

    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ParseError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn mismatch(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ParseError::ModeMismatch {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<serde_json::Error> for ParseError {
    fn from(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        let (line, column) = (e.line(), e.column());
        let message = e.to_string();
        // strip serde's own " at line N column M" suffix
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        match e.classify() {
            Category::Data => ParseError::Schema { line, column, message },
            Category::Io => ParseError::Io {
                path: PathBuf::new(),
                source: std::io::Error::other(message),
            },
            Category::Syntax | Category::Eof => ParseError::Syntax { line, column, message },
        }
    }
}

// On-disk shape.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileMeta {
    #[serde(rename = "T", default = "one")]
    horizon: f64,
    #[serde(rename = "Nt", default = "default_nt")]
    steps: usize,
    #[serde(default = "two")]
    p: f64,
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn default_nt() -> usize {
    DEFAULT_NT
}

fn default_nx() -> usize {
    DEFAULT_NX
}

impl Default for FileMeta {
    fn default() -> Self {
        FileMeta {
            horizon: 1.0,
            steps: DEFAULT_NT,
            p: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileVertex {
    id: String,
    kind: VertexKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEdge {
    id: String,
    from: String,
    to: String,
    length: f64,
    #[serde(rename = "Nx", default = "default_nx")]
    intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGraph {
    vertices: Vec<FileVertex>,
    edges: Vec<FileEdge>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEndpoint {
    #[serde(default)]
    edges: BTreeMap<String, DensityProfile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    vertices: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSteps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSolver {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "is_default_steps")]
    steps: FileSteps,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_every: Option<usize>,
}

fn is_default_steps(s: &FileSteps) -> bool {
    *s == FileSteps::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDocument {
    #[serde(default)]
    meta: FileMeta,
    graph: FileGraph,
    #[serde(default = "classical")]
    coupling: Coupling,
    #[serde(default = "no_boundary")]
    boundary: BoundaryRegime,
    #[serde(default)]
    initial: FileEndpoint,
    #[serde(rename = "final", default)]
    terminal: FileEndpoint,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    fluxes: BTreeMap<String, FluxProfile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    ti_totals: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solver: Option<FileSolver>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pipes: BTreeMap<String, PipeParams>,
}

fn classical() -> Coupling {
    Coupling::Classical
}

fn no_boundary() -> BoundaryRegime {
    BoundaryRegime::None
}

/// Solver settings carried by a problem file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverOverrides {
    pub max_iters: Option<usize>,
    pub rel_tol: Option<f64>,
    pub tolerances: Tolerances,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub step_ratio: Option<f64>,
    pub log_every: Option<usize>,
}

impl SolverOverrides {
    /// Defaults with these overrides applied.
    pub fn config(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        if let Some(v) = self.rel_tol {
            c.rel_tol = v;
        }
        if let Some(v) = self.step_ratio {
            c.step_ratio = v;
        }
        if let Some(v) = self.log_every {
            c.log_every = v;
        }
        c.tau = self.tau;
        c.sigma = self.sigma;
        c
    }
}

/// A parsed and validated problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub problem: TransportProblem,
    /// Spatial intervals per edge.
    pub intervals: Vec<usize>,
    pub steps: usize,
    pub solver: SolverOverrides,
    /// Pipe data per edge, when every edge has an entry.
    pub pipes: Option<Vec<PipeParams>>,
}

impl ProblemSpec {
    pub fn resolution(&self) -> Resolution {
        Resolution::PerEdge(self.intervals.clone())
    }
}

pub fn parse_problem(path: impl AsRef<Path>) -> Result<ProblemSpec, ParseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_problem_str(&text)
}

fn lookup(
    ids: &BTreeMap<String, usize>,
    field: String,
    what: &'static str,
    id: &str,
) -> Result<usize, ParseError> {
    ids.get(id).copied().ok_or(ParseError::UnknownId {
        field,
        what,
        id: id.to_string(),
    })
}

pub fn parse_problem_str(text: &str) -> Result<ProblemSpec, ParseError> {
    let doc: ProblemDocument = serde_json::from_str(text)?;

    let vertices = doc.graph.vertices.iter().map(|v| Vertex::new(v.id.clone(), v.kind)).collect();
    let edges = doc
        .graph
        .edges
        .iter()
        .map(|e| Edge::new(e.id.clone(), e.from.clone(), e.to.clone(), e.length))
        .collect();
    let graph = MetricGraph::new(vertices, edges).map_err(|e| match e {
        GraphError::UnknownVertex { edge, vertex } => ParseError::UnknownId {
            field: format!("graph.edges.{edge}"),
            what: "vertex",
            id: vertex,
        },
        other => ParseError::invalid("graph", other.to_string()),
    })?;
    let report = graph.validate();
    if !report.is_ok() {
        let text: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(ParseError::invalid("graph", text.join("; ")));
    }
    let edge_ids: BTreeMap<String, usize> = graph.edges().iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
    let vertex_ids: BTreeMap<String, usize> =
        graph.vertices().iter().enumerate().map(|(i, v)| (v.id.clone(), i)).collect();

    let mut problem = TransportProblem::new(graph);
    problem.horizon = doc.meta.horizon;
    problem.exponent = doc.meta.p;
    problem.coupling = doc.coupling;
    problem.boundary = doc.boundary;

    for (section, data, target) in [
        ("initial", &doc.initial, 0),
        ("final", &doc.terminal, 1),
    ] {
        for (id, profile) in &data.edges {
            let e = lookup(&edge_ids, format!("{section}.edges"), "edge", id)?;
            if target == 0 {
                problem.initial_density[e] = profile.clone();
            } else {
                problem.final_density[e] = profile.clone();
            }
        }
        for (id, &mass) in &data.vertices {
            let v = lookup(&vertex_ids, format!("{section}.vertices"), "vertex", id)?;
            if !problem.has_storage(v) {
                return Err(ParseError::mismatch(
                    format!("{section}.vertices.{id}"),
                    "vertex masses need generalized coupling at an interior vertex",
                ));
            }
            let s: &mut Storage = &mut problem.storage[v];
            if target == 0 {
                s.initial = mass;
            } else {
                s.terminal = mass;
            }
        }
    }

    if !doc.fluxes.is_empty() && doc.boundary != BoundaryRegime::TimeDependent {
        return Err(ParseError::mismatch("fluxes", "section needs boundary = \"time_dependent\""));
    }
    if !doc.ti_totals.is_empty() && doc.boundary != BoundaryRegime::TimeIndependent {
        return Err(ParseError::mismatch("ti_totals", "section needs boundary = \"time_independent\""));
    }
    for (id, flux) in &doc.fluxes {
        let v = lookup(&vertex_ids, "fluxes".into(), "vertex", id)?;
        if !problem.graph.vertices()[v].kind.is_boundary() {
            return Err(ParseError::mismatch(format!("fluxes.{id}"), "not a source or sink vertex"));
        }
        problem.boundary_flux[v] = Some(*flux);
    }
    for (id, &total) in &doc.ti_totals {
        let v = lookup(&vertex_ids, "ti_totals".into(), "vertex", id)?;
        if !problem.graph.vertices()[v].kind.is_boundary() {
            return Err(ParseError::mismatch(format!("ti_totals.{id}"), "not a source or sink vertex"));
        }
        problem.boundary_total[v] = Some(total);
    }

    problem.validate().map_err(|e| match e {
        ProblemError::ModeMismatch { regime, reason } => ParseError::mismatch(format!("boundary ({regime})"), reason),
        ProblemError::Invalid { field, reason } => ParseError::invalid(field, reason),
        ProblemError::Horizon(_) => ParseError::invalid("meta.T", e.to_string()),
        ProblemError::Exponent(_) => ParseError::invalid("meta.p", e.to_string()),
        other => ParseError::invalid("problem", other.to_string()),
    })?;

    if doc.meta.steps < 1 {
        return Err(ParseError::invalid("meta.Nt", "need at least 1 time step"));
    }
    let intervals: Vec<usize> = doc.graph.edges.iter().map(|e| e.intervals).collect();
    if let Some(e) = doc.graph.edges.iter().find(|e| e.intervals < 2) {
        return Err(ParseError::invalid(format!("graph.edges.{}.Nx", e.id), "need at least 2 intervals"));
    }

    let mut solver = SolverOverrides::default();
    if let Some(s) = &doc.solver {
        solver.max_iters = s.max_iters;
        solver.rel_tol = s.rel_tol;
        solver.tau = s.steps.tau;
        solver.sigma = s.steps.sigma;
        solver.step_ratio = s.steps.ratio;
        solver.log_every = s.log_every;
        for (name, &delta) in &s.tolerances {
            let kind = BlockKind::from_name(name).ok_or_else(|| ParseError::UnknownId {
                field: "solver.tolerances".into(),
                what: "constraint block",
                id: name.clone(),
            })?;
            if !(delta >= 0.0 && delta.is_finite()) {
                return Err(ParseError::invalid(format!("solver.tolerances.{name}"), "must be finite and >= 0"));
            }
            solver.tolerances = solver.tolerances.with(kind, delta);
        }
        for (field, v) in [("solver.steps.tau", s.steps.tau), ("solver.steps.sigma", s.steps.sigma), ("solver.steps.ratio", s.steps.ratio)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ParseError::invalid(field, "must be positive and finite"));
                }
            }
        }
    }

    let pipes = if doc.pipes.is_empty() {
        None
    } else {
        let mut slots: Vec<Option<PipeParams>> = vec![None; problem.graph.edge_count()];
        for (id, params) in &doc.pipes {
            let e = lookup(&edge_ids, "pipes".into(), "edge", id)?;
            params
                .validate()
                .map_err(|err| ParseError::invalid(format!("pipes.{id}"), err.to_string()))?;
            slots[e] = Some(*params);
        }
        if let Some(e) = slots.iter().position(Option::is_none) {
            return Err(ParseError::invalid(
                "pipes",
                format!("missing pipe data for edge `{}`", problem.graph.edges()[e].id),
            ));
        }
        Some(slots.into_iter().map(Option::unwrap).collect())
    };

    Ok(ProblemSpec {
        problem,
        intervals,
        steps: doc.meta.steps,
        solver,
        pipes,
    })
}

/// Canonical JSON for a problem; parsing the output gives back `spec`.
pub fn write_problem(spec: &ProblemSpec) -> String {
    let p = &spec.problem;
    let g = &p.graph;
    let mut initial = FileEndpoint::default();
    let mut terminal = FileEndpoint::default();
    for (e, edge) in g.edges().iter().enumerate() {
        initial.edges.insert(edge.id.clone(), p.initial_density[e].clone());
        terminal.edges.insert(edge.id.clone(), p.final_density[e].clone());
    }
    let mut fluxes = BTreeMap::new();
    let mut totals = BTreeMap::new();
    for (v, vertex) in g.vertices().iter().enumerate() {
        if p.has_storage(v) {
            initial.vertices.insert(vertex.id.clone(), p.storage[v].initial);
            terminal.vertices.insert(vertex.id.clone(), p.storage[v].terminal);
        }
        if !vertex.kind.is_boundary() {
            continue;
        }
        match p.boundary {
            BoundaryRegime::TimeDependent => {
                if let Some(f) = p.boundary_flux[v] {
                    fluxes.insert(vertex.id.clone(), f);
                }
            }
            BoundaryRegime::TimeIndependent => {
                if let Some(t) = p.boundary_total[v] {
                    totals.insert(vertex.id.clone(), t);
                }
            }
            BoundaryRegime::None => {}
        }
    }
    let s = &spec.solver;
    let tolerances: BTreeMap<String, f64> = BlockKind::ALL
        .into_iter()
        .filter_map(|k| s.tolerances.get(k).map(|d| (k.name().to_string(), d)))
        .collect();
    let file_solver = FileSolver {
        max_iters: s.max_iters,
        rel_tol: s.rel_tol,
        tolerances,
        steps: FileSteps {
            tau: s.tau,
            sigma: s.sigma,
            ratio: s.step_ratio,
        },
        log_every: s.log_every,
    };
    let doc = ProblemDocument {
        meta: FileMeta {
            horizon: p.horizon,
            steps: spec.steps,
            p: p.exponent,
        },
        graph: FileGraph {
            vertices: g
                .vertices()
                .iter()
                .map(|v| FileVertex {
                    id: v.id.clone(),
                    kind: v.kind,
                })
                .collect(),
            edges: g
                .edges()
                .iter()
                .zip(&spec.intervals)
                .map(|(e, &n)| FileEdge {
                    id: e.id.clone(),
                    from: e.start.clone(),
                    to: e.end.clone(),
                    length: e.length,
                    intervals: n,
                })
                .collect(),
        },
        coupling: p.coupling,
        boundary: p.boundary,
        initial,
        terminal,
        fluxes,
        ti_totals: totals,
        solver: (file_solver != FileSolver::default()).then_some(file_solver),
        pipes: spec
            .pipes
            .iter()
            .flat_map(|pipes| g.edges().iter().zip(pipes).map(|(e, p)| (e.id.clone(), *p)))
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("problem documents always serialize");
    out.push('\n');
    out
}

//! Oriented metric graphs.
//!
//! A [`MetricGraph`] is immutable once built. Vertices and edges keep their
//! declaration order, which is the canonical order used by every vector
//! layout downstream.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Role of a vertex in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    Interior,
    /// Gas enters the network here (supply).
    Source,
    /// Gas leaves the network here (demand).
    Sink,
}

impl VertexKind {
    pub fn is_boundary(self) -> bool {
        !matches!(self, VertexKind::Interior)
    }
}

impl fmt::Display for VertexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VertexKind::Interior => "interior",
            VertexKind::Source => "source",
            VertexKind::Sink => "sink",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: String,
    pub kind: VertexKind,
}

impl Vertex {
    pub fn new(id: impl Into<String>, kind: VertexKind) -> Self {
        Vertex {
            id: id.into(),
            kind,
        }
    }
}

/// A pipe, oriented from `start` to `end`, with local coordinate `x in [0, length]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub start: String,
    pub end: String,
    pub length: f64,
}

impl Edge {
    pub fn new(
        id: impl Into<String>,
        start: impl Into<String>,
        end: impl Into<String>,
        length: f64,
    ) -> Self {
        Edge {
            id: id.into(),
            start: start.into(),
            end: end.into(),
            length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge `{edge}` references unknown vertex id `{vertex}`")]
    UnknownVertex { edge: String, vertex: String },
    #[error("unknown vertex id `{0}`")]
    UnknownVertexQuery(String),
    #[error("unknown edge id `{0}`")]
    UnknownEdge(String),
}

/// One broken graph invariant, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TooFewEdges,
    TooFewVertices,
    DuplicateVertexId(String),
    DuplicateEdgeId(String),
    Loop { edge: String },
    NonPositiveLength { edge: String },
    Disconnected { unreachable: Vec<String> },
    ParallelEdges { first: String, second: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewEdges => write!(f, "graph needs at least one edge"),
            Violation::TooFewVertices => write!(f, "graph needs at least two vertices"),
            Violation::DuplicateVertexId(id) => write!(f, "duplicate vertex id `{id}`"),
            Violation::DuplicateEdgeId(id) => write!(f, "duplicate edge id `{id}`"),
            Violation::Loop { edge } => write!(f, "loop: edge `{edge}` starts and ends at the same vertex"),
            Violation::NonPositiveLength { edge } => {
                write!(f, "edge `{edge}` has non-positive length")
            }
            Violation::Disconnected { unreachable } => {
                write!(f, "disconnected: unreachable vertices {unreachable:?}")
            }
            Violation::ParallelEdges { first, second } => {
                write!(f, "parallel edges `{first}` and `{second}`")
            }
        }
    }
}

impl Violation {
    /// Short machine-readable tag, e.g. `"loop"` or `"disconnected"`.
    pub fn tag(&self) -> &'static str {
        match self {
            Violation::TooFewEdges => "too_few_edges",
            Violation::TooFewVertices => "too_few_vertices",
            Violation::DuplicateVertexId(_) => "duplicate_vertex",
            Violation::DuplicateEdgeId(_) => "duplicate_edge",
            Violation::Loop { .. } => "loop",
            Violation::NonPositiveLength { .. } => "non_positive_length",
            Violation::Disconnected { .. } => "disconnected",
            Violation::ParallelEdges { .. } => "parallel_edges",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Incoming and outgoing edge indices of a vertex.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Incidence {
    /// Edges whose end vertex is this vertex.
    pub incoming: Vec<usize>,
    /// Edges whose start vertex is this vertex.
    pub outgoing: Vec<usize>,
}

impl Incidence {
    pub fn degree(&self) -> usize {
        self.incoming.len() + self.outgoing.len()
    }
}

#[derive(Debug, Clone)]
pub struct MetricGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    vertex_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
    // (start, end) vertex indices per edge
    endpoints: Vec<(usize, usize)>,
    incidence: Vec<Incidence>,
}

impl PartialEq for MetricGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.edges == other.edges
    }
}

impl MetricGraph {
    /// Builds the graph. Only dangling vertex references are rejected here;
    /// everything else is reported by [`MetricGraph::validate`].
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut vertex_index = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            vertex_index.entry(v.id.clone()).or_insert(i);
        }
        let mut edge_index = HashMap::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            edge_index.entry(e.id.clone()).or_insert(i);
        }

        let lookup = |edge: &Edge, id: &str| {
            vertex_index
                .get(id)
                .copied()
                .ok_or_else(|| GraphError::UnknownVertex {
                    edge: edge.id.clone(),
                    vertex: id.to_string(),
                })
        };
        let mut endpoints = Vec::with_capacity(edges.len());
        let mut incidence = vec![Incidence::default(); vertices.len()];
        for (ei, e) in edges.iter().enumerate() {
            let s = lookup(e, &e.start)?;
            let t = lookup(e, &e.end)?;
            endpoints.push((s, t));
            incidence[s].outgoing.push(ei);
            incidence[t].incoming.push(ei);
        }

        Ok(MetricGraph {
            vertices,
            edges,
            vertex_index,
            edge_index,
            endpoints,
            incidence,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_position(&self, id: &str) -> Option<usize> {
        self.vertex_index.get(id).copied()
    }

    pub fn edge_position(&self, id: &str) -> Option<usize> {
        self.edge_index.get(id).copied()
    }

    /// Start and end vertex indices of edge `e`.
    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        self.endpoints[e]
    }

    /// Incidence by vertex index.
    pub fn incidence(&self, v: usize) -> &Incidence {
        &self.incidence[v]
    }

    /// Incoming/outgoing edge ids of the vertex with the given id.
    pub fn incident_edges(&self, vertex: &str) -> Result<(Vec<&str>, Vec<&str>), GraphError> {
        let v = self
            .vertex_position(vertex)
            .ok_or_else(|| GraphError::UnknownVertexQuery(vertex.to_string()))?;
        let inc = &self.incidence[v];
        let name = |&e: &usize| self.edges[e].id.as_str();
        Ok((
            inc.incoming.iter().map(name).collect(),
            inc.outgoing.iter().map(name).collect(),
        ))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incidence[v].degree()
    }

    pub fn vertices_of_kind(&self, kind: VertexKind) -> impl Iterator<Item = usize> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .filter(move |(_, v)| v.kind == kind)
            .map(|(i, _)| i)
    }

    pub fn has_boundary(&self) -> bool {
        self.vertices.iter().any(|v| v.kind.is_boundary())
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_inner(false)
    }

    /// [`validate`](Self::validate) plus the parallel-edge check.
    pub fn validate_simple(&self) -> ValidationReport {
        self.validate_inner(true)
    }

    fn validate_inner(&self, simple: bool) -> ValidationReport {
        let mut violations = Vec::new();
        if self.edges.is_empty() {
            violations.push(Violation::TooFewEdges);
        }
        if self.vertices.len() < 2 {
            violations.push(Violation::TooFewVertices);
        }

        let mut seen = HashSet::new();
        for v in &self.vertices {
            if !seen.insert(v.id.as_str()) {
                violations.push(Violation::DuplicateVertexId(v.id.clone()));
            }
        }
        let mut seen = HashSet::new();
        for e in &self.edges {
            if !seen.insert(e.id.as_str()) {
                violations.push(Violation::DuplicateEdgeId(e.id.clone()));
            }
        }

        for (ei, e) in self.edges.iter().enumerate() {
            let (s, t) = self.endpoints[ei];
            if s == t {
                violations.push(Violation::Loop { edge: e.id.clone() });
            }
            if !(e.length > 0.0) || !e.length.is_finite() {
                violations.push(Violation::NonPositiveLength { edge: e.id.clone() });
            }
        }

        if !self.vertices.is_empty() {
            let reached = self.reachable_from(0);
            let unreachable: Vec<String> = self
                .vertices
                .iter()
                .zip(&reached)
                .filter(|(_, r)| !**r)
                .map(|(v, _)| v.id.clone())
                .collect();
            if !unreachable.is_empty() {
                violations.push(Violation::Disconnected { unreachable });
            }
        }

        if simple {
            let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
            for (ei, &(s, t)) in self.endpoints.iter().enumerate() {
                let key = (s.min(t), s.max(t));
                if let Some(&first) = pairs.get(&key) {
                    violations.push(Violation::ParallelEdges {
                        first: self.edges[first].id.clone(),
                        second: self.edges[ei].id.clone(),
                    });
                } else {
                    pairs.insert(key, ei);
                }
            }
        }

        ValidationReport { violations }
    }

    fn reachable_from(&self, root: usize) -> Vec<bool> {
        let mut reached = vec![false; self.vertices.len()];
        let mut stack = vec![root];
        reached[root] = true;
        while let Some(v) = stack.pop() {
            let inc = &self.incidence[v];
            for &e in inc.incoming.iter().chain(&inc.outgoing) {
                let (s, t) = self.endpoints[e];
                for w in [s, t] {
                    if !reached[w] {
                        reached[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        reached
    }

    /// True iff the undirected skeleton is a tree: simple, connected, acyclic.
    pub fn is_simple_connected_acyclic(&self) -> bool {
        self.validate_simple().is_ok() && self.edges.len() + 1 == self.vertices.len()
    }
}

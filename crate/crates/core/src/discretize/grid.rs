use thiserror::Error;

use crate::problem::TransportProblem;

/// Default number of spatial intervals per edge.
pub const DEFAULT_NX: usize = 150;
/// Default number of time steps.
pub const DEFAULT_NT: usize = 75;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("edge `{edge}` needs at least 2 spatial intervals, got {intervals}")]
    TooFewIntervals { edge: String, intervals: usize },
    #[error("need at least 1 time step, got {0}")]
    TooFewSteps(usize),
    #[error("expected {expected} per-edge interval counts, got {got}")]
    WrongEdgeCount { expected: usize, got: usize },
}

/// Spatial resolution request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Uniform(usize),
    PerEdge(Vec<usize>),
}

/// Equidistant grid on one edge with composite trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGrid {
    pub intervals: usize,
    pub length: f64,
    pub dx: f64,
    pub weights: Vec<f64>,
}

impl EdgeGrid {
    fn new(length: f64, intervals: usize) -> Self {
        let dx = length / intervals as f64;
        EdgeGrid {
            intervals,
            length,
            dx,
            weights: trapezoid_weights(intervals, dx),
        }
    }

    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    /// Coordinate of node `i` (0-based).
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    /// Trapezoid integral of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Space-time grids for every edge plus the shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub edges: Vec<EdgeGrid>,
    pub steps: usize,
    pub horizon: f64,
    pub dt: f64,
    pub time_weights: Vec<f64>,
}

impl GridSpec {
    pub fn time_nodes(&self) -> usize {
        self.steps + 1
    }

    /// Time of node `k` (0-based).
    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

fn trapezoid_weights(intervals: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; intervals + 1];
    w[0] = 0.5 * h;
    w[intervals] = 0.5 * h;
    w
}

pub fn build_grid(problem: &TransportProblem, nx: &Resolution, nt: usize) -> Result<GridSpec, GridError> {
    let graph_edges = problem.graph.edges();
    let counts: Vec<usize> = match nx {
        Resolution::Uniform(n) => vec![*n; graph_edges.len()],
        Resolution::PerEdge(v) => {
            if v.len() != graph_edges.len() {
                return Err(GridError::WrongEdgeCount {
                    expected: graph_edges.len(),
                    got: v.len(),
                });
            }
            v.clone()
        }
    };
    if nt < 1 {
        return Err(GridError::TooFewSteps(nt));
    }
    let mut edges = Vec::with_capacity(graph_edges.len());
    for (edge, &n) in graph_edges.iter().zip(&counts) {
        if n < 2 {
            return Err(GridError::TooFewIntervals {
                edge: edge.id.clone(),
                intervals: n,
            });
        }
        edges.push(EdgeGrid::new(edge.length, n));
    }
    let dt = problem.horizon / nt as f64;
    Ok(GridSpec {
        edges,
        steps: nt,
        horizon: problem.horizon,
        dt,
        time_weights: trapezoid_weights(nt, dt),
    })
}

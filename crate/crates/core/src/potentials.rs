//! Edge slopes, the entropy derivative of the friction-dominated gas model,
//! and the interface-constant system that glues edge potentials at vertices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::MetricGraph;

pub const STANDARD_GRAVITY: f64 = 9.81;
pub const GAS_CONSTANT: f64 = 8.3;
const RANK_TOL: f64 = 1e-10;

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

fn default_gas_constant() -> f64 {
    GAS_CONSTANT
}

/// Physical pipe data of one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipeParams {
    pub friction: f64,
    /// Meters.
    pub diameter: f64,
    /// Radians in `[0, 2π]`.
    pub inclination: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default = "default_gas_constant")]
    pub gas_constant: f64,
    /// Kelvin.
    pub temperature: f64,
    pub compressibility: f64,
}

impl PipeParams {
    pub fn new(friction: f64, diameter: f64, inclination: f64) -> Self {
        PipeParams {
            friction,
            diameter,
            inclination,
            gravity: STANDARD_GRAVITY,
            gas_constant: GAS_CONSTANT,
            temperature: 288.15,
            compressibility: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        let bad = |field: &'static str, reason: &str| {
            Err(PotentialError::Param {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.friction > 0.0 && self.friction.is_finite()) {
            return bad("friction", "must be positive");
        }
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            return bad("diameter", "must be positive");
        }
        if !(0.0..=std::f64::consts::TAU).contains(&self.inclination) {
            return bad("inclination", "must lie in [0, 2π]");
        }
        if !self.gravity.is_finite() {
            return bad("gravity", "must be finite");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature", "must be positive");
        }
        if !(self.compressibility >= 0.0 && self.compressibility.is_finite()) {
            return bad("compressibility", "must be nonnegative");
        }
        if !self.gas_constant.is_finite() {
            return bad("gas_constant", "must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error("invalid pipe parameter `{field}`: {reason}")]
    Param { field: &'static str, reason: String },
    #[error("entropy derivative needs a positive density, got {0}")]
    NonPositiveDensity(f64),
    #[error("expected {expected} per-edge values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("the graph is not a simple tree, so the interface constants are not unique ({0})")]
    NotATree(RankDiagnostics),
    #[error("the interface system is singular")]
    Singular,
}

/// `c_e = 2 𝒟 g sin(ω) / λ`.
pub fn edge_slope(params: &PipeParams) -> Result<f64, PotentialError> {
    params.validate()?;
    Ok(2.0 * params.diameter * params.gravity * params.inclination.sin() / params.friction)
}

/// `F'(s) = (2 𝒟 R 𝒯 z / λ) ln s`, anchored at `F'(1) = 0`.
pub fn entropy_prime(params: &PipeParams, s: f64) -> Result<f64, PotentialError> {
    params.validate()?;
    if !(s > 0.0) {
        return Err(PotentialError::NonPositiveDensity(s));
    }
    let prefactor =
        2.0 * params.diameter * params.gas_constant * params.temperature * params.compressibility / params.friction;
    Ok(prefactor * s.ln())
}

/// Dense linear system over the unknowns `d_e` (edge order) then `Φ_ν`
/// (vertex order).
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub edges: usize,
    pub vertices: usize,
}

impl PotentialSystem {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn unknowns(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.unknowns()
    }

    pub fn diagnostics(&self) -> RankDiagnostics {
        let rank = self.matrix.rank(RANK_TOL);
        let mut aug = self.matrix.clone().insert_column(self.unknowns(), 0.0);
        aug.set_column(self.unknowns(), &self.rhs);
        let augmented_rank = aug.rank(RANK_TOL);
        RankDiagnostics {
            rows: self.rows(),
            unknowns: self.unknowns(),
            rank,
            consistent: rank == augmented_rank,
        }
    }

    /// Largest row residual relative to the largest right-hand side entry.
    pub fn relative_residual(&self, solution: &PotentialSolution) -> f64 {
        let x = DVector::from_iterator(
            self.unknowns(),
            solution.d.iter().chain(&solution.phi).copied(),
        );
        let r = &self.matrix * x - &self.rhs;
        r.amax() / self.rhs.amax().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDiagnostics {
    pub rows: usize,
    pub unknowns: usize,
    pub rank: usize,
    pub consistent: bool,
}

impl std::fmt::Display for RankDiagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} equations, {} unknowns, rank {}, {}",
            self.rows,
            self.unknowns,
            self.rank,
            if self.consistent { "consistent" } else { "inconsistent" }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSolution {
    pub d: Vec<f64>,
    pub phi: Vec<f64>,
}

fn check_lengths(graph: &MetricGraph, values: &[f64]) -> Result<(), PotentialError> {
    if values.len() != graph.edge_count() {
        return Err(PotentialError::Length {
            expected: graph.edge_count(),
            got: values.len(),
        });
    }
    Ok(())
}

/// Two rows per edge (`d_e = Φ_start`, `d_e + c_e L_e = Φ_end`) and `Σ d_e = 0`.
pub fn assemble_potential_system(
    graph: &MetricGraph,
    slopes: &[f64],
    lengths: &[f64],
) -> Result<PotentialSystem, PotentialError> {
    check_lengths(graph, slopes)?;
    check_lengths(graph, lengths)?;
    let ne = graph.edge_count();
    let nv = graph.vertex_count();
    let mut a = DMatrix::zeros(2 * ne + 1, ne + nv);
    let mut b = DVector::zeros(2 * ne + 1);
    for e in 0..ne {
        let (s, t) = graph.endpoints(e);
        a[(2 * e, e)] = 1.0;
        a[(2 * e, ne + s)] = -1.0;
        a[(2 * e + 1, e)] = 1.0;
        a[(2 * e + 1, ne + t)] = -1.0;
        b[2 * e + 1] = -slopes[e] * lengths[e];
        a[(2 * ne, e)] = 1.0;
    }
    Ok(PotentialSystem {
        matrix: a,
        rhs: b,
        edges: ne,
        vertices: nv,
    })
}

/// Unique interface constants on a simple tree; other graphs are refused.
pub fn solve_potential_system(
    graph: &MetricGraph,
    slopes: &[f64],
    lengths: &[f64],
) -> Result<PotentialSolution, PotentialError> {
    let system = assemble_potential_system(graph, slopes, lengths)?;
    if !graph.is_simple_connected_acyclic() {
        return Err(PotentialError::NotATree(system.diagnostics()));
    }
    let x = system
        .matrix
        .clone()
        .lu()
        .solve(&system.rhs)
        .ok_or(PotentialError::Singular)?;
    let ne = system.edges;
    Ok(PotentialSolution {
        d: x.iter().take(ne).copied().collect(),
        phi: x.iter().skip(ne).copied().collect(),
    })
}

/// Slopes from pipe data, then the interface constants.
pub fn potentials_from_pipes(graph: &MetricGraph, pipes: &[PipeParams]) -> Result<PotentialSolution, PotentialError> {
    if pipes.len() != graph.edge_count() {
        return Err(PotentialError::Length {
            expected: graph.edge_count(),
            got: pipes.len(),
        });
    }
    let slopes = pipes.iter().map(edge_slope).collect::<Result<Vec<_>, _>>()?;
    let lengths: Vec<f64> = graph.edges().iter().map(|e| e.length).collect();
    solve_potential_system(graph, &slopes, &lengths)
}

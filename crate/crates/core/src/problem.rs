//! Transport problem instances and the mass-balance audits that can be run
//! on the continuous data before anything is discretized.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{MetricGraph, VertexKind, Violation};

/// Relative tolerance used by [`TransportProblem::check_gmc`].
pub const GMC_REL_TOL: f64 = 1e-10;

/// Number of time samples used for the running demand bound.
pub const DEMAND_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DensityShape {
    Constant { value: f64 },
    /// `height` on `[a, b]`, zero elsewhere.
    Indicator { a: f64, b: f64, height: f64 },
    /// `scale * exp(-(x - center)^2 / width^2)`, truncated to the edge.
    Gaussian { center: f64, width: f64, scale: f64 },
    /// Values at equispaced points covering `[0, L]`, linearly interpolated.
    Samples { values: Vec<f64> },
}

/// Initial or final mass density on one edge.
///
/// When `normalize_to` is set the shape is rescaled so that its integral
/// over the edge equals that target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    #[serde(flatten)]
    pub shape: DensityShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize_to: Option<f64>,
}

impl From<DensityShape> for DensityProfile {
    fn from(shape: DensityShape) -> Self {
        DensityProfile {
            shape,
            normalize_to: None,
        }
    }
}

impl DensityProfile {
    pub fn zero() -> Self {
        DensityShape::Constant { value: 0.0 }.into()
    }

    pub fn constant(value: f64) -> Self {
        DensityShape::Constant { value }.into()
    }

    pub fn indicator(a: f64, b: f64, height: f64) -> Self {
        DensityShape::Indicator { a, b, height }.into()
    }

    pub fn gaussian(center: f64, width: f64, scale: f64) -> Self {
        DensityShape::Gaussian {
            center,
            width,
            scale,
        }
        .into()
    }

    pub fn normalized(mut self, mass: f64) -> Self {
        self.normalize_to = Some(mass);
        self
    }

    fn raw_value(&self, x: f64, length: f64) -> f64 {
        match &self.shape {
            DensityShape::Constant { value } => *value,
            DensityShape::Indicator { a, b, height } => {
                // closed interval, with slack for node coordinates like (i-1)*L/N
                let eps = 1e-12 * length.max(1.0);
                if x >= a - eps && x <= b + eps {
                    *height
                } else {
                    0.0
                }
            }
            DensityShape::Gaussian {
                center,
                width,
                scale,
            } => {
                let z = (x - center) / width;
                scale * (-z * z).exp()
            }
            DensityShape::Samples { values } => {
                let n = values.len() - 1;
                let s = (x / length).clamp(0.0, 1.0) * n as f64;
                let i = (s.floor() as usize).min(n - 1);
                let frac = s - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        }
    }

    fn raw_mass(&self, length: f64) -> f64 {
        match &self.shape {
            DensityShape::Constant { value } => value * length,
            DensityShape::Indicator { a, b, height } => height * (b - a),
            DensityShape::Gaussian {
                center,
                width,
                scale,
            } => {
                let hi = libm::erf((length - center) / width);
                let lo = libm::erf(-center / width);
                scale * width * std::f64::consts::PI.sqrt() * 0.5 * (hi - lo)
            }
            DensityShape::Samples { values } => {
                let h = length / (values.len() - 1) as f64;
                let inner: f64 = values[1..values.len() - 1].iter().sum();
                h * (inner + 0.5 * (values[0] + values[values.len() - 1]))
            }
        }
    }

    fn factor(&self, length: f64) -> f64 {
        match self.normalize_to {
            Some(target) => {
                let raw = self.raw_mass(length);
                if raw > 0.0 {
                    target / raw
                } else {
                    0.0
                }
            }
            None => 1.0,
        }
    }

    /// Density value at `x` on an edge of the given length.
    pub fn value(&self, x: f64, length: f64) -> f64 {
        self.raw_value(x, length) * self.factor(length)
    }

    /// Exact integral over `[0, length]`.
    pub fn mass(&self, length: f64) -> f64 {
        match self.normalize_to {
            Some(target) => target,
            None => self.raw_mass(length),
        }
    }

    fn check(&self, length: f64) -> Result<(), String> {
        let finite = |v: f64| v.is_finite();
        match &self.shape {
            DensityShape::Constant { value } => {
                if !finite(*value) || *value < 0.0 {
                    return Err(format!("constant density {value} must be finite and >= 0"));
                }
            }
            DensityShape::Indicator { a, b, height } => {
                if !(0.0 <= *a && a < b && *b <= length) {
                    return Err(format!("indicator needs 0 <= a < b <= L, got a={a}, b={b}, L={length}"));
                }
                if !finite(*height) || *height < 0.0 {
                    return Err(format!("indicator height {height} must be finite and >= 0"));
                }
            }
            DensityShape::Gaussian {
                center,
                width,
                scale,
            } => {
                if !finite(*center) || !(*width > 0.0) || !finite(*width) {
                    return Err("gaussian needs a finite center and width > 0".into());
                }
                if !finite(*scale) || *scale < 0.0 {
                    return Err(format!("gaussian scale {scale} must be finite and >= 0"));
                }
            }
            DensityShape::Samples { values } => {
                if values.len() < 2 {
                    return Err("sampled density needs at least two values".into());
                }
                if values.iter().any(|v| !finite(*v) || *v < 0.0) {
                    return Err("sampled density values must be finite and >= 0".into());
                }
            }
        }
        if let Some(target) = self.normalize_to {
            if !finite(target) || target < 0.0 {
                return Err(format!("normalization target {target} must be finite and >= 0"));
            }
            if target > 0.0 && self.raw_mass(length) <= 0.0 {
                return Err("cannot normalize a profile with zero mass".into());
            }
        }
        Ok(())
    }
}

/// Magnitude of a boundary flux as a function of time.
///
/// Files store magnitudes; a source flux is `-magnitude(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FluxProfile {
    Zero,
    Constant { value: f64 },
    /// `slope * t`.
    Linear { slope: f64 },
}

impl FluxProfile {
    pub fn magnitude(&self, t: f64) -> f64 {
        match *self {
            FluxProfile::Zero => 0.0,
            FluxProfile::Constant { value } => value,
            FluxProfile::Linear { slope } => slope * t,
        }
    }

    /// `∫_a^b magnitude(t) dt`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match *self {
            FluxProfile::Zero => 0.0,
            FluxProfile::Constant { value } => value * (b - a),
            FluxProfile::Linear { slope } => 0.5 * slope * (b * b - a * a),
        }
    }

    fn check(&self) -> Result<(), String> {
        let ok = match *self {
            FluxProfile::Zero => true,
            FluxProfile::Constant { value } => value.is_finite() && value >= 0.0,
            FluxProfile::Linear { slope } => slope.is_finite() && slope >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("flux magnitude {self:?} must be finite and >= 0 on [0, T]"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Kirchhoff's law without vertex storage.
    Classical,
    /// Vertex storage `γ` driven by the excess flux `f`.
    Generalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRegime {
    None,
    TimeDependent,
    TimeIndependent,
}

impl fmt::Display for BoundaryRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryRegime::None => "none",
            BoundaryRegime::TimeDependent => "time_dependent",
            BoundaryRegime::TimeIndependent => "time_independent",
        })
    }
}

/// Initial and final storage at an interior vertex.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Storage {
    pub initial: f64,
    pub terminal: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("invalid graph: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Graph(Vec<Violation>),
    #[error("horizon T must be finite and > 0, got {0}")]
    Horizon(f64),
    #[error("exponent p must be >= 1, got {0}")]
    Exponent(f64),
    #[error("boundary regime `{regime}` is inconsistent with the graph: {reason}")]
    ModeMismatch { regime: BoundaryRegime, reason: String },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("vertex `{0}` is not a boundary vertex")]
    NotBoundary(String),
    #[error("operation requires time-dependent boundary data")]
    NotTimeDependent,
    #[error("operation requires boundary vertices")]
    NoBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Initial,
    Final,
}

/// The terms of the total mass `Σ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MassBreakdown {
    /// `Σ_e ∫ ρ_e`.
    pub edges: f64,
    /// `Σ γ_ν` over interior vertices (generalized coupling only).
    pub storage: f64,
    /// `Σ S_ν`: supply that has not entered yet.
    pub supply: f64,
    /// `Σ D_ν`: demand already delivered.
    pub demand: f64,
}

impl MassBreakdown {
    pub fn total(&self) -> f64 {
        self.edges + self.storage + self.supply + self.demand
    }

    /// Gas inside the network: pipes plus vertex storage.
    pub fn network(&self) -> f64 {
        self.edges + self.storage
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmcReport {
    /// Initial network mass plus everything supplied over `[0, T]`.
    pub lhs: f64,
    /// Final network mass plus everything delivered over `[0, T]`.
    pub rhs: f64,
    pub balanced: bool,
    /// `|lhs - rhs|`.
    pub slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandReport {
    pub bound: f64,
    pub demand: f64,
    pub feasible: bool,
    /// First sampled time at which the running bound fails (time-dependent data only).
    pub first_violation: Option<f64>,
}

/// A dynamic transport problem on a metric graph.
///
/// Per-edge data is indexed like `graph.edges()`, per-vertex data like
/// `graph.vertices()`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    pub graph: MetricGraph,
    pub horizon: f64,
    pub exponent: f64,
    pub coupling: Coupling,
    pub boundary: BoundaryRegime,
    pub initial_density: Vec<DensityProfile>,
    pub final_density: Vec<DensityProfile>,
    /// Used for interior vertices under generalized coupling.
    pub storage: Vec<Storage>,
    /// Time-dependent regime: flux magnitude per boundary vertex.
    pub boundary_flux: Vec<Option<FluxProfile>>,
    /// Time-independent regime: `|S_ν^G|` or `D_ν^G` per boundary vertex.
    pub boundary_total: Vec<Option<f64>>,
}

impl TransportProblem {
    /// Problem with `T = 1`, `p = 2`, classical coupling, no boundary and zero data.
    pub fn new(graph: MetricGraph) -> Self {
        let m = graph.edge_count();
        let n = graph.vertex_count();
        TransportProblem {
            graph,
            horizon: 1.0,
            exponent: 2.0,
            coupling: Coupling::Classical,
            boundary: BoundaryRegime::None,
            initial_density: vec![DensityProfile::zero(); m],
            final_density: vec![DensityProfile::zero(); m],
            storage: vec![Storage::default(); n],
            boundary_flux: vec![None; n],
            boundary_total: vec![None; n],
        }
    }

    fn edge(&self, id: &str) -> Result<usize, ProblemError> {
        self.graph
            .edge_position(id)
            .ok_or_else(|| ProblemError::UnknownId(id.to_string()))
    }

    fn vertex(&self, id: &str) -> Result<usize, ProblemError> {
        self.graph
            .vertex_position(id)
            .ok_or_else(|| ProblemError::UnknownId(id.to_string()))
    }

    pub fn set_densities(
        &mut self,
        edge: &str,
        initial: DensityProfile,
        terminal: DensityProfile,
    ) -> Result<&mut Self, ProblemError> {
        let e = self.edge(edge)?;
        self.initial_density[e] = initial;
        self.final_density[e] = terminal;
        Ok(self)
    }

    pub fn set_storage(&mut self, vertex: &str, initial: f64, terminal: f64) -> Result<&mut Self, ProblemError> {
        let v = self.vertex(vertex)?;
        self.storage[v] = Storage { initial, terminal };
        Ok(self)
    }

    pub fn set_flux(&mut self, vertex: &str, flux: FluxProfile) -> Result<&mut Self, ProblemError> {
        let v = self.vertex(vertex)?;
        self.boundary_flux[v] = Some(flux);
        Ok(self)
    }

    pub fn set_total(&mut self, vertex: &str, total: f64) -> Result<&mut Self, ProblemError> {
        let v = self.vertex(vertex)?;
        self.boundary_total[v] = Some(total);
        Ok(self)
    }

    /// Whether vertex `v` carries a storage series in the unknowns.
    pub fn has_storage(&self, v: usize) -> bool {
        self.coupling == Coupling::Generalized
            && self.graph.vertices()[v].kind == VertexKind::Interior
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let report = self.graph.validate();
        if !report.is_ok() {
            return Err(ProblemError::Graph(report.violations));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(ProblemError::Horizon(self.horizon));
        }
        if !(self.exponent >= 1.0) || !self.exponent.is_finite() {
            return Err(ProblemError::Exponent(self.exponent));
        }

        let m = self.graph.edge_count();
        let n = self.graph.vertex_count();
        let sized = self.initial_density.len() == m
            && self.final_density.len() == m
            && self.storage.len() == n
            && self.boundary_flux.len() == n
            && self.boundary_total.len() == n;
        if !sized {
            return Err(ProblemError::Invalid {
                field: "problem".into(),
                reason: "data vectors do not match the graph size".into(),
            });
        }

        let has_boundary = self.graph.has_boundary();
        match (self.boundary, has_boundary) {
            (BoundaryRegime::None, true) => {
                return Err(ProblemError::ModeMismatch {
                    regime: self.boundary,
                    reason: "graph has source/sink vertices".into(),
                })
            }
            (BoundaryRegime::TimeDependent | BoundaryRegime::TimeIndependent, false) => {
                return Err(ProblemError::ModeMismatch {
                    regime: self.boundary,
                    reason: "graph has no source/sink vertices".into(),
                })
            }
            _ => {}
        }

        for (e, edge) in self.graph.edges().iter().enumerate() {
            for (which, profile) in [("initial", &self.initial_density[e]), ("final", &self.final_density[e])] {
                profile.check(edge.length).map_err(|reason| ProblemError::Invalid {
                    field: format!("{which}.edges.{}", edge.id),
                    reason,
                })?;
            }
        }

        for (v, vertex) in self.graph.vertices().iter().enumerate() {
            if self.has_storage(v) {
                let s = self.storage[v];
                if !(s.initial >= 0.0 && s.terminal >= 0.0 && s.initial.is_finite() && s.terminal.is_finite()) {
                    return Err(ProblemError::Invalid {
                        field: format!("vertices.{}", vertex.id),
                        reason: "storage endpoints must be finite and >= 0".into(),
                    });
                }
            }
            if !vertex.kind.is_boundary() {
                continue;
            }
            match self.boundary {
                BoundaryRegime::TimeDependent => match self.boundary_flux[v] {
                    Some(flux) => flux.check().map_err(|reason| ProblemError::Invalid {
                        field: format!("fluxes.{}", vertex.id),
                        reason,
                    })?,
                    None => {
                        return Err(ProblemError::ModeMismatch {
                            regime: self.boundary,
                            reason: format!("missing flux profile for boundary vertex `{}`", vertex.id),
                        })
                    }
                },
                BoundaryRegime::TimeIndependent => match self.boundary_total[v] {
                    Some(total) if total >= 0.0 && total.is_finite() => {}
                    Some(total) => {
                        return Err(ProblemError::Invalid {
                            field: format!("ti_totals.{}", vertex.id),
                            reason: format!("total {total} must be finite and >= 0"),
                        })
                    }
                    None => {
                        return Err(ProblemError::ModeMismatch {
                            regime: self.boundary,
                            reason: format!("missing total for boundary vertex `{}`", vertex.id),
                        })
                    }
                },
                BoundaryRegime::None => {}
            }
        }
        Ok(())
    }

    fn boundary_vertices(&self, kind: VertexKind) -> impl Iterator<Item = usize> + '_ {
        self.graph.vertices_of_kind(kind)
    }

    /// Remaining supply `S_ν(t)` (sources) or delivered demand `D_ν(t)` (sinks),
    /// from time-dependent data.
    pub fn boundary_mass_profile(&self, vertex: &str, t: f64) -> Result<f64, ProblemError> {
        let v = self.vertex(vertex)?;
        self.boundary_mass_at(v, t)
    }

    pub(crate) fn boundary_mass_at(&self, v: usize, t: f64) -> Result<f64, ProblemError> {
        let kind = self.graph.vertices()[v].kind;
        if !kind.is_boundary() {
            return Err(ProblemError::NotBoundary(self.graph.vertices()[v].id.clone()));
        }
        if self.boundary == BoundaryRegime::None {
            return Err(ProblemError::NoBoundary);
        }
        if self.boundary != BoundaryRegime::TimeDependent {
            return Err(ProblemError::NotTimeDependent);
        }
        let flux = self.boundary_flux[v].unwrap_or(FluxProfile::Zero);
        Ok(match kind {
            VertexKind::Source => flux.integral(t, self.horizon),
            _ => flux.integral(0.0, t),
        })
    }

    /// Total supply `|S| = Σ |S_ν^G|` over the horizon.
    pub fn total_supply(&self) -> f64 {
        self.boundary_vertices(VertexKind::Source)
            .map(|v| self.boundary_amount(v))
            .sum()
    }

    /// Total demand `D = Σ D_ν^G` over the horizon.
    pub fn total_demand(&self) -> f64 {
        self.boundary_vertices(VertexKind::Sink)
            .map(|v| self.boundary_amount(v))
            .sum()
    }

    /// `|S_ν^G|` or `D_ν^G` for a boundary vertex.
    pub(crate) fn boundary_amount(&self, v: usize) -> f64 {
        match self.boundary {
            BoundaryRegime::None => 0.0,
            BoundaryRegime::TimeDependent => self.boundary_flux[v]
                .map(|f| f.integral(0.0, self.horizon))
                .unwrap_or(0.0),
            BoundaryRegime::TimeIndependent => self.boundary_total[v].unwrap_or(0.0),
        }
    }

    fn edge_mass(&self, which: Endpoint) -> f64 {
        let profiles = match which {
            Endpoint::Initial => &self.initial_density,
            Endpoint::Final => &self.final_density,
        };
        self.graph
            .edges()
            .iter()
            .zip(profiles)
            .map(|(e, p)| p.mass(e.length))
            .sum()
    }

    fn storage_mass(&self, which: Endpoint) -> f64 {
        (0..self.graph.vertex_count())
            .filter(|&v| self.has_storage(v))
            .map(|v| match which {
                Endpoint::Initial => self.storage[v].initial,
                Endpoint::Final => self.storage[v].terminal,
            })
            .sum()
    }

    /// `Σ(0)` or `Σ(T)` split into its terms; only the terms the mode uses are nonzero.
    pub fn total_mass(&self, which: Endpoint) -> MassBreakdown {
        let (supply, demand) = match which {
            Endpoint::Initial => (self.total_supply(), 0.0),
            Endpoint::Final => (0.0, self.total_demand()),
        };
        MassBreakdown {
            edges: self.edge_mass(which),
            storage: self.storage_mass(which),
            supply,
            demand,
        }
    }

    /// Global mass conservation evaluated at `t = T`.
    pub fn check_gmc(&self) -> GmcReport {
        let lhs = self.storage_mass(Endpoint::Initial) + self.total_supply() + self.edge_mass(Endpoint::Initial);
        let rhs = self.storage_mass(Endpoint::Final) + self.total_demand() + self.edge_mass(Endpoint::Final);
        let slack = (lhs - rhs).abs();
        GmcReport {
            lhs,
            rhs,
            balanced: slack <= GMC_REL_TOL * lhs.max(1.0),
            slack,
        }
    }

    /// Upper bound on the accumulated demand, plus the running bound for
    /// time-dependent data.
    pub fn check_demand_bound(&self) -> Result<DemandReport, ProblemError> {
        if self.boundary == BoundaryRegime::None {
            return Err(ProblemError::NoBoundary);
        }
        let initial_network = self.storage_mass(Endpoint::Initial) + self.edge_mass(Endpoint::Initial);
        let bound = initial_network + self.total_supply();
        let demand = self.total_demand();
        let tol = GMC_REL_TOL * bound.max(1.0);
        let mut feasible = bound + tol >= demand;

        let mut first_violation = None;
        if self.boundary == BoundaryRegime::TimeDependent {
            for n in 0..DEMAND_SAMPLES {
                let t = self.horizon * n as f64 / (DEMAND_SAMPLES - 1) as f64;
                let supplied: f64 = self
                    .boundary_vertices(VertexKind::Source)
                    .map(|v| self.boundary_flux[v].map_or(0.0, |f| f.integral(0.0, t)))
                    .sum();
                let delivered: f64 = self
                    .boundary_vertices(VertexKind::Sink)
                    .map(|v| self.boundary_flux[v].map_or(0.0, |f| f.integral(0.0, t)))
                    .sum();
                if initial_network + supplied + tol < delivered {
                    first_violation = Some(t);
                    feasible = false;
                    break;
                }
            }
        }

        Ok(DemandReport {
            bound,
            demand,
            feasible,
            first_violation,
        })
    }
}

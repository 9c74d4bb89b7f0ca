//! The relaxed linear constraint set `{u : ‖A_j u − b_j‖ ≤ δ_j}`.
//!
//! Every row is pre-multiplied by the square root of its quadrature weight,
//! so the Euclidean norm of a block residual is the weighted discrete norm
//! that the tolerances refer to. The mass block is left unweighted.

use std::fmt;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::grid::GridSpec;
use super::layout::{DimensionMismatch, Layout, PrimalVector, SlotKind};
use super::sparse::CsrMatrix;
use crate::graph::VertexKind;
use crate::problem::{BoundaryRegime, TransportProblem};

/// Default per-block tolerance is this times `sqrt(rows)`.
pub const DEFAULT_DELTA_SCALE: f64 = 1e-4;
pub const DEFAULT_NORM_ITERATIONS: usize = 100;
pub const DEFAULT_NORM_SEED: u64 = 0x6772_6964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Continuity,
    EdgeInitial,
    EdgeFinal,
    VertexInitial,
    VertexFinal,
    Coupling,
    VertexOde,
    Mass,
}

impl BlockKind {
    pub const ALL: [BlockKind; 8] = [
        BlockKind::Continuity,
        BlockKind::EdgeInitial,
        BlockKind::EdgeFinal,
        BlockKind::VertexInitial,
        BlockKind::VertexFinal,
        BlockKind::Coupling,
        BlockKind::VertexOde,
        BlockKind::Mass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Continuity => "continuity",
            BlockKind::EdgeInitial => "edge_initial",
            BlockKind::EdgeFinal => "edge_final",
            BlockKind::VertexInitial => "vertex_initial",
            BlockKind::VertexFinal => "vertex_final",
            BlockKind::Coupling => "coupling",
            BlockKind::VertexOde => "vertex_ode",
            BlockKind::Mass => "mass",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<BlockKind> {
        BlockKind::ALL.into_iter().find(|b| b.name() == name)
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-block tolerance overrides; unset blocks use `1e-4 * sqrt(rows)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tolerances(pub [Option<f64>; 8]);

impl Tolerances {
    pub fn with(mut self, block: BlockKind, delta: f64) -> Self {
        self.0[block.index()] = Some(delta);
        self
    }

    pub fn get(&self, block: BlockKind) -> Option<f64> {
        self.0[block.index()]
    }

    fn resolve(&self, block: BlockKind, rows: usize) -> f64 {
        self.get(block)
            .unwrap_or(DEFAULT_DELTA_SCALE * (rows as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub kind: BlockKind,
    pub rows: Range<usize>,
    pub delta: f64,
}

impl Block {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("boundary regime `{regime}` needs data for vertex `{vertex}`")]
    MissingBoundaryData { regime: BoundaryRegime, vertex: String },
    #[error("boundary regime `{0}` requires boundary vertices")]
    NoBoundaryVertices(BoundaryRegime),
    #[error("graph has boundary vertices but boundary regime is `none`")]
    UnexpectedBoundary,
    #[error("grid does not match the problem graph")]
    GridMismatch,
    #[error("negative tolerance {delta} for block `{block}`")]
    NegativeTolerance { block: BlockKind, delta: f64 },
}

/// Initial and final samples on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointData {
    /// Per edge, the sampled `ρ_0` at each spatial node.
    pub initial: Vec<Vec<f64>>,
    pub terminal: Vec<Vec<f64>>,
    /// Per layout slot, the prescribed `(initial, final)` mass.
    pub slots: Vec<(f64, f64)>,
}

/// Samples the endpoint densities and rescales each sampled row so its
/// trapezoid mass equals the analytic mass of the profile.
pub fn sample_endpoint_data(problem: &TransportProblem, grid: &GridSpec) -> EndpointData {
    let layout = Layout::new(problem, grid);
    sample_with_layout(problem, grid, &layout)
}

fn sample_with_layout(problem: &TransportProblem, grid: &GridSpec, layout: &Layout) -> EndpointData {
    let sample = |profiles: &[crate::problem::DensityProfile]| -> Vec<Vec<f64>> {
        grid.edges
            .iter()
            .zip(profiles)
            .map(|(eg, profile)| {
                let mut row: Vec<f64> = (0..eg.nodes()).map(|i| profile.value(eg.x(i), eg.length)).collect();
                let raw = eg.integrate(&row);
                let exact = profile.mass(eg.length);
                if raw > 0.0 {
                    let scale = exact / raw;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                row
            })
            .collect()
    };
    let slots = layout
        .slots
        .iter()
        .map(|s| match s.kind {
            SlotKind::Storage => {
                let st = problem.storage[s.vertex];
                (st.initial, st.terminal)
            }
            SlotKind::Supply => (problem.boundary_amount(s.vertex), 0.0),
            SlotKind::Demand => (0.0, problem.boundary_amount(s.vertex)),
        })
        .collect();
    EndpointData {
        initial: sample(&problem.initial_density),
        terminal: sample(&problem.final_density),
        slots,
    }
}

/// The stacked operator `A`, right-hand side `b`, block tolerances and the
/// diagonal inner-product weights `W` on the unknowns.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub layout: Layout,
    pub endpoints: EndpointData,
    matrix: CsrMatrix,
    transpose: CsrMatrix,
    rhs: Vec<f64>,
    blocks: Vec<Block>,
    weights: Vec<f64>,
    inv_weights: Vec<f64>,
}

struct Assembler {
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    scratch: Vec<(usize, f64)>,
}

impl Assembler {
    fn row(&mut self, scale: f64, entries: &[(usize, f64)], rhs: f64) {
        self.scratch.extend(entries.iter().map(|&(c, v)| (c, v * scale)));
        self.matrix.push_row(&mut self.scratch);
        self.rhs.push(rhs * scale);
    }

    fn rows(&self) -> usize {
        self.rhs.len()
    }
}

pub fn assemble_constraints(
    problem: &TransportProblem,
    grid: &GridSpec,
    tolerances: &Tolerances,
) -> Result<ConstraintSystem, AssemblyError> {
    let graph = &problem.graph;
    if grid.edges.len() != graph.edge_count() {
        return Err(AssemblyError::GridMismatch);
    }
    match (problem.boundary, graph.has_boundary()) {
        (BoundaryRegime::None, true) => return Err(AssemblyError::UnexpectedBoundary),
        (BoundaryRegime::None, false) => {}
        (regime, false) => return Err(AssemblyError::NoBoundaryVertices(regime)),
        (regime, true) => {
            for v in 0..graph.vertex_count() {
                let vert = &graph.vertices()[v];
                let has = match regime {
                    BoundaryRegime::TimeDependent => problem.boundary_flux[v].is_some(),
                    _ => problem.boundary_total[v].is_some(),
                };
                if vert.kind.is_boundary() && !has {
                    return Err(AssemblyError::MissingBoundaryData {
                        regime,
                        vertex: vert.id.clone(),
                    });
                }
            }
        }
    }
    for kind in BlockKind::ALL {
        if let Some(d) = tolerances.get(kind) {
            if d < 0.0 || d.is_nan() {
                return Err(AssemblyError::NegativeTolerance { block: kind, delta: d });
            }
        }
    }

    let layout = Layout::new(problem, grid);
    let endpoints = sample_with_layout(problem, grid, &layout);
    let nt = grid.time_nodes();
    let dt = grid.dt;
    let wt = &grid.time_weights;

    let mut asm = Assembler {
        matrix: CsrMatrix::new(layout.len()),
        rhs: Vec::new(),
        scratch: Vec::new(),
    };
    let mut ranges = Vec::with_capacity(8);
    let mut begin = 0;
    let mut close = |asm: &Assembler, ranges: &mut Vec<Range<usize>>| {
        ranges.push(begin..asm.rows());
        begin = asm.rows();
    };

    // continuity: backward in time, centred in space, one-sided at the ends
    for (e, eg) in grid.edges.iter().enumerate() {
        let n = eg.intervals;
        let dx = eg.dx;
        for k in 1..nt {
            for i in 0..=n {
                let scale = (wt[k] * eg.weights[i]).sqrt();
                let time = [
                    (layout.rho(e, i, k), 1.0 / dt),
                    (layout.rho(e, i, k - 1), -1.0 / dt),
                ];
                let space = if i == 0 {
                    [(layout.flux(e, 1, k), 1.0 / dx), (layout.flux(e, 0, k), -1.0 / dx)]
                } else if i == n {
                    [(layout.flux(e, n, k), 1.0 / dx), (layout.flux(e, n - 1, k), -1.0 / dx)]
                } else {
                    [
                        (layout.flux(e, i + 1, k), 0.5 / dx),
                        (layout.flux(e, i - 1, k), -0.5 / dx),
                    ]
                };
                asm.row(scale, &[time[0], time[1], space[0], space[1]], 0.0);
            }
        }
    }
    close(&asm, &mut ranges);

    for (target, k) in [(&endpoints.initial, 0), (&endpoints.terminal, nt - 1)] {
        for (e, eg) in grid.edges.iter().enumerate() {
            for i in 0..eg.nodes() {
                asm.row(eg.weights[i].sqrt(), &[(layout.rho(e, i, k), 1.0)], target[e][i]);
            }
        }
        close(&asm, &mut ranges);
    }

    for (pick, k) in [(0usize, 0usize), (1, nt - 1)] {
        for (s, &(m0, m1)) in layout.slots.iter().zip(&endpoints.slots) {
            let value = if pick == 0 { m0 } else { m1 };
            asm.row(wt[k].sqrt(), &[(s.mass + k, 1.0)], value);
        }
        close(&asm, &mut ranges);
    }

    // vertex coupling: inflow at edge ends minus outflow at edge starts
    let mut entries = Vec::new();
    for v in 0..graph.vertex_count() {
        let kind = graph.vertices()[v].kind;
        let inc = graph.incidence(v);
        let slot = layout.slot_for(v).copied();
        for k in 0..nt {
            entries.clear();
            for &e in &inc.incoming {
                let n = grid.edges[e].intervals;
                entries.push((layout.flux(e, n, k), 1.0));
            }
            for &e in &inc.outgoing {
                entries.push((layout.flux(e, 0, k), -1.0));
            }
            let t = grid.t(k);
            let rhs = match (kind, problem.boundary) {
                (VertexKind::Interior, _) => {
                    // f_k = in - out, or in - out = 0 without storage
                    if let Some(s) = slot {
                        entries.push((s.flux + k, -1.0));
                    }
                    0.0
                }
                (VertexKind::Source, BoundaryRegime::TimeDependent) => {
                    -problem.boundary_flux[v].unwrap().magnitude(t)
                }
                (VertexKind::Sink, BoundaryRegime::TimeDependent) => {
                    problem.boundary_flux[v].unwrap().magnitude(t)
                }
                (VertexKind::Source, BoundaryRegime::TimeIndependent) => {
                    // σ = out - in
                    entries.push((slot.unwrap().flux + k, 1.0));
                    0.0
                }
                (VertexKind::Sink, BoundaryRegime::TimeIndependent) => {
                    // d = in - out
                    entries.push((slot.unwrap().flux + k, -1.0));
                    0.0
                }
                (_, BoundaryRegime::None) => unreachable!("checked above"),
            };
            asm.row(wt[k].sqrt(), &entries, rhs);
        }
    }
    close(&asm, &mut ranges);

    for s in &layout.slots {
        // dγ/dt = f, dS/dt = -σ, dD/dt = d
        let sign = match s.kind {
            SlotKind::Supply => 1.0,
            SlotKind::Storage | SlotKind::Demand => -1.0,
        };
        for k in 1..nt {
            asm.row(
                wt[k].sqrt(),
                &[(s.mass + k, 1.0 / dt), (s.mass + k - 1, -1.0 / dt), (s.flux + k, sign)],
                0.0,
            );
        }
    }
    close(&asm, &mut ranges);

    // total mass; under time-dependent data the network mass follows the
    // discrete net inflow accumulated with the same backward steps as above
    let initial_mass: f64 = grid
        .edges
        .iter()
        .zip(&endpoints.initial)
        .map(|(eg, row)| eg.integrate(row))
        .sum::<f64>()
        + endpoints.slots.iter().map(|(m0, _)| m0).sum::<f64>();
    let mut inflow = 0.0;
    for k in 1..nt {
        if problem.boundary == BoundaryRegime::TimeDependent {
            let t = grid.t(k);
            for v in 0..graph.vertex_count() {
                let rate = problem.boundary_flux[v].map_or(0.0, |f| f.magnitude(t));
                match graph.vertices()[v].kind {
                    VertexKind::Source => inflow += dt * rate,
                    VertexKind::Sink => inflow -= dt * rate,
                    VertexKind::Interior => {}
                }
            }
        }
        entries.clear();
        for (e, eg) in grid.edges.iter().enumerate() {
            for i in 0..eg.nodes() {
                entries.push((layout.rho(e, i, k), eg.weights[i]));
            }
        }
        for s in &layout.slots {
            entries.push((s.mass + k, 1.0));
        }
        asm.row(1.0, &entries, initial_mass + inflow);
    }
    close(&asm, &mut ranges);

    let blocks = BlockKind::ALL
        .into_iter()
        .zip(ranges)
        .map(|(kind, rows)| Block {
            kind,
            delta: tolerances.resolve(kind, rows.len()),
            rows,
        })
        .collect();

    let weights = layout.weights(grid);
    let inv_weights = weights.iter().map(|w| 1.0 / w).collect();
    let transpose = asm.matrix.transpose();
    Ok(ConstraintSystem {
        layout,
        endpoints,
        matrix: asm.matrix,
        transpose,
        rhs: asm.rhs,
        blocks,
        weights,
        inv_weights,
    })
}

impl ConstraintSystem {
    /// Builds a system from explicit rows; used for small hand-made operators.
    pub fn from_rows(
        weights: Vec<f64>,
        rows: Vec<(BlockKind, Vec<(usize, f64)>, f64)>,
        tolerances: &Tolerances,
    ) -> Result<Self, DimensionMismatch> {
        let layout = Layout::flat(weights.len());
        let mut matrix = CsrMatrix::new(layout.len());
        let mut rhs = Vec::new();
        let mut counts = [0usize; 8];
        let mut sorted = rows;
        sorted.sort_by_key(|(k, _, _)| k.index());
        for (kind, mut entries, b) in sorted {
            if let Some(&(c, _)) = entries.iter().max_by_key(|(c, _)| *c) {
                if c >= layout.len() {
                    return Err(DimensionMismatch {
                        expected: layout.len(),
                        got: c + 1,
                    });
                }
            }
            counts[kind.index()] += 1;
            matrix.push_row(&mut entries);
            rhs.push(b);
        }
        let mut next = 0;
        let ranges: Vec<Range<usize>> = counts
            .iter()
            .map(|n| {
                next += n;
                next - n..next
            })
            .collect();
        let blocks = BlockKind::ALL
            .into_iter()
            .zip(ranges)
            .map(|(kind, rows)| Block {
                kind,
                delta: tolerances.resolve(kind, rows.len()),
                rows,
            })
            .collect();
        let inv_weights = weights.iter().map(|w| 1.0 / w).collect();
        let transpose = matrix.transpose();
        Ok(ConstraintSystem {
            endpoints: EndpointData {
                initial: vec![],
                terminal: vec![],
                slots: vec![],
            },
            layout,
            matrix,
            transpose,
            rhs,
            blocks,
            weights,
            inv_weights,
        })
    }

    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn unknowns(&self) -> usize {
        self.layout.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, kind: BlockKind) -> &Block {
        &self.blocks[kind.index()]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Diagonal of the primal inner product.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// `y = A u` into caller storage.
    pub fn forward_into(&self, u: &[f64], y: &mut [f64]) {
        self.matrix.mul_into(u, y);
    }

    /// `u = W^{-1} A^T y` into caller storage.
    pub fn adjoint_into(&self, y: &[f64], u: &mut [f64]) {
        self.transpose.mul_into(y, u);
        for (x, iw) in u.iter_mut().zip(&self.inv_weights) {
            *x *= iw;
        }
    }

    pub fn apply_forward(&self, u: &PrimalVector) -> Result<Vec<f64>, DimensionMismatch> {
        self.layout.check(u.len())?;
        let mut y = vec![0.0; self.rows()];
        self.forward_into(u.as_slice(), &mut y);
        Ok(y)
    }

    /// The adjoint in the weighted inner product: `<Au, y> = <u, A*y>_W`.
    pub fn apply_adjoint(&self, y: &[f64]) -> Result<PrimalVector, DimensionMismatch> {
        if y.len() != self.rows() {
            return Err(DimensionMismatch {
                expected: self.rows(),
                got: y.len(),
            });
        }
        let mut u = vec![0.0; self.unknowns()];
        self.adjoint_into(y, &mut u);
        Ok(PrimalVector(u))
    }

    pub fn weighted_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    pub fn weighted_norm(&self, a: &[f64]) -> f64 {
        self.weighted_dot(a, a).sqrt()
    }

    /// `‖A_j u − b_j‖` for every block, from a precomputed `A u`.
    pub fn block_residuals(&self, au: &[f64]) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| {
                b.rows
                    .clone()
                    .map(|r| (au[r] - self.rhs[r]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Power iteration on `A*A` in the weighted inner product; returns
    /// `‖A x‖_2 / ‖x‖_W` at the final iterate.
    pub fn estimate_operator_norm(&self, iterations: usize, seed: u64) -> f64 {
        let n = self.unknowns();
        if n == 0 || self.rows() == 0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut y = vec![0.0; self.rows()];
        let mut z = vec![0.0; n];
        let norm = self.weighted_norm(&x);
        x.iter_mut().for_each(|v| *v /= norm);
        for _ in 0..iterations {
            self.forward_into(&x, &mut y);
            self.adjoint_into(&y, &mut z);
            let nz = self.weighted_norm(&z);
            if nz == 0.0 {
                return 0.0;
            }
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi = zi / nz;
            }
        }
        self.forward_into(&x, &mut y);
        y.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Row-count summary per block.
    pub fn row_counts(&self) -> Vec<(BlockKind, usize)> {
        self.blocks.iter().map(|b| (b.kind, b.len())).collect()
    }
}

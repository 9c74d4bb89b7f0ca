//! Dynamic optimal transport on oriented metric graphs.
//!
//! A [`problem::TransportProblem`] describes densities on the edges of a
//! [`graph::MetricGraph`], optional vertex storage and supply/demand at
//! boundary vertices. [`discretize`] turns it into a relaxed linear
//! constraint set on a space-time grid, and [`solver`] runs a primal-dual
//! iteration on the kinetic energy. [`potentials`] holds the interface
//! constants of the related gradient flow, and [`io`] the file formats.
//!
//! ```
//! use gridflow::discretize::{assemble_constraints, build_grid, Resolution, Tolerances};
//! use gridflow::graph::{Edge, MetricGraph, Vertex, VertexKind};
//! use gridflow::problem::{DensityProfile, TransportProblem};
//! use gridflow::solver::{solve, SolverConfig};
//!
//! let graph = MetricGraph::new(
//!     vec![Vertex::new("a", VertexKind::Interior), Vertex::new("b", VertexKind::Interior)],
//!     vec![Edge::new("e", "a", "b", 1.0)],
//! )
//! .unwrap();
//! let mut problem = TransportProblem::new(graph);
//! problem
//!     .set_densities("e", DensityProfile::constant(1.0), DensityProfile::constant(1.0))
//!     .unwrap();
//! let grid = build_grid(&problem, &Resolution::Uniform(8), 2).unwrap();
//! let system = assemble_constraints(&problem, &grid, &Tolerances::default()).unwrap();
//! let solution = solve(&problem, &grid, &system, &SolverConfig::default()).unwrap();
//! assert!(solution.objective.value < 1e-8);
//! ```

pub mod discretize;
pub mod graph;
pub mod io;
pub mod potentials;
pub mod problem;
pub mod solver;

use std::sync::Once;

use thiserror::Error;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "GRIDFLOW_THREADS";

/// Any failure of the library, for callers that do not care which stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Problem(#[from] problem::ProblemError),
    #[error(transparent)]
    Grid(#[from] discretize::GridError),
    #[error(transparent)]
    Assembly(#[from] discretize::AssemblyError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error(transparent)]
    Potential(#[from] potentials::PotentialError),
    #[error(transparent)]
    Parse(#[from] io::ParseError),
    #[error(transparent)]
    Output(#[from] io::OutputError),
}

/// Sizes the global worker pool from `GRIDFLOW_THREADS`, once. Without the
/// variable the pool keeps its default size.
pub fn configure_threads() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) else {
            return;
        };
        if n > 0 {
            // fails only if a pool already exists, which is fine
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    });
}

/// Everything needed to run one problem file end to end.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: discretize::GridSpec,
    pub system: discretize::ConstraintSystem,
    pub config: solver::SolverConfig,
}

/// Builds the grid, constraint system and solver settings of a parsed file.
pub fn prepare(spec: &io::ProblemSpec) -> Result<Prepared, Error> {
    let grid = discretize::build_grid(&spec.problem, &spec.resolution(), spec.steps)?;
    let system = discretize::assemble_constraints(&spec.problem, &grid, &spec.solver.tolerances)?;
    Ok(Prepared {
        grid,
        system,
        config: spec.solver.config(),
    })
}

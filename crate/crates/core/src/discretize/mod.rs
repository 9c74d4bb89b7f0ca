//! Space-time grids, the flat unknown layout and the relaxed constraint set.

mod constraints;
mod grid;
mod layout;
mod sparse;

pub use constraints::{
    assemble_constraints, sample_endpoint_data, AssemblyError, Block, BlockKind, ConstraintSystem, EndpointData,
    Tolerances, DEFAULT_DELTA_SCALE, DEFAULT_NORM_ITERATIONS, DEFAULT_NORM_SEED,
};
pub use grid::{build_grid, EdgeGrid, GridError, GridSpec, Resolution, DEFAULT_NT, DEFAULT_NX};
pub use layout::{
    DimensionMismatch, EdgeBlock, EdgeField, GridFunctions, Layout, PrimalVector, SlotKind, SlotSeries, VertexSlot,
};
pub use sparse::CsrMatrix;

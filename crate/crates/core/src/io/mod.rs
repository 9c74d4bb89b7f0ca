//! Problem files and solution output.

mod output;
mod problem_file;

pub use output::{
    write_solution, ConvergenceRow, EdgeTable, MassEntry, OutputError, OutputFormat, ResidualEntry, SolutionBundle,
    Summary, VertexTable, WriteOptions,
};
pub use problem_file::{
    parse_problem, parse_problem_str, write_problem, ParseError, ParseErrorKind, ProblemSpec, SolverOverrides,
};

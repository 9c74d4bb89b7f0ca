//! Solution tables and summaries.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::discretize::{GridSpec, Layout, SlotKind};
use crate::problem::TransportProblem;
use crate::solver::{BlockResidual, Solution};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write `{}`: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot time {0} lies outside [0, T]")]
    SnapshotTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Space-time table of one edge field: `values[k][i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeTable {
    pub edge: String,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub j: Vec<Vec<f64>>,
}

/// Time series attached to a vertex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexTable {
    pub vertex: String,
    /// Column names after `t`, e.g. `["gamma", "f"]`.
    pub columns: [&'static str; 2],
    pub t: Vec<f64>,
    pub mass: Vec<f64>,
    pub flux: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualEntry {
    pub block: &'static str,
    pub rows: usize,
    pub residual: f64,
    pub delta: f64,
    pub satisfied: bool,
}

impl From<&BlockResidual> for ResidualEntry {
    fn from(r: &BlockResidual) -> Self {
        ResidualEntry {
            block: r.kind.name(),
            rows: r.rows,
            residual: r.residual,
            delta: r.delta,
            satisfied: r.satisfied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassEntry {
    pub t: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub objective: f64,
    pub infeasible: bool,
    pub converged: bool,
    pub iterations: usize,
    pub primal_change: f64,
    pub residuals: Vec<ResidualEntry>,
    pub operator_norm: f64,
    pub tau: f64,
    pub sigma: f64,
    pub wall_time: f64,
    pub time_steps: usize,
    pub intervals: Vec<usize>,
    pub mass: Vec<MassEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub iteration: usize,
    pub objective: f64,
    pub primal_change: f64,
    pub residuals: Vec<f64>,
}

/// Everything `write_solution` persists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionBundle {
    pub edges: Vec<EdgeTable>,
    pub vertices: Vec<VertexTable>,
    pub summary: Summary,
    pub convergence: Vec<ConvergenceRow>,
    /// Time node indices emitted under `plotdata/`.
    #[serde(skip)]
    pub snapshots: Vec<usize>,
}

fn nearest_node(grid: &GridSpec, t: f64) -> Result<usize, OutputError> {
    if !(t >= -1e-12 && t <= grid.horizon + 1e-12) {
        return Err(OutputError::SnapshotTime(t));
    }
    Ok(((t / grid.dt).round() as usize).min(grid.steps))
}

impl SolutionBundle {
    /// `snapshot_times` picks the plot snapshots; `None` gives five evenly
    /// spaced ones.
    pub fn new(
        problem: &TransportProblem,
        grid: &GridSpec,
        layout: &Layout,
        solution: &Solution,
        snapshot_times: Option<&[f64]>,
    ) -> Result<Self, OutputError> {
        let u = solution.u.as_slice();
        let nt = grid.time_nodes();
        let times: Vec<f64> = (0..nt).map(|k| grid.t(k)).collect();
        let edges = grid
            .edges
            .iter()
            .enumerate()
            .map(|(e, eg)| {
                let table = |f: &dyn Fn(usize, usize) -> usize| {
                    (0..nt)
                        .map(|k| (0..eg.nodes()).map(|i| u[f(i, k)]).collect())
                        .collect()
                };
                EdgeTable {
                    edge: problem.graph.edges()[e].id.clone(),
                    x: (0..eg.nodes()).map(|i| eg.x(i)).collect(),
                    t: times.clone(),
                    rho: table(&|i, k| layout.rho(e, i, k)),
                    j: table(&|i, k| layout.flux(e, i, k)),
                }
            })
            .collect();
        let vertices = layout
            .slots
            .iter()
            .map(|s| {
                let mass = u[s.mass..s.mass + nt].to_vec();
                let mut flux = u[s.flux..s.flux + nt].to_vec();
                let columns = match s.kind {
                    SlotKind::Storage => ["gamma", "f"],
                    SlotKind::Supply => {
                        // stored as -s
                        flux.iter_mut().for_each(|v| *v = -*v);
                        ["S", "s"]
                    }
                    SlotKind::Demand => ["D", "d"],
                };
                VertexTable {
                    vertex: problem.graph.vertices()[s.vertex].id.clone(),
                    columns,
                    t: times.clone(),
                    mass,
                    flux,
                }
            })
            .collect();
        let summary = Summary {
            objective: solution.objective.value,
            infeasible: solution.objective.infeasible,
            converged: solution.converged,
            iterations: solution.iterations,
            primal_change: solution.primal_change,
            residuals: solution.residuals.iter().map(ResidualEntry::from).collect(),
            operator_norm: solution.operator_norm,
            tau: solution.tau,
            sigma: solution.sigma,
            wall_time: solution.wall_time,
            time_steps: grid.steps,
            intervals: grid.edges.iter().map(|e| e.intervals).collect(),
            mass: times
                .iter()
                .zip(&solution.mass_history)
                .map(|(&t, &mass)| MassEntry { t, mass })
                .collect(),
        };
        let convergence = solution
            .history
            .iter()
            .map(|r| ConvergenceRow {
                iteration: r.iteration,
                objective: r.objective,
                primal_change: r.primal_change,
                residuals: r.residuals.clone(),
            })
            .collect();
        let snapshots = match snapshot_times {
            Some(ts) => ts.iter().map(|&t| nearest_node(grid, t)).collect::<Result<Vec<_>, _>>()?,
            None => (0..5).map(|q| (q * grid.steps + 2) / 4).collect(),
        };
        Ok(SolutionBundle {
            edges,
            vertices,
            summary,
            convergence,
            snapshots,
        })
    }
}

/// Which files to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteOptions {
    pub format: OutputFormat,
    pub plotdata: bool,
}

struct Out<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Out<'_> {
    fn file(&mut self, name: &str, body: &str) -> Result<(), OutputError> {
        let path = self.dir.join(name);
        let io = |source| OutputError::Io {
            path: path.clone(),
            source,
        };
        let mut f = fs::File::create(&path).map_err(io)?;
        f.write_all(body.as_bytes()).map_err(io)?;
        self.written.push(path);
        Ok(())
    }
}

fn csv_line(cells: impl IntoIterator<Item = String>) -> String {
    let mut line = cells.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn grid_csv(x: &[f64], t: &[f64], values: &[Vec<f64>]) -> String {
    let mut s = csv_line(std::iter::once("t\\x".to_string()).chain(x.iter().map(f64::to_string)));
    for (tk, row) in t.iter().zip(values) {
        s += &csv_line(std::iter::once(tk.to_string()).chain(row.iter().map(f64::to_string)));
    }
    s
}

/// Writes the bundle into `out_dir`, creating it if needed; returns the
/// written paths in order.
pub fn write_solution(bundle: &SolutionBundle, out_dir: &Path, options: WriteOptions) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(out_dir).map_err(|source| OutputError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut out = Out {
        dir: out_dir,
        written: Vec::new(),
    };
    match options.format {
        OutputFormat::Csv => {
            for e in &bundle.edges {
                out.file(&format!("rho_{}.csv", e.edge), &grid_csv(&e.x, &e.t, &e.rho))?;
                out.file(&format!("j_{}.csv", e.edge), &grid_csv(&e.x, &e.t, &e.j))?;
            }
            for v in &bundle.vertices {
                let mut s = csv_line(["t".to_string(), v.columns[0].into(), v.columns[1].into()]);
                for k in 0..v.t.len() {
                    s += &csv_line([v.t[k].to_string(), v.mass[k].to_string(), v.flux[k].to_string()]);
                }
                out.file(&format!("vertex_{}.csv", v.vertex), &s)?;
            }
        }
        OutputFormat::Json => {
            let body = serde_json::to_string_pretty(bundle).expect("bundle serializes");
            out.file("solution.json", &(body + "\n"))?;
        }
    }
    let summary = serde_json::to_string_pretty(&bundle.summary).expect("summary serializes");
    out.file("summary.json", &(summary + "\n"))?;

    let mut conv = csv_line(
        ["iteration", "objective", "primal_change"]
            .into_iter()
            .map(String::from)
            .chain(bundle.summary.residuals.iter().map(|r| format!("res_{}", r.block))),
    );
    for row in &bundle.convergence {
        conv += &csv_line(
            [row.iteration.to_string(), row.objective.to_string(), row.primal_change.to_string()]
                .into_iter()
                .chain(row.residuals.iter().map(f64::to_string)),
        );
    }
    out.file("convergence.csv", &conv)?;

    if options.plotdata {
        let dir = out_dir.join("plotdata");
        fs::create_dir_all(&dir).map_err(|source| OutputError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut plot = Out {
            dir: &dir,
            written: Vec::new(),
        };
        for &k in &bundle.snapshots {
            let mut s = csv_line(["edge", "x", "t", "rho"].map(String::from));
            for e in &bundle.edges {
                for (i, x) in e.x.iter().enumerate() {
                    s += &csv_line([quote(&e.edge), x.to_string(), e.t[k].to_string(), e.rho[k][i].to_string()]);
                }
            }
            plot.file(&format!("snapshot_{k:04}.csv"), &s)?;
        }
        out.written.extend(plot.written);
    }
    Ok(out.written)
}

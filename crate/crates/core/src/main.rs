use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gridflow::discretize::BlockKind;
use gridflow::io::{parse_problem, write_solution, OutputFormat, ProblemSpec, SolutionBundle, WriteOptions};
use gridflow::potentials::{assemble_potential_system, edge_slope, potentials_from_pipes, PotentialError};
use gridflow::problem::BoundaryRegime;
use gridflow::solver::solve_with;

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "gridflow", version, about = "Dynamic optimal transport on metric graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the transport problem and write the solution tables.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Relative primal-change tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Comma-separated times for the plot snapshots.
        #[arg(long, value_delimiter = ',')]
        snapshot_times: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Also write long-format snapshot files under `plotdata/`.
        #[arg(long)]
        plotdata: bool,
        /// Suppress the iteration log on stderr.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Run the mass-conservation and demand audits.
    Check {
        #[arg(long)]
        problem: PathBuf,
    },
    /// Solve for the interface constants from the `pipes` section.
    Potentials {
        #[arg(long)]
        problem: PathBuf,
    },
    /// Print grid sizes, unknown counts and constraint row counts.
    Info {
        #[arg(long)]
        problem: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<ProblemSpec, ExitCode> {
    parse_problem(path).map_err(|e| {
        eprintln!("error [{}]: {e}", e.kind().name());
        ExitCode::from(EXIT_USAGE)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    gridflow::configure_threads();
    match run(cli.command) {
        Ok(code) | Err(code) => code,
    }
}

fn run(command: Command) -> Result<ExitCode, ExitCode> {
    match command {
        Command::Solve {
            problem,
            out,
            max_iters,
            tol,
            snapshot_times,
            format,
            plotdata,
            quiet,
        } => {
            let spec = load(&problem)?;
            let mut prepared = gridflow::prepare(&spec).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_USAGE)
            })?;
            if let Some(n) = max_iters {
                prepared.config.max_iters = n;
            }
            if let Some(t) = tol {
                prepared.config.rel_tol = t;
            }
            let names: Vec<&str> = BlockKind::ALL.iter().map(|b| b.name()).collect();
            let solution = solve_with(&spec.problem, &prepared.grid, &prepared.system, &prepared.config, |r| {
                if !quiet {
                    let res: Vec<String> = names.iter().zip(&r.residuals).map(|(n, v)| format!("{n}={v:.2e}")).collect();
                    eprintln!(
                        "iter {:>6}  objective {:.6e}  change {:.2e}  {}",
                        r.iteration,
                        r.objective,
                        r.primal_change,
                        res.join(" ")
                    );
                }
            })
            .map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_FAIL)
            })?;
            let bundle = SolutionBundle::new(
                &spec.problem,
                &prepared.grid,
                &prepared.system.layout,
                &solution,
                snapshot_times.as_deref(),
            )
            .map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_USAGE)
            })?;
            let options = WriteOptions {
                format: match format {
                    Format::Csv => OutputFormat::Csv,
                    Format::Json => OutputFormat::Json,
                },
                plotdata,
            };
            write_solution(&bundle, &out, options).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_FAIL)
            })?;
            println!(
                "objective {}  iterations {}  converged {}  wall {:.1}s",
                solution.objective.value, solution.iterations, solution.converged, solution.wall_time
            );
            for r in &solution.residuals {
                println!(
                    "  {:<15} rows {:>6}  residual {:.3e}  delta {:.3e}  {}",
                    r.kind.name(),
                    r.rows,
                    r.residual,
                    r.delta,
                    if r.satisfied() { "ok" } else { "VIOLATED" }
                );
            }
            Ok(if solution.converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            })
        }
        Command::Check { problem } => {
            let spec = load(&problem)?;
            let p = &spec.problem;
            let gmc = p.check_gmc();
            println!(
                "gmc: lhs {} rhs {} slack {:e} -> {}",
                gmc.lhs,
                gmc.rhs,
                gmc.slack,
                if gmc.balanced { "balanced" } else { "UNBALANCED" }
            );
            let mut ok = gmc.balanced;
            if p.boundary != BoundaryRegime::None {
                let d = p.check_demand_bound().map_err(|e| {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_USAGE)
                })?;
                print!(
                    "demand: bound {} demand {} -> {}",
                    d.bound,
                    d.demand,
                    if d.feasible { "feasible" } else { "INFEASIBLE" }
                );
                match d.first_violation {
                    Some(t) => println!(" (running bound first violated at t = {t})"),
                    None => println!(),
                }
                ok &= d.feasible;
            } else {
                println!("demand: no boundary vertices");
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAIL) })
        }
        Command::Potentials { problem } => {
            let spec = load(&problem)?;
            let graph = &spec.problem.graph;
            let Some(pipes) = &spec.pipes else {
                eprintln!("error: the problem file has no `pipes` section");
                return Err(ExitCode::from(EXIT_USAGE));
            };
            match potentials_from_pipes(graph, pipes) {
                Ok(sol) => {
                    println!("edge,c,d");
                    for (e, (edge, d)) in graph.edges().iter().zip(&sol.d).enumerate() {
                        let c = edge_slope(&pipes[e]).expect("validated while parsing");
                        println!("{},{},{}", edge.id, c, d);
                    }
                    println!("vertex,phi");
                    for (v, phi) in graph.vertices().iter().zip(&sol.phi) {
                        println!("{},{}", v.id, phi);
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(PotentialError::NotATree(diag)) => {
                    eprintln!("error: graph is not a simple tree; refusing ({diag})");
                    Ok(ExitCode::from(EXIT_FAIL))
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    Ok(ExitCode::from(EXIT_FAIL))
                }
            }
        }
        Command::Info { problem } => {
            let spec = load(&problem)?;
            let prepared = gridflow::prepare(&spec).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_USAGE)
            })?;
            let p = &spec.problem;
            let g = &prepared.grid;
            println!(
                "vertices {}  edges {}  coupling {:?}  boundary {}",
                p.graph.vertex_count(),
                p.graph.edge_count(),
                p.coupling,
                p.boundary
            );
            println!("time steps {}  dt {}  T {}", g.steps, g.dt, g.horizon);
            for (edge, eg) in p.graph.edges().iter().zip(&g.edges) {
                println!("  edge {:<8} length {}  intervals {}  dx {}", edge.id, eg.length, eg.intervals, eg.dx);
            }
            let sys = &prepared.system;
            println!("unknowns {}  constraint rows {}  nonzeros {}", sys.unknowns(), sys.rows(), sys.matrix().nnz());
            for b in sys.blocks() {
                println!("  {:<15} rows {:>6}  delta {:.3e}", b.name(), b.len(), b.delta);
            }
            if let Some(pipes) = &spec.pipes {
                let slopes: Vec<f64> = pipes.iter().map(|q| edge_slope(q).expect("validated")).collect();
                let lengths: Vec<f64> = p.graph.edges().iter().map(|e| e.length).collect();
                if let Ok(ps) = assemble_potential_system(&p.graph, &slopes, &lengths) {
                    println!("potential system: {}", ps.diagnostics());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

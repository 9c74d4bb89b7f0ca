//! Primal-dual iteration for the relaxed discrete transport problem.

mod prox;

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

pub use prox::{helper_h, project_ball, prox_dual, prox_kinetic, ProxError};

use crate::discretize::{
    BlockKind, ConstraintSystem, DimensionMismatch, GridSpec, Layout, PrimalVector, SlotKind, DEFAULT_NORM_ITERATIONS,
    DEFAULT_NORM_SEED,
};
use crate::problem::TransportProblem;

pub const DEFAULT_MAX_ITERS: usize = 20_000;
pub const DEFAULT_REL_TOL: f64 = 1e-6;
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-12;
pub const DEFAULT_LOG_EVERY: usize = 100;
const STEP_SAFETY: f64 = 0.99;
const PAR_PAIRS: usize = 8192;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Primal step `λ`; `None` picks `0.99 / L`.
    pub tau: Option<f64>,
    /// Dual step `σ`; `None` picks `0.99 / L`.
    pub sigma: Option<f64>,
    /// `λ / σ` when both steps are picked automatically; `λσL²` stays `0.98`.
    pub step_ratio: f64,
    pub rel_tol: f64,
    pub density_floor: f64,
    /// Interval between history records; `0` records only the final state.
    pub log_every: usize,
    pub norm_iterations: usize,
    pub norm_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: DEFAULT_MAX_ITERS,
            tau: None,
            sigma: None,
            step_ratio: 1.0,
            rel_tol: DEFAULT_REL_TOL,
            density_floor: DEFAULT_DENSITY_FLOOR,
            log_every: DEFAULT_LOG_EVERY,
            norm_iterations: DEFAULT_NORM_ITERATIONS,
            norm_seed: DEFAULT_NORM_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Dimension(#[from] DimensionMismatch),
    #[error("non-finite value in the iterates at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid solver setting `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
}

/// One diagnostic record of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    /// `‖A_j u − b_j‖` in block order.
    pub residuals: Vec<f64>,
    pub primal_change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockResidual {
    pub kind: BlockKind,
    pub rows: usize,
    pub residual: f64,
    pub delta: f64,
}

impl BlockResidual {
    pub fn satisfied(&self) -> bool {
        self.residual <= self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub value: f64,
    /// Set when a flux is nonzero where the density vanishes.
    pub infeasible: bool,
}

/// Live iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub u: PrimalVector,
    pub phi: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub iteration: usize,
    pub tau: f64,
    pub sigma: f64,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub u: PrimalVector,
    pub phi: Vec<f64>,
    pub objective: Objective,
    pub residuals: Vec<BlockResidual>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_change: f64,
    pub history: Vec<IterationRecord>,
    /// Discrete total mass (edges plus vertex series) at every time node.
    pub mass_history: Vec<f64>,
    pub operator_norm: f64,
    pub tau: f64,
    pub sigma: f64,
    pub wall_time: f64,
}

impl Solution {
    pub fn residuals_satisfied(&self) -> bool {
        self.residuals.iter().all(BlockResidual::satisfied)
    }

    pub fn residual(&self, kind: BlockKind) -> &BlockResidual {
        &self.residuals[kind.index()]
    }
}

/// Weighted cost `T^(p-1) Σ w h` of a primal vector.
pub fn evaluate_objective(u: &PrimalVector, grid: &GridSpec, problem: &TransportProblem) -> Result<Objective, DimensionMismatch> {
    let layout = Layout::new(problem, grid);
    layout.check(u.len())?;
    Ok(objective_with(u.as_slice(), &layout, grid, problem, DEFAULT_DENSITY_FLOOR))
}

fn objective_with(u: &[f64], layout: &Layout, grid: &GridSpec, problem: &TransportProblem, floor: f64) -> Objective {
    let p = problem.exponent;
    let mut value = 0.0;
    let mut infeasible = false;
    let mut add = |w: f64, rho: f64, flux: f64| {
        if rho <= floor {
            if flux.abs() > floor {
                infeasible = true;
            }
        } else {
            value += w * helper_h(flux, rho, p);
        }
    };
    for (e, eg) in grid.edges.iter().enumerate() {
        for (k, wt) in grid.time_weights.iter().enumerate() {
            for (i, wx) in eg.weights.iter().enumerate() {
                add(wx * wt, u[layout.rho(e, i, k)], u[layout.flux(e, i, k)]);
            }
        }
    }
    for s in &layout.slots {
        for (k, wt) in grid.time_weights.iter().enumerate() {
            add(*wt, u[s.mass + k], u[s.flux + k]);
        }
    }
    let scale = problem.horizon.powf(p - 1.0);
    Objective {
        value: if infeasible { f64::INFINITY } else { scale * value },
        infeasible,
    }
}

/// Discrete total mass at each time node.
pub fn mass_history(u: &PrimalVector, grid: &GridSpec, layout: &Layout) -> Vec<f64> {
    let u = u.as_slice();
    (0..grid.time_nodes())
        .map(|k| {
            let edges: f64 = grid
                .edges
                .iter()
                .enumerate()
                .map(|(e, eg)| {
                    eg.weights
                        .iter()
                        .enumerate()
                        .map(|(i, w)| w * u[layout.rho(e, i, k)])
                        .sum::<f64>()
                })
                .sum();
            edges + layout.slots.iter().map(|s| u[s.mass + k]).sum::<f64>()
        })
        .collect()
}

/// The documented warm start: densities linear in time between the sampled
/// endpoints, flux zero except at the first time node where it is one.
pub fn initial_guess(system: &ConstraintSystem, grid: &GridSpec) -> PrimalVector {
    let layout = &system.layout;
    let data = &system.endpoints;
    let mut u = PrimalVector::zeros(layout);
    let nt = grid.time_nodes();
    let ratio = |k: usize| k as f64 / (nt - 1) as f64;
    for (e, eg) in grid.edges.iter().enumerate() {
        for k in 0..nt {
            let s = ratio(k);
            for i in 0..eg.nodes() {
                u.0[layout.rho(e, i, k)] = (1.0 - s) * data.initial[e][i] + s * data.terminal[e][i];
            }
        }
        for i in 0..eg.nodes() {
            u.0[layout.flux(e, i, 0)] = 1.0;
        }
    }
    for (slot, &(m0, m1)) in layout.slots.iter().zip(&data.slots) {
        for k in 0..nt {
            let s = ratio(k);
            u.0[slot.mass + k] = (1.0 - s) * m0 + s * m1;
        }
    }
    u
}

fn weighted_norm(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
}

fn weighted_diff_norm(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter()
        .zip(a.iter().zip(b))
        .map(|(w, (a, b))| w * (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn prox_pairs(mass: &mut [f64], flux: &mut [f64], kappa: f64, p: f64, clamp_flux: bool) {
    let apply = |(r, m): (&mut f64, &mut f64)| {
        let (nr, nm) = if p == 2.0 {
            prox::prox_quadratic(*r, *m, kappa)
        } else {
            prox_kinetic(*r, *m, kappa, p).expect("checked scale and exponent")
        };
        *r = nr;
        *m = if clamp_flux { nm.max(0.0) } else { nm };
    };
    if mass.len() >= PAR_PAIRS {
        mass.par_iter_mut().zip(flux.par_iter_mut()).for_each(apply);
    } else {
        mass.iter_mut().zip(flux.iter_mut()).for_each(apply);
    }
}

/// Primal prox over every (density, flux) pair of the layout.
fn primal_prox(u: &mut [f64], layout: &Layout, kappa: f64, p: f64) {
    for b in &layout.edges {
        let n = b.len();
        let (head, tail) = u.split_at_mut(b.flux);
        prox_pairs(&mut head[b.rho..b.rho + n], &mut tail[..n], kappa, p, false);
    }
    let nt = layout.time_nodes;
    for s in &layout.slots {
        let (head, tail) = u.split_at_mut(s.flux);
        // sign-constrained boundary rates: experimental clamp after the prox
        let clamp = s.kind != SlotKind::Storage;
        prox_pairs(&mut head[s.mass..s.mass + nt], &mut tail[..nt], kappa, p, clamp);
    }
}

fn check_config(config: &SolverConfig, problem: &TransportProblem) -> Result<(), SolverError> {
    let bad = |field, reason: &str| {
        Err(SolverError::Config {
            field,
            reason: reason.to_string(),
        })
    };
    if !(problem.exponent >= 1.0) {
        return bad("p", "exponent must be at least 1");
    }
    for (field, v) in [("tau", config.tau), ("sigma", config.sigma)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return bad(field, "step size must be positive and finite");
            }
        }
    }
    if !(config.step_ratio > 0.0 && config.step_ratio.is_finite()) {
        return bad("step_ratio", "must be positive and finite");
    }
    if !(config.rel_tol >= 0.0) {
        return bad("rel_tol", "must be nonnegative");
    }
    Ok(())
}

/// Runs the iteration from the documented warm start.
pub fn solve(
    problem: &TransportProblem,
    grid: &GridSpec,
    system: &ConstraintSystem,
    config: &SolverConfig,
) -> Result<Solution, SolverError> {
    solve_with(problem, grid, system, config, |_| {})
}

/// As [`solve`], calling `observer` with each history record as it is made.
pub fn solve_with(
    problem: &TransportProblem,
    grid: &GridSpec,
    system: &ConstraintSystem,
    config: &SolverConfig,
    observer: impl FnMut(&IterationRecord),
) -> Result<Solution, SolverError> {
    let u0 = initial_guess(system, grid);
    solve_from(problem, grid, system, config, u0, observer)
}

pub fn solve_from(
    problem: &TransportProblem,
    grid: &GridSpec,
    system: &ConstraintSystem,
    config: &SolverConfig,
    u0: PrimalVector,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<Solution, SolverError> {
    let started = Instant::now();
    check_config(config, problem)?;
    let layout = &system.layout;
    layout.check(u0.len())?;
    let norm = system.estimate_operator_norm(config.norm_iterations, config.norm_seed);
    let auto = if norm > 0.0 { STEP_SAFETY / norm } else { 1.0 };
    let root = config.step_ratio.sqrt();
    let tau = config.tau.unwrap_or(auto * root);
    let sigma = config.sigma.unwrap_or(auto / root);
    let p = problem.exponent;
    let kappa = tau * problem.horizon.powf(p - 1.0);
    let w = system.weights();
    let n = system.unknowns();
    let m = system.rows();

    let mut state = SolverState {
        u_bar: u0.0.clone(),
        u: u0,
        phi: vec![0.0; m],
        iteration: 0,
        tau,
        sigma,
        history: Vec::new(),
    };
    let mut au = vec![0.0; m];
    system.forward_into(&state.u.0, &mut au);
    let mut au_bar = au.clone();
    let mut au_new = vec![0.0; m];
    let mut adj = vec![0.0; n];
    let mut u_new = vec![0.0; n];
    let mut converged = false;
    let mut change = f64::INFINITY;
    let deltas: Vec<f64> = system.blocks().iter().map(|b| b.delta).collect();

    let record = |iteration: usize, u: &[f64], au: &[f64], change: f64| IterationRecord {
        iteration,
        objective: objective_with(u, layout, grid, problem, config.density_floor).value,
        residuals: system.block_residuals(au),
        primal_change: change,
    };

    while state.iteration < config.max_iters {
        // dual step on φ + σ A ū
        for (phi, y) in state.phi.iter_mut().zip(&au_bar) {
            *phi += sigma * y;
        }
        prox::prox_dual(&mut state.phi, sigma, system);

        // primal step on u - λ A*φ
        system.adjoint_into(&state.phi, &mut adj);
        for ((un, u), a) in u_new.iter_mut().zip(&state.u.0).zip(&adj) {
            *un = u - tau * a;
        }
        primal_prox(&mut u_new, layout, kappa, p);
        system.forward_into(&u_new, &mut au_new);
        state.iteration += 1;

        if u_new.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite {
                iteration: state.iteration,
            });
        }

        change = weighted_diff_norm(w, &u_new, &state.u.0) / weighted_norm(w, &u_new).max(1.0);
        for (((ub, un), u), (ab, (an, a))) in state
            .u_bar
            .iter_mut()
            .zip(&u_new)
            .zip(&state.u.0)
            .zip(au_bar.iter_mut().zip(au_new.iter().zip(&au)))
        {
            *ub = 2.0 * un - u;
            *ab = 2.0 * an - a;
        }
        std::mem::swap(&mut state.u.0, &mut u_new);
        std::mem::swap(&mut au, &mut au_new);

        let feasible = system.block_residuals(&au).iter().zip(&deltas).all(|(r, d)| r <= d);
        converged = feasible && change <= config.rel_tol;
        if config.log_every > 0 && (state.iteration.is_multiple_of(config.log_every) || converged) {
            let rec = record(state.iteration, &state.u.0, &au, change);
            observer(&rec);
            state.history.push(rec);
        }
        if converged {
            break;
        }
    }
    if state.history.last().map(|r| r.iteration) != Some(state.iteration) {
        let rec = record(state.iteration, &state.u.0, &au, change);
        observer(&rec);
        state.history.push(rec);
    }

    let finals = system.block_residuals(&au);
    let residuals = system
        .blocks()
        .iter()
        .zip(finals)
        .map(|(b, r)| BlockResidual {
            kind: b.kind,
            rows: b.len(),
            residual: r,
            delta: b.delta,
        })
        .collect();
    let objective = objective_with(&state.u.0, layout, grid, problem, config.density_floor);
    let masses = mass_history(&state.u, grid, layout);
    Ok(Solution {
        u: state.u,
        phi: state.phi,
        objective,
        residuals,
        iterations: state.iteration,
        converged,
        primal_change: change,
        history: state.history,
        mass_history: masses,
        operator_norm: norm,
        tau,
        sigma,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

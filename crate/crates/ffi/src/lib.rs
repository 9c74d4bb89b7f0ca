//! C ABI over the gridflow solver.
//!
//! Problems and solutions are opaque heap handles released with their
//! `_free` function. Every fallible call returns a [`GfStatus`]; on failure
//! [`gf_last_error`] describes what went wrong on the calling thread. No
//! function unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gridflow::discretize::BlockKind;
use gridflow::io::{parse_problem, parse_problem_str, ProblemSpec};
use gridflow::potentials::{potentials_from_pipes, PotentialError};
use gridflow::solver::{solve, Solution};
use gridflow::{prepare, Error, Prepared};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The problem file could not be read.
    Io = 3,
    /// The problem text is malformed or inconsistent.
    Parse = 4,
    /// The problem could not be discretized.
    Invalid = 5,
    /// The solver rejected its settings or diverged.
    Solver = 6,
    /// The problem has no complete `pipes` section, or the pipe data is invalid.
    Potential = 7,
    /// Potentials requested on a graph that is not a simple tree.
    NotATree = 8,
    /// A caller buffer is too small.
    BufferTooSmall = 9,
    /// Internal failure; the library state is unaffected.
    Panic = 10,
}

/// A parsed and discretized problem.
pub struct GfProblem {
    spec: ProblemSpec,
    prepared: Prepared,
}

/// The result of one solve.
pub struct GfSolution {
    solution: Solution,
}

/// Feasibility audit of a problem.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GfCheckReport {
    pub gmc_lhs: f64,
    pub gmc_rhs: f64,
    pub gmc_balanced: bool,
    /// False when the problem has no boundary vertices; the demand fields are then zero.
    pub has_boundary: bool,
    pub demand_bound: f64,
    pub demand: f64,
    pub demand_feasible: bool,
}

/// Overrides for [`gf_solve`]; zero fields keep the file's settings.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GfSolveOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
}

/// Scalar diagnostics of a solution.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GfSummary {
    pub objective: f64,
    pub infeasible: bool,
    pub converged: bool,
    pub iterations: usize,
    pub primal_change: f64,
    pub operator_norm: f64,
    pub tau: f64,
    pub sigma: f64,
    pub wall_time: f64,
}

/// Number of constraint blocks reported by [`gf_solution_residuals`].
pub const GF_BLOCK_COUNT: usize = 8;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: GfStatus, message: impl Into<String>) -> GfStatus {
    set_error(message);
    status
}

/// Runs `f`, turning a panic into [`GfStatus::Panic`].
fn guard(f: impl FnOnce() -> GfStatus) -> GfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(GfStatus::Panic, format!("internal error: {what}"))
        }
    }
}

fn status_of(err: &Error) -> GfStatus {
    match err {
        Error::Parse(p) if matches!(p.kind(), gridflow::io::ParseErrorKind::Io) => GfStatus::Io,
        Error::Parse(_) => GfStatus::Parse,
        Error::Solver(_) => GfStatus::Solver,
        Error::Potential(PotentialError::NotATree(_)) => GfStatus::NotATree,
        Error::Potential(_) => GfStatus::Potential,
        _ => GfStatus::Invalid,
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, GfStatus> {
    if s.is_null() {
        return Err(fail(GfStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(GfStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn finish_problem(spec: Result<ProblemSpec, gridflow::io::ParseError>, out: *mut *mut GfProblem) -> GfStatus {
    let built = spec.map_err(Error::from).and_then(|spec| {
        let prepared = prepare(&spec)?;
        Ok(GfProblem { spec, prepared })
    });
    match built {
        Ok(p) => {
            unsafe { *out = Box::into_raw(Box::new(p)) };
            GfStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    }
}

/// Parses and discretizes a problem from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gf_problem_from_json(json: *const c_char, out: *mut *mut GfProblem) -> GfStatus {
    guard(|| {
        if out.is_null() {
            return fail(GfStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        match read_str(json) {
            Ok(text) => finish_problem(parse_problem_str(text), out),
            Err(s) => s,
        }
    })
}

/// Reads, parses and discretizes a problem file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gf_problem_from_file(path: *const c_char, out: *mut *mut GfProblem) -> GfStatus {
    guard(|| {
        if out.is_null() {
            return fail(GfStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        match read_str(path) {
            Ok(path) => finish_problem(parse_problem(path), out),
            Err(s) => s,
        }
    })
}

/// Releases a problem; null is ignored.
///
/// # Safety
/// `problem` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gf_problem_free(problem: *mut GfProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of unknowns of the discretized problem, or 0 for null.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gf_problem_unknowns(problem: *const GfProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.prepared.system.unknowns())
}

/// Number of constraint rows of the discretized problem, or 0 for null.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gf_problem_rows(problem: *const GfProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.prepared.system.rows())
}

/// Runs the mass-conservation and demand audits.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gf_check(problem: *const GfProblem, out: *mut GfCheckReport) -> GfStatus {
    guard(|| {
        let (Some(p), false) = (problem.as_ref(), out.is_null()) else {
            return fail(GfStatus::NullPointer, "problem or out is null");
        };
        let problem = &p.spec.problem;
        let gmc = problem.check_gmc();
        let mut report = GfCheckReport {
            gmc_lhs: gmc.lhs,
            gmc_rhs: gmc.rhs,
            gmc_balanced: gmc.balanced,
            ..GfCheckReport::default()
        };
        if let Ok(d) = problem.check_demand_bound() {
            report.has_boundary = true;
            report.demand_bound = d.bound;
            report.demand = d.demand;
            report.demand_feasible = d.feasible;
        }
        *out = report;
        GfStatus::Ok
    })
}

/// Solves the problem. `options` may be null.
///
/// A run that stops without converging still succeeds; inspect
/// [`GfSummary::converged`].
///
/// # Safety
/// `problem` must be a live handle, `options` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gf_solve(
    problem: *const GfProblem,
    options: *const GfSolveOptions,
    out: *mut *mut GfSolution,
) -> GfStatus {
    guard(|| {
        let (Some(p), false) = (problem.as_ref(), out.is_null()) else {
            return fail(GfStatus::NullPointer, "problem or out is null");
        };
        *out = ptr::null_mut();
        let mut config = p.prepared.config.clone();
        if let Some(o) = options.as_ref() {
            if o.max_iters > 0 {
                config.max_iters = o.max_iters;
            }
            if o.rel_tol > 0.0 {
                config.rel_tol = o.rel_tol;
            }
        }
        gridflow::configure_threads();
        match solve(&p.spec.problem, &p.prepared.grid, &p.prepared.system, &config) {
            Ok(solution) => {
                *out = Box::into_raw(Box::new(GfSolution { solution }));
                GfStatus::Ok
            }
            Err(e) => fail(GfStatus::Solver, e.to_string()),
        }
    })
}

/// Releases a solution; null is ignored.
///
/// # Safety
/// `solution` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gf_solution_free(solution: *mut GfSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `solution` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gf_solution_summary(solution: *const GfSolution, out: *mut GfSummary) -> GfStatus {
    guard(|| {
        let (Some(s), false) = (solution.as_ref(), out.is_null()) else {
            return fail(GfStatus::NullPointer, "solution or out is null");
        };
        let s = &s.solution;
        *out = GfSummary {
            objective: s.objective.value,
            infeasible: s.objective.infeasible,
            converged: s.converged,
            iterations: s.iterations,
            primal_change: s.primal_change,
            operator_norm: s.operator_norm,
            tau: s.tau,
            sigma: s.sigma,
            wall_time: s.wall_time,
        };
        GfStatus::Ok
    })
}

/// Copies the final block residuals and tolerances, in block order, into
/// two buffers of at least [`GF_BLOCK_COUNT`] entries. `deltas` may be null.
///
/// # Safety
/// Non-null buffers must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gf_solution_residuals(
    solution: *const GfSolution,
    residuals: *mut f64,
    deltas: *mut f64,
    len: usize,
) -> GfStatus {
    guard(|| {
        let (Some(s), false) = (solution.as_ref(), residuals.is_null()) else {
            return fail(GfStatus::NullPointer, "solution or residuals is null");
        };
        if len < GF_BLOCK_COUNT {
            return fail(GfStatus::BufferTooSmall, format!("need {GF_BLOCK_COUNT} entries, got {len}"));
        }
        for (i, r) in s.solution.residuals.iter().enumerate() {
            *residuals.add(i) = r.residual;
            if !deltas.is_null() {
                *deltas.add(i) = r.delta;
            }
        }
        GfStatus::Ok
    })
}

/// Name of constraint block `index`, or null when out of range. The string is static.
#[no_mangle]
pub extern "C" fn gf_block_name(index: usize) -> *const c_char {
    const NAMES: [&CStr; GF_BLOCK_COUNT] = [
        c"continuity",
        c"edge_initial",
        c"edge_final",
        c"vertex_initial",
        c"vertex_final",
        c"coupling",
        c"vertex_ode",
        c"mass",
    ];
    debug_assert!(BlockKind::ALL.iter().zip(NAMES).all(|(k, n)| n.to_str() == Ok(k.name())));
    NAMES.get(index).map_or(ptr::null(), |n| n.as_ptr())
}

/// Borrows the primal vector. The pointer stays valid until the solution is freed.
///
/// # Safety
/// `solution` must be a live handle; `data` and `len` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gf_solution_primal(
    solution: *const GfSolution,
    data: *mut *const f64,
    len: *mut usize,
) -> GfStatus {
    guard(|| {
        let (Some(s), false, false) = (solution.as_ref(), data.is_null(), len.is_null()) else {
            return fail(GfStatus::NullPointer, "null argument");
        };
        *data = s.solution.u.0.as_ptr();
        *len = s.solution.u.0.len();
        GfStatus::Ok
    })
}

/// Borrows the total discrete mass at every time node.
///
/// # Safety
/// As [`gf_solution_primal`].
#[no_mangle]
pub unsafe extern "C" fn gf_solution_mass(
    solution: *const GfSolution,
    data: *mut *const f64,
    len: *mut usize,
) -> GfStatus {
    guard(|| {
        let (Some(s), false, false) = (solution.as_ref(), data.is_null(), len.is_null()) else {
            return fail(GfStatus::NullPointer, "null argument");
        };
        *data = s.solution.mass_history.as_ptr();
        *len = s.solution.mass_history.len();
        GfStatus::Ok
    })
}

/// Interface constants from the problem's `pipes` section: `d` gets one
/// entry per edge and `phi` one per vertex, in declaration order.
///
/// # Safety
/// `problem` must be a live handle; `d` and `phi` must hold `d_len` and
/// `phi_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gf_potentials(
    problem: *const GfProblem,
    d: *mut f64,
    d_len: usize,
    phi: *mut f64,
    phi_len: usize,
) -> GfStatus {
    guard(|| {
        let (Some(p), false, false) = (problem.as_ref(), d.is_null(), phi.is_null()) else {
            return fail(GfStatus::NullPointer, "null argument");
        };
        let graph = &p.spec.problem.graph;
        if d_len < graph.edge_count() || phi_len < graph.vertex_count() {
            return fail(
                GfStatus::BufferTooSmall,
                format!("need {} and {} entries", graph.edge_count(), graph.vertex_count()),
            );
        }
        let Some(pipes) = &p.spec.pipes else {
            return fail(GfStatus::Potential, "problem has no complete pipes section");
        };
        match potentials_from_pipes(graph, pipes) {
            Ok(sol) => {
                ptr::copy_nonoverlapping(sol.d.as_ptr(), d, sol.d.len());
                ptr::copy_nonoverlapping(sol.phi.as_ptr(), phi, sol.phi.len());
                GfStatus::Ok
            }
            Err(e) => {
                let status = status_of(&Error::from(e.clone()));
                fail(status, e.to_string())
            }
        }
    })
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gf_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"unknown",
    };
    VERSION.as_ptr()
}


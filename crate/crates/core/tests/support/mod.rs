//! Property suites shared by the `properties` and `acceptance` targets.
//!
//! Every suite returns `Err` with the failing case instead of panicking so
//! the acceptance report can print one line per suite.
#![allow(dead_code)]

use gridflow::discretize::{build_grid, EdgeField, GridFunctions, Layout, PrimalVector, Resolution, SlotSeries};
use gridflow::graph::{Edge, MetricGraph, Vertex, VertexKind};
use gridflow::io::{parse_problem_str, write_problem};
use gridflow::potentials::solve_potential_system;
use gridflow::problem::{BoundaryRegime, Coupling, DensityProfile, FluxProfile, TransportProblem};
use gridflow::solver::{helper_h, project_ball, prox_kinetic};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

pub const CASES: u32 = 1000;

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub const SUITES: [Suite; 12] = [
    ("h_homogeneity", h_homogeneity),
    ("h_convexity", h_convexity),
    ("projection_idempotent", projection_idempotent),
    ("projection_nonexpansive", projection_nonexpansive),
    ("prox_nonnegative_and_optimal", prox_nonnegative_and_optimal),
    ("quadrature_exactness", quadrature_exactness),
    ("layout_round_trip", layout_round_trip),
    ("file_round_trip", file_round_trip),
    ("graph_sum_formula", graph_sum_formula),
    ("potentials_linearity", potentials_linearity),
    ("potentials_relabeling", potentials_relabeling),
    ("boundary_profile_endpoints", boundary_profile_endpoints),
];

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

fn run<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![Just(2.0), 1.0..4.0f64]
}

pub fn h_homogeneity() -> Result<(), String> {
    run((-10.0..10.0f64, 1e-3..10.0f64, 1e-2..100.0f64, exponent()), |(a, b, t, p)| {
        let lhs = helper_h(t * a, t * b, p);
        let rhs = t * helper_h(a, b, p);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        Ok(())
    })
}

pub fn h_convexity() -> Result<(), String> {
    let pair = || (-10.0..10.0f64, 1e-3..10.0f64);
    run((pair(), pair(), exponent()), |((a1, b1), (a2, b2), p)| {
        let mid = helper_h(0.5 * (a1 + a2), 0.5 * (b1 + b2), p);
        let avg = 0.5 * (helper_h(a1, b1, p) + helper_h(a2, b2, p));
        prop_assert!(mid <= avg + 1e-10 * avg.max(1.0), "{mid} > {avg}");
        Ok(())
    })
}

fn ball_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
    (1usize..8).prop_flat_map(|n| {
        let v = || prop::collection::vec(-10.0..10.0f64, n);
        (v(), v(), v(), 0.0..5.0f64)
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn projection_idempotent() -> Result<(), String> {
    run(ball_case(), |(x, _, c, r)| {
        let mut once = x.clone();
        project_ball(&mut once, &c, r);
        let mut twice = once.clone();
        project_ball(&mut twice, &c, r);
        prop_assert!(dist(&once, &c) <= r * (1.0 + 1e-12) + 1e-12);
        prop_assert!(dist(&once, &twice) <= 1e-12 * (1.0 + r));
        Ok(())
    })
}

pub fn projection_nonexpansive() -> Result<(), String> {
    run(ball_case(), |(x, y, c, r)| {
        let (mut px, mut py) = (x.clone(), y.clone());
        project_ball(&mut px, &c, r);
        project_ball(&mut py, &c, r);
        prop_assert!(dist(&px, &py) <= dist(&x, &y) + 1e-12);
        Ok(())
    })
}

/// `½(ρ-ρ̃)² + ½(m-m̃)² + κ h(m, ρ, 2)`.
pub fn prox_objective(rho: f64, m: f64, r0: f64, m0: f64, kappa: f64) -> f64 {
    0.5 * (rho - r0).powi(2) + 0.5 * (m - m0).powi(2) + kappa * helper_h(m, rho, 2.0)
}

fn golden(lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if c <= a || d >= b {
            break;
        }
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Numeric minimizer of [`prox_objective`], independent of the closed form.
///
/// The objective is jointly convex, so the partial minimum over `m` is a
/// convex function of `ρ`. A grid scan of it brackets the minimum and
/// nested golden-section searches refine both coordinates.
pub fn brute_force_prox(r0: f64, m0: f64, kappa: f64) -> (f64, f64) {
    const N: usize = 200;
    let f = |r: f64, m: f64| prox_objective(r, m, r0, m0, kappa);
    let span = m0.abs() + 1.0;
    let best_m = |r: f64| golden(-span, span, |m| f(r, m));
    let reduced = |r: f64| f(r, best_m(r));
    let rmax = r0.max(0.0) + m0.abs() + 1.0;
    let h = rmax / N as f64;
    let (mut at, mut low) = (0, f(0.0, 0.0));
    for a in 1..=N {
        let v = reduced(a as f64 * h);
        if v < low {
            (at, low) = (a, v);
        }
    }
    let lo = (at as f64 - 1.0).max(0.0) * h;
    let r = golden(lo, (at as f64 + 1.0) * h, reduced);
    if f(0.0, 0.0) <= reduced(r) {
        return (0.0, 0.0);
    }
    (r, best_m(r))
}

pub fn prox_triple() -> impl Strategy<Value = (f64, f64, f64)> {
    (-2.0..3.0f64, -3.0..3.0f64, 0.01..2.0f64)
}

pub fn prox_nonnegative_and_optimal() -> Result<(), String> {
    run((prox_triple(), 0.0..5.0f64, -5.0..5.0f64), |((r0, m0, k), qr, qm)| {
        let (r, m) = prox_kinetic(r0, m0, k, 2.0).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(r >= 0.0);
        let at = prox_objective(r, m, r0, m0, k);
        // the clamped input itself and an arbitrary admissible point
        let clamped = if r0 > 0.0 { (r0, m0) } else { (0.0, 0.0) };
        prop_assert!(at <= prox_objective(clamped.0, clamped.1, r0, m0, k) + 1e-12);
        prop_assert!(at <= prox_objective(qr, qm, r0, m0, k) + 1e-12);
        Ok(())
    })
}

fn single_edge(length: f64) -> TransportProblem {
    let g = MetricGraph::new(
        vec![Vertex::new("a", VertexKind::Interior), Vertex::new("b", VertexKind::Interior)],
        vec![Edge::new("e", "a", "b", length)],
    )
    .expect("valid graph");
    TransportProblem::new(g)
}

pub fn quadrature_exactness() -> Result<(), String> {
    run((0.1..10.0f64, 2usize..300, -5.0..5.0f64, -5.0..5.0f64), |(len, n, a, b)| {
        let grid = build_grid(&single_edge(len), &Resolution::Uniform(n), 1).unwrap();
        let eg = &grid.edges[0];
        let values: Vec<f64> = (0..eg.nodes()).map(|i| a + b * eg.x(i)).collect();
        let exact = a * len + 0.5 * b * len * len;
        let got = eg.integrate(&values);
        let scale = (a.abs() * len + 0.5 * b.abs() * len * len).max(1e-300);
        prop_assert!((got - exact).abs() <= 1e-12 * scale, "{got} vs {exact}");
        Ok(())
    })
}

/// The branching tree in one of the six coupling/boundary modes.
pub fn branching_in_mode(coupling: Coupling, boundary: BoundaryRegime) -> TransportProblem {
    let (src, sink) = match boundary {
        BoundaryRegime::None => (VertexKind::Interior, VertexKind::Interior),
        _ => (VertexKind::Source, VertexKind::Sink),
    };
    let g = MetricGraph::new(
        vec![
            Vertex::new("v1", src),
            Vertex::new("v2", VertexKind::Interior),
            Vertex::new("v3", sink),
            Vertex::new("v4", sink),
        ],
        vec![
            Edge::new("e1", "v1", "v2", 1.0),
            Edge::new("e2", "v2", "v3", 0.8),
            Edge::new("e3", "v2", "v4", 1.3),
        ],
    )
    .expect("valid graph");
    let mut p = TransportProblem::new(g);
    p.coupling = coupling;
    p.boundary = boundary;
    p.set_densities("e1", DensityProfile::indicator(0.0, 0.4, 1.0), DensityProfile::constant(0.1))
        .unwrap();
    for e in ["e2", "e3"] {
        p.set_densities(e, DensityProfile::constant(0.05), DensityProfile::indicator(0.2, 0.6, 0.5))
            .unwrap();
    }
    if coupling == Coupling::Generalized {
        p.set_storage("v2", 0.2, 0.1).unwrap();
    }
    match boundary {
        BoundaryRegime::TimeDependent => {
            p.set_flux("v1", FluxProfile::Linear { slope: 1.0 }).unwrap();
            p.set_flux("v3", FluxProfile::Constant { value: 0.25 }).unwrap();
            p.set_flux("v4", FluxProfile::Zero).unwrap();
        }
        BoundaryRegime::TimeIndependent => {
            p.set_total("v1", 0.5).unwrap();
            p.set_total("v3", 0.2).unwrap();
            p.set_total("v4", 0.3).unwrap();
        }
        BoundaryRegime::None => {}
    }
    p.validate().expect("valid problem");
    p
}

pub const MODES: [(Coupling, BoundaryRegime); 6] = [
    (Coupling::Classical, BoundaryRegime::None),
    (Coupling::Generalized, BoundaryRegime::None),
    (Coupling::Classical, BoundaryRegime::TimeDependent),
    (Coupling::Generalized, BoundaryRegime::TimeDependent),
    (Coupling::Classical, BoundaryRegime::TimeIndependent),
    (Coupling::Generalized, BoundaryRegime::TimeIndependent),
];

pub fn layout_round_trip() -> Result<(), String> {
    let case = (0usize..6, (2usize..7, 2usize..7, 2usize..7), 1usize..5, any::<u64>());
    run(case, |(mode, (n1, n2, n3), nt, seed)| {
        use rand::{Rng, SeedableRng};
        let (c, b) = MODES[mode];
        let problem = branching_in_mode(c, b);
        let grid = build_grid(&problem, &Resolution::PerEdge(vec![n1, n2, n3]), nt).unwrap();
        let layout = Layout::new(&problem, &grid);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = PrimalVector((0..layout.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let f = layout.unpack(&u).unwrap();
        prop_assert_eq!(&layout.pack(&f).unwrap(), &u);

        let nt = grid.time_nodes();
        let funcs = GridFunctions {
            edges: layout
                .edges
                .iter()
                .map(|e| EdgeField {
                    rho: (0..e.len()).map(|_| rng.random()).collect(),
                    flux: (0..e.len()).map(|_| rng.random()).collect(),
                })
                .collect(),
            slots: layout
                .slots
                .iter()
                .map(|_| SlotSeries {
                    mass: (0..nt).map(|_| rng.random()).collect(),
                    flux: (0..nt).map(|_| rng.random()).collect(),
                })
                .collect(),
        };
        prop_assert_eq!(layout.unpack(&layout.pack(&funcs).unwrap()).unwrap(), funcs);
        Ok(())
    })
}

fn profile_json() -> impl Strategy<Value = String> {
    prop_oneof![
        (0.0..3.0f64).prop_map(|v| format!(r#"{{"type":"constant","value":{v}}}"#)),
        (0.0..0.5f64, 0.5..1.0f64, 0.0..2.0f64)
            .prop_map(|(a, b, h)| format!(r#"{{"type":"indicator","a":{a},"b":{b},"height":{h}}}"#)),
        (0.0..1.0f64, 0.05..1.0f64, 0.1..2.0f64, 0.1..3.0f64).prop_map(|(c, w, s, n)| format!(
            r#"{{"type":"gaussian","center":{c},"width":{w},"scale":{s},"normalize_to":{n}}}"#
        )),
        prop::collection::vec(0.0..2.0f64, 2..6).prop_map(|v| format!(
            r#"{{"type":"samples","values":[{}]}}"#,
            v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
        )),
    ]
}

fn flux_json() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(r#"{"type":"zero"}"#.to_string()),
        (0.0..2.0f64).prop_map(|v| format!(r#"{{"type":"constant","value":{v}}}"#)),
        (0.0..2.0f64).prop_map(|v| format!(r#"{{"type":"linear","slope":{v}}}"#)),
    ]
}

/// A random problem file on the four-vertex graph with a cycle.
fn problem_json() -> impl Strategy<Value = String> {
    let edges = || prop::collection::vec(profile_json(), 4);
    (
        (0.5..3.0f64, 1usize..20, prop_oneof![Just(2.0), 1.0..3.0f64]),
        prop::collection::vec((1.0..3.0f64, 2usize..40), 4),
        (any::<bool>(), 0usize..3),
        (edges(), edges()),
        prop::collection::vec(flux_json(), 3),
        prop::collection::vec(0.0..2.0f64, 5),
        (proptest::option::of(1usize..5000), proptest::option::of(1e-6..1e-2f64)),
    )
        .prop_map(|(meta, geo, (generalized, regime), (init, fin), fluxes, nums, (iters, delta))| {
            let boundary = ["none", "time_dependent", "time_independent"][regime];
            let kinds = if regime == 0 {
                ["interior"; 4]
            } else {
                ["source", "interior", "sink", "sink"]
            };
            let edge_ends = [("v1", "v2"), ("v2", "v3"), ("v2", "v4"), ("v3", "v4")];
            let vertices: Vec<String> = kinds
                .iter()
                .enumerate()
                .map(|(i, k)| format!(r#"{{"id":"v{}","kind":"{k}"}}"#, i + 1))
                .collect();
            let edges: Vec<String> = geo
                .iter()
                .zip(edge_ends)
                .enumerate()
                .map(|(i, ((l, n), (a, b)))| {
                    format!(r#"{{"id":"e{}","from":"{a}","to":"{b}","length":{l},"Nx":{n}}}"#, i + 1)
                })
                .collect();
            let side = |profiles: &[String], mass: f64| {
                let edges: Vec<String> = profiles
                    .iter()
                    .enumerate()
                    .map(|(i, p)| format!(r#""e{}":{p}"#, i + 1))
                    .collect();
                let vertices = if generalized {
                    format!(r#","vertices":{{"v2":{mass}}}"#)
                } else {
                    String::new()
                };
                format!(r#"{{"edges":{{{}}}{vertices}}}"#, edges.join(","))
            };
            let boundary_data = match regime {
                1 => format!(
                    r#","fluxes":{{"v1":{},"v3":{},"v4":{}}}"#,
                    fluxes[0], fluxes[1], fluxes[2]
                ),
                2 => format!(
                    r#","ti_totals":{{"v1":{},"v3":{},"v4":{}}}"#,
                    nums[2], nums[3], nums[4]
                ),
                _ => String::new(),
            };
            let mut solver = Vec::new();
            if let Some(n) = iters {
                solver.push(format!(r#""max_iters":{n}"#));
            }
            if let Some(d) = delta {
                solver.push(format!(r#""tolerances":{{"mass":{d}}}"#));
            }
            format!(
                r#"{{"meta":{{"T":{},"Nt":{},"p":{}}},"graph":{{"vertices":[{}],"edges":[{}]}},"coupling":"{}","boundary":"{boundary}","initial":{},"final":{}{boundary_data},"solver":{{{}}}}}"#,
                meta.0,
                meta.1,
                meta.2,
                vertices.join(","),
                edges.join(","),
                if generalized { "generalized" } else { "classical" },
                side(&init, nums[0]),
                side(&fin, nums[1]),
                solver.join(",")
            )
        })
}

pub fn file_round_trip() -> Result<(), String> {
    run(problem_json(), |text| {
        let spec = parse_problem_str(&text).map_err(|e| TestCaseError::fail(format!("{e}: {text}")))?;
        let written = write_problem(&spec);
        let again = parse_problem_str(&written).map_err(|e| TestCaseError::fail(format!("{e}: {written}")))?;
        prop_assert_eq!(&again, &spec);
        prop_assert_eq!(write_problem(&again), written);
        Ok(())
    })
}

fn random_multigraph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..9).prop_flat_map(|n| {
        let edge = (0..n, 0..n).prop_filter("no self-loops", |(a, b)| a != b);
        (Just(n), prop::collection::vec(edge, 1..16))
    })
}

fn build(n: usize, edges: &[(usize, usize)], lengths: impl Fn(usize) -> f64) -> MetricGraph {
    MetricGraph::new(
        (0..n).map(|i| Vertex::new(format!("v{i}"), VertexKind::Interior)).collect(),
        edges
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| Edge::new(format!("e{k}"), format!("v{a}"), format!("v{b}"), lengths(k)))
            .collect(),
    )
    .expect("valid graph")
}

pub fn graph_sum_formula() -> Result<(), String> {
    run(random_multigraph(), |(n, edges)| {
        let g = build(n, &edges, |_| 1.0);
        let total: usize = (0..n).map(|v| g.degree(v)).sum();
        prop_assert_eq!(total, 2 * edges.len());
        for (e, &(a, b)) in edges.iter().enumerate() {
            let out = g.incidence(a).outgoing.iter().filter(|&&x| x == e).count();
            let inc = g.incidence(b).incoming.iter().filter(|&&x| x == e).count();
            prop_assert_eq!((out, inc), (1, 1));
        }
        let appearances: usize = (0..n)
            .map(|v| g.incidence(v).incoming.len() + g.incidence(v).outgoing.len())
            .sum();
        prop_assert_eq!(appearances, 2 * edges.len());
        if g.is_simple_connected_acyclic() {
            prop_assert_eq!(edges.len() + 1, n);
        }
        Ok(())
    })
}

/// A random oriented tree on `n` vertices with slopes and lengths.
fn random_tree() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<f64>, Vec<f64>)> {
    (2usize..9).prop_flat_map(|n| {
        let parents: Vec<_> = (1..n).map(|v| (0..v, any::<bool>())).collect();
        (
            Just(n),
            parents,
            prop::collection::vec(-10.0..10.0f64, n - 1),
            prop::collection::vec(0.1..5.0f64, n - 1),
        )
            .prop_map(|(n, parents, c, l)| {
                let edges = parents
                    .iter()
                    .enumerate()
                    .map(|(i, &(p, flip))| if flip { (i + 1, p) } else { (p, i + 1) })
                    .collect();
                (n, edges, c, l)
            })
    })
}

pub fn potentials_linearity() -> Result<(), String> {
    run((random_tree(), -5.0..5.0f64), |((n, edges, c, l), t)| {
        let g = build(n, &edges, |k| l[k]);
        let base = solve_potential_system(&g, &c, &l).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let scaled_c: Vec<f64> = c.iter().map(|x| t * x).collect();
        let scaled = solve_potential_system(&g, &scaled_c, &l).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let size = c.iter().zip(&l).map(|(a, b)| (a * b).abs()).fold(1.0, f64::max);
        prop_assert!(base.d.iter().sum::<f64>().abs() <= 1e-12 * size);
        for (a, b) in base.d.iter().chain(&base.phi).zip(scaled.d.iter().chain(&scaled.phi)) {
            prop_assert!((t * a - b).abs() <= 1e-10 * size * t.abs().max(1.0), "{a} {b} {t}");
        }
        Ok(())
    })
}

pub fn potentials_relabeling() -> Result<(), String> {
    let case = random_tree().prop_flat_map(|t| {
        let m = t.1.len();
        (Just(t), Just((0..m).collect::<Vec<_>>()).prop_shuffle())
    });
    run(case, |((n, edges, c, l), perm)| {
        let g = build(n, &edges, |k| l[k]);
        let base = solve_potential_system(&g, &c, &l).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let pe: Vec<_> = perm.iter().map(|&k| edges[k]).collect();
        let pc: Vec<f64> = perm.iter().map(|&k| c[k]).collect();
        let pl: Vec<f64> = perm.iter().map(|&k| l[k]).collect();
        let pg = build(n, &pe, |k| pl[k]);
        let permuted = solve_potential_system(&pg, &pc, &pl).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let size = c.iter().zip(&l).map(|(a, b)| (a * b).abs()).fold(1.0, f64::max);
        for (new, &old) in perm.iter().enumerate() {
            prop_assert!((permuted.d[new] - base.d[old]).abs() <= 1e-10 * size);
        }
        Ok(())
    })
}

pub fn boundary_profile_endpoints() -> Result<(), String> {
    let flux = prop_oneof![
        Just(FluxProfile::Zero),
        (0.0..3.0f64).prop_map(|value| FluxProfile::Constant { value }),
        (0.0..3.0f64).prop_map(|slope| FluxProfile::Linear { slope }),
    ];
    run((flux.clone(), flux, 0.1..5.0f64, 0.0..1.0f64, 0.0..1.0f64), |(fs, fd, horizon, a, b)| {
        let mut p = branching_in_mode(Coupling::Classical, BoundaryRegime::TimeDependent);
        p.horizon = horizon;
        p.set_flux("v1", fs).unwrap();
        p.set_flux("v3", fd).unwrap();
        let s = |t: f64| p.boundary_mass_profile("v1", t).unwrap();
        let d = |t: f64| p.boundary_mass_profile("v3", t).unwrap();
        let tol = 1e-12 * (1.0 + horizon * horizon);
        prop_assert!(s(horizon).abs() <= tol);
        prop_assert!((s(0.0) - fs.integral(0.0, horizon)).abs() <= tol);
        prop_assert!(d(0.0).abs() <= tol);
        prop_assert!((d(horizon) - fd.integral(0.0, horizon)).abs() <= tol);
        let (t0, t1) = (horizon * a.min(b), horizon * a.max(b));
        prop_assert!(s(t1) <= s(t0) + tol && d(t0) <= d(t1) + tol);
        Ok(())
    })
}

mod support;

macro_rules! suites {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = support::$name() {
                    panic!("{e}");
                }
            }
        )*
    };
}

suites!(
    h_homogeneity,
    h_convexity,
    projection_idempotent,
    projection_nonexpansive,
    prox_nonnegative_and_optimal,
    quadrature_exactness,
    layout_round_trip,
    file_round_trip,
    graph_sum_formula,
    potentials_linearity,
    potentials_relabeling,
    boundary_profile_endpoints,
);

#[test]
fn prox_matches_brute_force_on_fixed_cases() {
    for &(r0, m0, k) in &[(1.0, 1.0, 0.5), (-0.5, 2.0, 0.1), (0.0, 0.0, 1.0), (2.5, -3.0, 1.7)] {
        let exact = gridflow::solver::prox_kinetic(r0, m0, k, 2.0).unwrap();
        let brute = support::brute_force_prox(r0, m0, k);
        assert!((exact.0 - brute.0).abs() < 1e-6 && (exact.1 - brute.1).abs() < 1e-6, "{exact:?} {brute:?}");
    }
}


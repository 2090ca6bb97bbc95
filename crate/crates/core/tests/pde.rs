use optdiv::boundary::{solve_integral_equation, IeSolution};
use optdiv::pde::{
    extract_boundary, integrate_v, shape_invariants, solve_u, trivial_value,
    verification_residuals, Scheme, VerificationTolerances,
};
use optdiv::{Boundary, IeSolverConfig, ModelParams, PdeConfig, TimeGrid, ValueSurface};
use proptest::prelude::*;

fn bench() -> ModelParams {
    ModelParams::new(0.5, 1.0, 0.05, 1.0).unwrap()
}

struct Run {
    u: ValueSurface,
    v: ValueSurface,
    b: Boundary,
    cfg: PdeConfig,
}

fn run(p: &ModelParams, steps: usize, cells: usize) -> Run {
    let cfg = PdeConfig::desk_scale(p, steps, cells).unwrap();
    let u = solve_u(p, &cfg).unwrap();
    let v = integrate_v(&u).unwrap();
    let b = extract_boundary(&u, p).unwrap();
    Run { u, v, b, cfg }
}

// Same solver on a 3200-step, 1600-cell grid.
const FINE_U_0_0: f64 = 1.99372;
const FINE_V_0_1: f64 = 1.399697;
const FINE_V_HALF_1: f64 = 1.217783;
const FINE_V_0_HALF: f64 = 0.806764;

#[test]
fn values_approach_the_fine_grid_solution() {
    let r = run(&bench(), 800, 400);
    assert!(
        (r.u.at(0.0, 0.0) - FINE_U_0_0).abs() < 2e-3,
        "{}",
        r.u.at(0.0, 0.0)
    );
    assert!(
        (r.v.at(0.0, 1.0) - FINE_V_0_1).abs() < 1e-3,
        "{}",
        r.v.at(0.0, 1.0)
    );
    assert!(
        (r.v.at(0.5, 1.0) - FINE_V_HALF_1).abs() < 1e-3,
        "{}",
        r.v.at(0.5, 1.0)
    );
    assert!(
        (r.v.at(0.0, 0.5) - FINE_V_0_HALF).abs() < 1e-3,
        "{}",
        r.v.at(0.0, 0.5)
    );
}

#[test]
fn terminal_rows_are_exact() {
    let r = run(&bench(), 100, 100);
    let last = r.u.values.nrows() - 1;
    for (j, &x) in r.u.space_grid.nodes().iter().enumerate() {
        assert_eq!(r.u.values[[last, j]], 1.0);
        assert_eq!(r.v.values[[last, j]], x);
    }
    assert_eq!(*r.b.values().last().unwrap(), 0.0);
}

#[test]
fn stopping_region_is_flat_and_value_dominates_x() {
    let r = run(&bench(), 200, 200);
    let x = r.u.space_grid.nodes();
    let h = x[1] - x[0];
    for (k, &t) in r.u.time_grid.nodes().iter().enumerate() {
        for (j, &xj) in x.iter().enumerate() {
            if xj > r.b.at(t) + 2.0 * h {
                assert_eq!(r.u.values[[k, j]], 1.0, "t={t} x={xj}");
            }
            assert!(r.v.values[[k, j]] >= xj - 1e-12);
        }
    }
}

#[test]
fn verification_conditions_hold_on_a_moderate_grid() {
    let p = bench();
    let r = run(&p, 400, 200);
    let tol = VerificationTolerances::for_grids(&r.cfg.time_grid, &r.cfg.space_grid, 1.0);
    let report = verification_residuals(&r.v, &r.b, &p, &tol).unwrap();
    assert!(
        report.all_pass(),
        "{:?}",
        report.failures().collect::<Vec<_>>()
    );
    let shape = shape_invariants(&r.u, &r.v, &r.b, 1e-8).unwrap();
    assert!(
        shape.all_pass(),
        "{:?}",
        shape.failures().collect::<Vec<_>>()
    );
}

#[test]
fn generator_residual_decays_at_first_order() {
    let p = bench();
    let residual = |steps, cells| {
        let r = run(&p, steps, cells);
        let tol = VerificationTolerances::for_grids(&r.cfg.time_grid, &r.cfg.space_grid, 1.0);
        verification_residuals(&r.v, &r.b, &p, &tol)
            .unwrap()
            .get("generator_continuation_iv")
            .unwrap()
            .value
    };
    let coarse = residual(200, 100);
    let fine = residual(400, 200);
    assert!(coarse / fine >= 2.0, "{coarse} -> {fine}");
}

#[test]
fn schemes_agree() {
    let p = bench();
    let value = |scheme| {
        let mut cfg = PdeConfig::desk_scale(&p, 400, 200).unwrap();
        cfg.scheme = scheme;
        integrate_v(&solve_u(&p, &cfg).unwrap())
            .unwrap()
            .at(0.0, 1.0)
    };
    let bdf2 = value(Scheme::Bdf2Projected);
    let cn = value(Scheme::CrankNicolsonProjected);
    let implicit = value(Scheme::ImplicitProjected);
    assert!((bdf2 - cn).abs() < 1e-3, "{bdf2} {cn}");
    assert!((bdf2 - implicit).abs() < 5e-3, "{bdf2} {implicit}");
}

#[test]
fn boundary_matches_the_integral_equation() {
    let p = bench();
    let r = run(&p, 400, 400);
    let ie: IeSolution<f64> = solve_integral_equation(
        &p,
        &IeSolverConfig::with_defaults(&p, TimeGrid::uniform(1.0, 200).unwrap()),
    )
    .unwrap();
    let h = 4.0 / 400.0;
    for (k, &t) in ie
        .boundary
        .grid()
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, &t)| t <= 0.95)
    {
        let gap = (ie.boundary.values()[k] - r.b.at(t)).abs();
        assert!(gap <= 2.0 * h, "t={t} gap={gap}");
    }
}

#[test]
fn non_positive_drift_value_is_x() {
    for mu in [0.0, -0.3] {
        let p = ModelParams::new(mu, 1.0, 0.05, 1.0).unwrap();
        for x in [0.0, 0.3, 2.5] {
            assert_eq!(trivial_value(&p, 0.0, x).unwrap(), x);
        }
        assert!(solve_u(&p, &PdeConfig::desk_scale(&p, 10, 10).unwrap()).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn shape_invariants_hold_across_parameters(
        mu in 0.1f64..1.5,
        sigma in 0.4f64..2.0,
        r in 0.0f64..0.2,
        horizon in 0.3f64..2.0,
    ) {
        let p = ModelParams::new(mu, sigma, r, horizon).unwrap();
        let x_max = 4.0 * sigma * horizon.sqrt();
        let cfg = PdeConfig::desk_scale(&p, 60, 60).unwrap();
        let u = solve_u(&p, &cfg).unwrap();
        let v = integrate_v(&u).unwrap();
        let b = extract_boundary(&u, &p).unwrap();
        prop_assume!(b.values()[0] < x_max / 2.0);
        let report = shape_invariants(&u, &v, &b, 1e-8).unwrap();
        prop_assert!(report.all_pass(), "{:?}", report.failures().collect::<Vec<_>>());
    }
}

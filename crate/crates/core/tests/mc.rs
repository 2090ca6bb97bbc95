use optdiv::boundary::solve_integral_equation;
use optdiv::mc::{
    dividend_path_record, simulate_stopping_value, simulate_suboptimal, stopping_path_record,
    ux_representation_estimate, McConfig,
};
use optdiv::pde::solve_u;
use optdiv::{Boundary, ConstantBarrier, IeSolverConfig, ModelParams, PdeConfig, TimeGrid};
use proptest::prelude::*;

fn bench() -> ModelParams {
    ModelParams::new(0.5, 1.0, 0.05, 1.0).unwrap()
}

fn ie_boundary(p: &ModelParams) -> Boundary {
    let cfg = IeSolverConfig::with_defaults(p, TimeGrid::uniform(p.horizon(), 200).unwrap());
    solve_integral_equation(p, &cfg).unwrap().boundary
}

// Value of the constant barrier 1.4 at (t, x) = (0.5, 1.0) from a separate
// Crank–Nicolson solve of L W = 0 on (0, 1.4) with W(t, 0) = 0,
// W_x(t, 1.4) = 1 and W(T, x) = 0.
const CONSTANT_BARRIER_FD: f64 = 0.3573566;

#[test]
fn constant_barrier_matches_finite_difference_oracle() {
    let e =
        simulate_suboptimal(&bench(), 1.4, 0.5, 1.0, &McConfig::new(100_000, 1e-3, 11)).unwrap();
    assert!(
        e.z_score(CONSTANT_BARRIER_FD) <= 3.0,
        "{} +- {}",
        e.mean,
        e.std_error
    );
}

#[test]
fn halving_the_step_stays_within_noise() {
    let p = bench();
    let coarse = simulate_suboptimal(&p, 1.0, 0.0, 0.5, &McConfig::new(40_000, 4e-3, 3)).unwrap();
    let fine = simulate_suboptimal(&p, 1.0, 0.0, 0.5, &McConfig::new(40_000, 2e-3, 4)).unwrap();
    let se = coarse.std_error.hypot(fine.std_error);
    assert!(
        (coarse.mean - fine.mean).abs() <= 2.0 * se,
        "{} vs {} (se {se})",
        coarse.mean,
        fine.mean
    );
}

#[test]
fn stopping_value_and_slope_match_the_pde() {
    let p = bench();
    let b = ie_boundary(&p);
    let u = solve_u(&p, &PdeConfig::desk_scale(&p, 400, 400).unwrap()).unwrap();
    let cfg = McConfig::new(40_000, 2e-3, 5);
    for &(t, x) in &[(0.0, 0.0), (0.0, 0.5), (0.5, 0.25)] {
        let e = simulate_stopping_value(&p, &b, t, x, &cfg).unwrap();
        assert!(
            e.z_score(u.at(t, x)) <= 3.0,
            "U({t},{x}) = {} vs {} +- {}",
            u.at(t, x),
            e.mean,
            e.std_error
        );
    }
    let slope = ux_representation_estimate(&p, &b, 0.0, 0.0, &cfg).unwrap();
    let robin = -p.lambda() * u.at(0.0, 0.0);
    assert!(
        slope.z_score(robin) <= 3.0,
        "{robin} vs {} +- {}",
        slope.mean,
        slope.std_error
    );
}

#[test]
fn antithetic_pairs_reduce_the_standard_error() {
    let p = bench();
    let b = ConstantBarrier(1.0);
    let paired = McConfig::new(20_000, 1e-2, 9);
    let mut plain = paired;
    plain.antithetic = false;
    let a = simulate_stopping_value(&p, &b, 0.0, 0.3, &paired).unwrap();
    let c = simulate_stopping_value(&p, &b, 0.0, 0.3, &plain).unwrap();
    assert!(
        a.std_error < c.std_error,
        "{} vs {}",
        a.std_error,
        c.std_error
    );
    assert!((a.mean - c.mean).abs() <= 3.0 * a.std_error.hypot(c.std_error));
}

#[test]
fn reflected_path_is_the_skorokhod_map() {
    let p = bench();
    let b = ConstantBarrier(1.5);
    let mut cfg = McConfig::new(2, 1e-2, 13);
    // Without the bridge maximum the running max is the max over step ends.
    cfg.bridge_correction = false;
    let x = 0.2;
    for path in 0..40 {
        let rec = stopping_path_record(&p, &b, 0.0, x, &cfg, path).unwrap();
        assert_eq!(
            (rec.times[0], rec.reflected[0], rec.local_time[0]),
            (0.0, x, 0.0)
        );
        let mut running_max: f64 = 0.0;
        for k in 0..rec.reflected.len() {
            let y = x + rec.local_time[k] - rec.reflected[k];
            running_max = running_max.max(y);
            assert!(rec.reflected[k] >= 0.0);
            assert!(
                (x.max(running_max) - x - rec.local_time[k]).abs() < 1e-12,
                "path {path} step {k}"
            );
        }
        let n = rec.reflected.len();
        assert!(rec.reflected[..n - 1].iter().all(|&v| v < 1.5));
        assert!(rec.reflected[n - 1] >= 1.5 || rec.stopping_time == 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dividends_never_exceed_the_fund(x in 0.0f64..3.0, c in 0.05f64..2.5, seed in 0u64..1000, path in 0u64..100) {
        let p = bench();
        let rec = dividend_path_record(&p, &ConstantBarrier(c), 0.0, x, &McConfig::new(2, 1e-2, seed), path).unwrap();
        let mut previous = 0.0;
        for k in 0..rec.times.len() {
            let inc = rec.dividends[k] - previous;
            previous = rec.dividends[k];
            prop_assert!(inc >= 0.0);
            prop_assert!(inc == 0.0 || inc <= rec.pre_payment[k] + 1e-12);
            prop_assert!(rec.fund[k] >= 0.0 && rec.fund[k] <= c.max(x) + 1e-12);
        }
        prop_assert!((rec.dividends[0] - (x - c).max(0.0)).abs() < 1e-12 || rec.times[0] > 0.0);
    }
}

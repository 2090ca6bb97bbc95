use optdiv::boundary::{
    boundary_asymptote, ie_residual, solve_integral_equation, IeKernel, IeSolution,
};
use optdiv::pde::{extract_boundary, solve_u};
use optdiv::{Boundary, IeSolverConfig, ModelParams, PdeConfig, TimeGrid};
use proptest::prelude::*;

fn bench() -> ModelParams {
    ModelParams::new(0.5, 1.0, 0.05, 1.0).unwrap()
}

fn solve(p: &ModelParams, steps: usize) -> IeSolution<f64> {
    let cfg = IeSolverConfig::with_defaults(p, TimeGrid::uniform(p.horizon(), steps).unwrap());
    solve_integral_equation(p, &cfg).unwrap()
}

fn shifted(b: &Boundary, shift: f64) -> Boundary {
    let values = b.values().iter().map(|v| (v + shift).max(0.0)).collect();
    Boundary::from_raw(b.grid().clone(), values).unwrap()
}

#[test]
fn barrier_ends_at_zero_and_decreases() {
    let sol = solve(&bench(), 100);
    let v = sol.boundary.values();
    assert_eq!(*v.last().unwrap(), 0.0);
    assert!(v.windows(2).all(|w| w[1] <= w[0]));
    assert!(v[..v.len() - 1].iter().all(|&b| b > 0.0));
    assert!(sol.residuals.iter().all(|r| r.abs() <= 1e-5));
}

#[test]
fn residual_sign_separates_low_and_high_curves() {
    let p = bench();
    let sol = solve(&p, 100);
    let zero = shifted(&sol.boundary, -10.0);
    let high = shifted(&sol.boundary, 1.0);
    for &t in &[0.0, 0.25, 0.5, 0.8] {
        assert!(ie_residual(&zero, t, &p).unwrap() > 0.0, "t={t}");
        assert!(ie_residual(&high, t, &p).unwrap() < 0.0, "t={t}");
    }
}

#[test]
fn survival_kernel_gives_the_same_barrier() {
    let p = bench();
    let grid = TimeGrid::uniform(1.0, 100).unwrap();
    let weighted =
        solve_integral_equation(&p, &IeSolverConfig::with_defaults(&p, grid.clone())).unwrap();
    let mut cfg = IeSolverConfig::with_defaults(&p, grid);
    cfg.kernel = IeKernel::Survival;
    let survival = solve_integral_equation(&p, &cfg).unwrap();
    let gap = weighted
        .boundary
        .values()
        .iter()
        .zip(survival.boundary.values())
        .take(90)
        .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(gap < 5e-3, "{gap}");
}

#[test]
fn time_refinement_converges() {
    let p = bench();
    let b0 = |n| solve(&p, n).boundary.values()[0];
    let (a, b, c) = (b0(100), b0(200), b0(400));
    assert!((c - b).abs() <= (b - a).abs() + 1e-6, "{a} {b} {c}");
    assert!((c - b).abs() < 1e-3);
}

#[test]
fn near_horizon_ratio_to_asymptote_is_order_one() {
    let p = bench();
    let sol = solve(&p, 200);
    let n = sol.boundary.values().len();
    for k in (n - 7)..(n - 2) {
        let t = sol.boundary.grid().nodes()[k];
        let ratio = sol.boundary.values()[k] / boundary_asymptote(t, &p).unwrap();
        assert!((0.5..=2.0).contains(&ratio), "t={t} ratio={ratio}");
    }
}

#[test]
fn integral_equation_and_pde_agree_on_a_coarse_grid() {
    let p = bench();
    let ie = solve(&p, 100);
    let cfg = PdeConfig::desk_scale(&p, 200, 200).unwrap();
    let dx = 4.0 / 200.0;
    let pde = extract_boundary(&solve_u(&p, &cfg).unwrap(), &p).unwrap();
    for (k, &t) in ie.boundary.grid().nodes().iter().enumerate() {
        if t > 0.95 {
            break;
        }
        let gap = (ie.boundary.values()[k] - pde.at(t)).abs();
        assert!(gap <= 2.0 * dx, "t={t} gap={gap}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn barrier_is_monotone_for_other_parameters(mu in 0.1f64..1.5, sigma in 0.4f64..2.0, r in 0.0f64..0.2) {
        let p = ModelParams::new(mu, sigma, r, 1.0).unwrap();
        let sol = solve(&p, 40);
        let v = sol.boundary.values();
        prop_assert_eq!(*v.last().unwrap(), 0.0);
        prop_assert!(v.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(sol.residuals.iter().all(|r| r.abs() <= 1e-5));
    }
}

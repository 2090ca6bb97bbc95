//! Cross-validation of the integral-equation, PDE and Monte Carlo routes.
//!
//! [`run`] turns a [`RunConfig`] into a [`VerificationReport`]. Solver failures
//! become failed rows so that a report is always produced; only invalid
//! configurations are returned as errors.

use crate::boundary::{boundary_asymptote, ie_residual_with, solve_integral_equation, IeSolution};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::fmt_sig;
use crate::mc::{
    simulate_dividend_value, simulate_stopping_value, simulate_suboptimal,
    ux_representation_estimate, McEstimate,
};
use crate::model::{Boundary, ModelParams};
use crate::pde::{
    check_xmax, creation_residual, extract_boundary_with_tol, integrate_v, shape_invariants,
    smooth_fit_residual, solve_u, trivial_value, verification_residuals, ValueSurface,
    VerificationTolerances,
};
use crate::report::{CheckRow, VerificationReport};

/// Tolerance of the discrete shape checks.
pub const SHAPE_TOL: f64 = 1e-8;
/// Bound on the integral-equation residual at solved nodes.
pub const IE_RESIDUAL_TOL: f64 = 1e-5;
/// Number of trailing boundary nodes in the asymptote trend.
pub const TREND_NODES: usize = 5;
/// Fraction of the horizon used by the cross-method and residual checks.
pub const ACCURACY_FRACTION: f64 = 0.95;
/// Fraction of the horizon used by the smooth-fit check.
pub const SMOOTH_FIT_FRACTION: f64 = 0.9;

/// One Monte Carlo estimate with its label and starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub label: String,
    pub t: f64,
    pub x: f64,
    pub estimate: McEstimate<f64>,
}

/// `U`, `V` and the barrier extracted from `U`.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub u: ValueSurface<f64>,
    pub v: ValueSurface<f64>,
    pub boundary: Boundary<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyRun {
    pub report: VerificationReport,
    /// Messages of solver errors that were turned into failed rows.
    pub errors: Vec<String>,
}

pub fn solve_boundary(cfg: &RunConfig) -> Result<IeSolution<f64>> {
    solve_integral_equation(&cfg.params()?, &cfg.ie_config()?)
}

pub fn solve_pde(cfg: &RunConfig) -> Result<PdeSolution> {
    let params = cfg.params()?;
    let pde = cfg.pde_config()?;
    let u = solve_u(&params, &pde)?;
    let boundary = extract_boundary_with_tol(&u, &params, pde.boundary_extract_tol)?;
    let v = integrate_v(&u)?;
    Ok(PdeSolution { u, v, boundary })
}

/// Label of the constant-barrier run at `fraction * b(0)`.
pub fn suboptimal_label(fraction: f64) -> String {
    format!("suboptimal_{}", fmt_sig(fraction))
}

/// Dividend and stopping values at every checkpoint, `U_x` representations at
/// the configured points, and constant barriers `c = f b(0)` (including
/// `f = 0`) started from `(0, suboptimal_x)`.
pub fn simulate_all(cfg: &RunConfig, b: &Boundary<f64>) -> Result<Vec<EstimateRow>> {
    let params = cfg.params()?;
    let mc = cfg.mc_config()?;
    cfg.validate_checkpoints()?;
    let mut rows = Vec::new();
    let mut push = |label: String, t: f64, x: f64, estimate: McEstimate<f64>| {
        rows.push(EstimateRow {
            label,
            t,
            x,
            estimate,
        })
    };
    for &[t, x] in &cfg.checkpoints {
        push(
            "dividend".into(),
            t,
            x,
            simulate_dividend_value(&params, b, t, x, &mc)?,
        );
        push(
            "stopping".into(),
            t,
            x,
            simulate_stopping_value(&params, b, t, x, &mc)?,
        );
    }
    for &[t, x] in &cfg.verify.ux_points {
        push(
            "ux".into(),
            t,
            x,
            ux_representation_estimate(&params, b, t, x, &mc)?,
        );
    }
    let b0 = b.values()[0];
    let x = cfg.verify.suboptimal_x;
    let mut fractions = vec![0.0];
    fractions.extend(
        cfg.verify
            .suboptimal_fractions
            .iter()
            .copied()
            .filter(|&f| f != 0.0),
    );
    for f in fractions {
        push(
            suboptimal_label(f),
            0.0,
            x,
            simulate_suboptimal(&params, f * b0, 0.0, x, &mc)?,
        );
    }
    Ok(rows)
}

/// Report for non-positive drift: the routed value is `x` at every checkpoint.
pub fn trivial_report(cfg: &RunConfig) -> Result<VerificationReport> {
    let params = cfg.params()?;
    let mut worst: f64 = 0.0;
    for &[t, x] in &cfg.checkpoints {
        worst = worst.max((trivial_value(&params, t, x)? - x).abs());
    }
    let mut report = VerificationReport::default();
    report.push(CheckRow::at_most("trivial_value_equals_x", worst, 0.0));
    Ok(report)
}

fn point_name(prefix: &str, t: f64, x: f64) -> String {
    format!("{prefix}[t={};x={}]", fmt_sig(t), fmt_sig(x))
}

/// `|mean - reference| / std_error`, infinite for an exact estimate that misses.
fn z_score(e: &McEstimate<f64>, reference: f64) -> f64 {
    if e.std_error == 0.0 && e.mean != reference {
        f64::INFINITY
    } else {
        e.z_score(reference)
    }
}

/// `(mean - reference) / std_error` with the sign kept.
fn signed_z(e: &McEstimate<f64>, reference: f64) -> f64 {
    let d = e.mean - reference;
    if d == 0.0 {
        0.0
    } else {
        d / e.std_error
    }
}

/// `max |b_pde - b_ie|` over nodes with `t <= fraction T`.
pub fn boundary_gap(b_pde: &Boundary<f64>, b_ie: &Boundary<f64>, fraction: f64) -> f64 {
    let limit = fraction * b_pde.grid().horizon() * (1.0 + 1e-12);
    b_pde
        .grid()
        .nodes()
        .iter()
        .zip(b_pde.values())
        .filter(|(&t, _)| t <= limit)
        .map(|(&t, &b)| (b - b_ie.at(t)).abs())
        .fold(0.0, f64::max)
}

/// Ratios `b(t) / asymptote(t)` at the last `count` nodes with `t <= T - 2 dt`.
///
/// The node one step before `T` is left out: its equation sees the barrier
/// only through a single linear cell.
pub fn asymptote_ratios(
    b: &Boundary<f64>,
    params: &ModelParams<f64>,
    count: usize,
) -> Result<Vec<(f64, f64)>> {
    let t = b.grid().nodes();
    let n = t.len();
    if n < count + 2 {
        return Err(Error::InvalidGrid(format!(
            "asymptote trend needs at least {} nodes",
            count + 2
        )));
    }
    (n - 2 - count..n - 2)
        .map(|k| Ok((t[k], b.values()[k] / boundary_asymptote(t[k], params)?)))
        .collect()
}

/// Successive ratios that fail to move strictly closer to one.
pub fn trend_violations(ratios: &[(f64, f64)]) -> usize {
    ratios
        .windows(2)
        .filter(|w| (w[1].1 - 1.0).abs() >= (w[0].1 - 1.0).abs())
        .count()
}

fn ie_checks(
    cfg: &RunConfig,
    params: &ModelParams<f64>,
    ie: &IeSolution<f64>,
    report: &mut VerificationReport,
) -> Result<()> {
    let b = &ie.boundary;
    let t = b.grid().nodes();
    let mut worst: f64 = 0.0;
    for (k, &tk) in t[..t.len() - 1].iter().enumerate() {
        if k < ie.first_patched {
            let res = ie_residual_with(b, tk, params, cfg.ie.quad_subdivisions, cfg.ie.kernel)?;
            worst = worst.max(res.abs());
        }
    }
    report.push(CheckRow::at_most("ie_residual_max", worst, IE_RESIDUAL_TOL));

    let ratios = asymptote_ratios(b, params, TREND_NODES)?;
    let last = ratios.last().map_or(f64::NAN, |r| r.1);
    report.push(CheckRow::at_most(
        "asymptote_trend_violations",
        trend_violations(&ratios) as f64,
        0.0,
    ));
    report.push(CheckRow::at_least("asymptote_ratio_latest_min", last, 0.5));
    report.push(CheckRow::at_most("asymptote_ratio_latest_max", last, 1.5));
    Ok(())
}

fn pde_checks(
    cfg: &RunConfig,
    params: &ModelParams<f64>,
    pde: &PdeSolution,
    ie: Option<&IeSolution<f64>>,
    report: &mut VerificationReport,
) -> Result<()> {
    let grid = cfg.space_grid()?;
    let dx = grid.nodes()[1] - grid.nodes()[0];
    let PdeSolution { u, v, boundary: b } = pde;

    report.push(CheckRow::at_least(
        "x_max_over_b0",
        cfg.x_max() / b.values()[0],
        2.0,
    ));
    if let Some(ie) = ie {
        report.push(CheckRow::at_most(
            "boundary_gap_ie_pde",
            boundary_gap(b, &ie.boundary, ACCURACY_FRACTION),
            2.0 * dx,
        ));
    }

    let mut connection: f64 = 0.0;
    for &[t, x] in &cfg.checkpoints {
        connection = connection.max((v.x_derivative_at(t, x)? - u.at(t, x)).abs());
    }
    report.push(CheckRow::at_most(
        "connection_vx_minus_u",
        connection,
        5.0 * dx,
    ));

    let max_abs = |rows: Vec<(f64, f64)>| rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    report.push(CheckRow::at_most(
        "smooth_fit_max",
        max_abs(smooth_fit_residual(u, b, SMOOTH_FIT_FRACTION)?),
        10.0 * dx,
    ));
    report.push(CheckRow::at_most(
        "creation_max",
        max_abs(creation_residual(u, params, ACCURACY_FRACTION)?),
        10.0 * dx,
    ));

    let tol = VerificationTolerances::for_grids(
        &v.time_grid,
        &v.space_grid,
        cfg.verify.generator_constant,
    );
    report.extend(verification_residuals(v, b, params, &tol)?);
    report.extend(shape_invariants(u, v, b, SHAPE_TOL)?);

    let n = u.space_grid.count();
    let last = u.time_grid.count() - 1;
    let terminal_u = (0..n)
        .map(|j| (u.values[[last, j]] - 1.0).abs())
        .fold(0.0, f64::max);
    let terminal_v = (0..n)
        .map(|j| (v.values[[last, j]] - v.space_grid.nodes()[j]).abs())
        .fold(0.0, f64::max);
    report.push(CheckRow::at_most("terminal_u_equals_one", terminal_u, 0.0));
    report.push(CheckRow::at_most("terminal_v_equals_x", terminal_v, 0.0));
    Ok(())
}

/// Same problem on grids refined by two in both variables.
fn refinement_checks(
    cfg: &RunConfig,
    params: &ModelParams<f64>,
    pde: &PdeSolution,
    ie: &IeSolution<f64>,
    run: &mut VerifyRun,
) -> Result<()> {
    let mut fine = cfg.clone();
    fine.grids.time_steps *= 2;
    fine.grids.space_cells *= 2;
    let solved = solve_boundary(&fine).and_then(|ie_fine| Ok((ie_fine, solve_pde(&fine)?)));
    let (ie_fine, pde_fine) = match solved {
        Ok(s) => s,
        Err(e) => {
            run.report.push(CheckRow::failed("refinement_solve"));
            run.errors.push(format!("refined solve: {e}"));
            return Ok(());
        }
    };
    let gap = boundary_gap(&pde.boundary, &ie.boundary, ACCURACY_FRACTION);
    let gap_fine = boundary_gap(&pde_fine.boundary, &ie_fine.boundary, ACCURACY_FRACTION);
    run.report.push(CheckRow::at_least(
        "boundary_gap_refinement_ratio",
        gap / gap_fine,
        2.0,
    ));

    let generator = |p: &PdeSolution, c: &RunConfig| -> Result<f64> {
        let tol = VerificationTolerances::for_grids(
            &p.v.time_grid,
            &p.v.space_grid,
            c.verify.generator_constant,
        );
        let rep = verification_residuals(&p.v, &p.boundary, params, &tol)?;
        Ok(rep
            .get("generator_continuation_iv")
            .map_or(f64::NAN, |r| r.value))
    };
    let ratio = generator(pde, cfg)? / generator(&pde_fine, &fine)?;
    run.report
        .push(CheckRow::at_least("generator_refinement_ratio", ratio, 2.0));
    Ok(())
}

fn mc_checks(
    cfg: &RunConfig,
    params: &ModelParams<f64>,
    pde: &PdeSolution,
    rows: &[EstimateRow],
    report: &mut VerificationReport,
) {
    let (u, v) = (&pde.u, &pde.v);
    for r in rows {
        let e = &r.estimate;
        match r.label.as_str() {
            "dividend" => report.push(CheckRow::at_most(
                point_name("mc_dividend_vs_v", r.t, r.x),
                z_score(e, v.at(r.t, r.x)),
                3.0,
            )),
            "stopping" => report.push(CheckRow::at_most(
                point_name("mc_stopping_vs_u", r.t, r.x),
                z_score(e, u.at(r.t, r.x)),
                3.0,
            )),
            "ux" => {
                // At zero the creation condition gives U_x exactly from U.
                let reference = if r.x == 0.0 {
                    -params.lambda() * u.at(r.t, 0.0)
                } else {
                    u.x_derivative_at(r.t, r.x).unwrap_or(f64::NAN)
                };
                report.push(CheckRow::at_most(
                    point_name("mc_ux_representation", r.t, r.x),
                    z_score(e, reference),
                    3.0,
                ));
            }
            _ => {}
        }
    }
    let x = cfg.verify.suboptimal_x;
    let value = v.at(0.0, x);
    let mut deepest = f64::NEG_INFINITY;
    for &f in &cfg.verify.suboptimal_fractions {
        if let Some(r) = rows.iter().find(|r| r.label == suboptimal_label(f)) {
            let z = signed_z(&r.estimate, value);
            report.push(CheckRow::at_most(
                format!("dominance_{}b0", fmt_sig(f)),
                z,
                3.0,
            ));
            deepest = deepest.max(-z);
        }
    }
    if !cfg.verify.suboptimal_fractions.is_empty() {
        report.push(CheckRow::above("dominance_strict_gap_z", deepest, 3.0));
    }
}

/// Full cross-validation for `cfg`.
pub fn run(cfg: &RunConfig) -> Result<VerifyRun> {
    cfg.validate()?;
    let params = cfg.params()?;
    if params.mu() <= 0.0 {
        return Ok(VerifyRun {
            report: trivial_report(cfg)?,
            errors: vec![],
        });
    }
    let mut run = VerifyRun::default();

    let ie = match solve_boundary(cfg) {
        Ok(ie) => {
            ie_checks(cfg, &params, &ie, &mut run.report)?;
            Some(ie)
        }
        Err(e) => {
            run.report.push(CheckRow::failed("ie_solve"));
            run.errors.push(format!("integral equation: {e}"));
            None
        }
    };

    let pde = match solve_pde(cfg) {
        Ok(p) => Some(p),
        Err(e) => {
            let name = if matches!(e, Error::XmaxTooSmall { .. }) {
                "x_max_too_small"
            } else {
                "pde_solve"
            };
            run.report.push(CheckRow::failed(name));
            run.errors.push(format!("pde: {e}"));
            None
        }
    };
    if let Some(p) = &pde {
        if let Err(e) = check_xmax(&p.boundary, &p.u.space_grid) {
            run.errors.push(format!("pde: {e}"));
        }
        pde_checks(cfg, &params, p, ie.as_ref(), &mut run.report)?;
    }

    if let (Some(p), Some(ie)) = (&pde, &ie) {
        if cfg.verify.refinement_study {
            refinement_checks(cfg, &params, p, ie, &mut run)?;
        }
        let rows = simulate_all(cfg, &ie.boundary)?;
        mc_checks(cfg, &params, p, &rows, &mut run.report);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TimeGrid;

    #[test]
    fn trend_counting() {
        assert_eq!(trend_violations(&[(0.0, 1.4), (0.1, 1.3), (0.2, 1.2)]), 0);
        assert_eq!(trend_violations(&[(0.0, 1.4), (0.1, 1.45), (0.2, 0.5)]), 2);
    }

    #[test]
    fn gap_ignores_the_tail() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let a = Boundary::new(g.clone(), vec![1.0, 0.9, 0.8, 0.5, 0.0]).unwrap();
        let b = Boundary::new(g, vec![1.0, 0.9, 0.7, 0.1, 0.0]).unwrap();
        assert!((boundary_gap(&a, &b, 0.5) - 0.1).abs() < 1e-12);
        assert!((boundary_gap(&a, &b, 1.0) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn non_positive_drift_reports_only_the_trivial_check() {
        let cfg = RunConfig::from_toml("[params]\nmu = -0.1\n").unwrap();
        let run = run(&cfg).unwrap();
        assert_eq!(run.report.rows.len(), 1);
        assert!(run.report.all_pass());
    }

    #[test]
    fn small_x_max_is_a_failed_row() {
        let mut cfg = RunConfig::from_toml(
            "checkpoints = []\n[grids]\ntime_steps = 40\nspace_cells = 40\nx_max = 1.0\n",
        )
        .unwrap();
        cfg.verify.refinement_study = false;
        cfg.verify.ux_points.clear();
        cfg.mc.n_paths = 20;
        let run = run(&cfg).unwrap();
        assert!(!run.report.get("x_max_too_small").unwrap().pass());
        assert!(!run.report.all_pass());
    }
}

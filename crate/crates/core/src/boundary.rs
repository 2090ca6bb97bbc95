//! Optimal barrier from its integral equation, solved backward in time.
//!
//! For `t < T` and `tau = T - t` the barrier satisfies
//!
//! ```text
//! 1 = exp(-r tau) E[exp(lambda (max(b(t), S_tau) - b(t)))]
//!     + r int_0^tau exp(-r s) E[exp(lambda L_s) 1{X^{b(t)}_s >= b(t + s)}] ds
//! ```
//!
//! where `L_s = max(x, S_s) - x` is the local time of the reflected process at
//! zero. The right-hand side evaluated at a trial level `x` is the stopping
//! value started from `x` when the barrier is already known on `(t, T]`, so the
//! residual `rhs - 1` is positive below the barrier and non-positive above it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{exp_max_moment, reflected_survival, weighted_reflected_survival};
use crate::model::{Boundary, ModelParams, TimeGrid};
use crate::quad::gauss_legendre;
use crate::scalar::Scalar;

pub const DEFAULT_QUAD_POINTS: usize = 4;

/// Which expectation enters the time integral of the equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IeKernel {
    /// `E[exp(lambda L_s) 1{X_s >= b(t + s)}]`, from Dynkin's formula applied to
    /// `exp(lambda L_s - r s) U(t + s, X_s)`.
    #[default]
    CreationWeighted,
    /// `P(X_s >= b(t + s))` without the creation factor.
    Survival,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IeSolverConfig<T> {
    pub time_grid: TimeGrid<T>,
    /// Absolute bisection tolerance on barrier levels.
    pub root_tol: T,
    pub max_root_iters: usize,
    /// Gauss–Legendre nodes per time cell in the `s`-integral.
    pub quad_subdivisions: usize,
    /// Nodes just before `T` set from the asymptotic formula instead of root finding.
    pub tail_patch_cells: usize,
    /// Upper end of the root bracket; `None` picks `max(5 sigma sqrt T, 10 mu T)`.
    pub b_max: Option<T>,
    pub kernel: IeKernel,
}

impl<T: Scalar> IeSolverConfig<T> {
    pub fn with_defaults(params: &ModelParams<T>, time_grid: TimeGrid<T>) -> Self {
        Self {
            time_grid,
            root_tol: T::c(1e-6) * params.sigma() * params.horizon().sqrt(),
            max_root_iters: 200,
            quad_subdivisions: DEFAULT_QUAD_POINTS,
            tail_patch_cells: 0,
            b_max: None,
            kernel: IeKernel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.root_tol > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "root_tol",
                value: self.root_tol.to_f64_lossy(),
                reason: "must be positive",
            });
        }
        if self.tail_patch_cells >= self.time_grid.count() - 1 {
            return Err(Error::InvalidParameter {
                name: "tail_patch_cells",
                value: self.tail_patch_cells as f64,
                reason: "must leave at least one node to solve",
            });
        }
        if self.quad_subdivisions == 0 || self.max_root_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "quad_subdivisions",
                value: 0.0,
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

/// Default upper end of the bracket, `max(5 sigma sqrt T, 10 mu T)`.
pub fn default_b_max<T: Scalar>(params: &ModelParams<T>) -> T {
    (T::c(5.0) * params.sigma() * params.horizon().sqrt())
        .max(T::c(10.0) * params.mu() * params.horizon())
}

/// `sigma sqrt((T - t) ln(1 / (T - t)))`, the leading-order barrier as `t -> T`.
pub fn boundary_asymptote<T: Scalar>(t: T, params: &ModelParams<T>) -> Result<T> {
    let tau = params.horizon() - t;
    if !(tau > T::zero() && tau < T::one()) {
        return Err(Error::Domain(format!(
            "asymptote needs 0 < T - t < 1, got T - t = {tau}"
        )));
    }
    Ok(params.sigma() * (tau * (T::one() / tau).ln()).sqrt())
}

/// Output of [`solve_integral_equation`].
#[derive(Debug, Clone)]
pub struct IeSolution<T> {
    pub boundary: Boundary<T>,
    /// Residual `rhs - 1` at each node; zero for `T` and the patched tail.
    pub residuals: Vec<T>,
    /// Bisection steps per node; zero where no root was sought.
    pub iterations: Vec<usize>,
    /// Index of the first node set by the asymptotic tail patch.
    pub first_patched: usize,
}

/// Barrier level curve `s -> b(t + s)` on `[0, T - t]` as knots; linear between.
struct Curve<T> {
    s: Vec<T>,
    b: Vec<T>,
}

/// Gauss–Legendre rule mapped to `[0, 1]`.
struct Rule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> Rule<T> {
    fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre::<T>(n);
        let half = T::c(0.5);
        Self {
            nodes: x.iter().map(|&v| half * (v + T::one())).collect(),
            weights: w.iter().map(|&v| half * v).collect(),
        }
    }
}

fn kernel_value<T: Scalar>(kernel: IeKernel, s: T, x: T, c: T, p: &ModelParams<T>) -> Result<T> {
    match kernel {
        IeKernel::CreationWeighted => weighted_reflected_survival(s, x, c, p),
        IeKernel::Survival => reflected_survival(s, x, c, p),
    }
}

/// Right-hand side of the equation started from level `x` with the given curve.
fn rhs<T: Scalar>(
    p: &ModelParams<T>,
    tau: T,
    x: T,
    curve: &Curve<T>,
    rule: &Rule<T>,
    kernel: IeKernel,
) -> Result<T> {
    let r = p.r();
    let terminal = (-r * tau).exp() * exp_max_moment(tau, x, p)?;
    if r == T::zero() {
        return Ok(terminal);
    }
    let cells: Vec<Result<T>> = (0..curve.s.len() - 1)
        .into_par_iter()
        .map(|j| {
            let (s0, s1) = (curve.s[j], curve.s[j + 1]);
            let (b0, b1) = (curve.b[j], curve.b[j + 1]);
            let len = s1 - s0;
            let mut acc = T::zero();
            for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
                // On the first cell s = len * u^2 removes the sqrt(s) behaviour at s = 0.
                let (frac, jac) = if j == 0 {
                    (u * u, T::c(2.0) * u)
                } else {
                    (u, T::one())
                };
                let s = s0 + len * frac;
                let level = b0 + (b1 - b0) * frac;
                acc += w * jac * (-r * s).exp() * kernel_value(kernel, s, x, level, p)?;
            }
            Ok(acc * len)
        })
        .collect();
    let mut integral = T::zero();
    for c in cells {
        integral += c?;
    }
    Ok(terminal + r * integral)
}

/// Residual `rhs - 1` of the integral equation for a given curve at time `t`.
///
/// Positive when `b(t)` lies below the optimal barrier (stopping there is
/// premature), non-positive above it.
pub fn ie_residual<T: Scalar>(b: &Boundary<T>, t: T, params: &ModelParams<T>) -> Result<T> {
    ie_residual_with(b, t, params, DEFAULT_QUAD_POINTS, IeKernel::default())
}

pub fn ie_residual_with<T: Scalar>(
    b: &Boundary<T>,
    t: T,
    params: &ModelParams<T>,
    quad_points: usize,
    kernel: IeKernel,
) -> Result<T> {
    let horizon = params.horizon();
    if !(t >= T::zero() && t < horizon) {
        return Err(Error::Domain(format!(
            "residual needs t in [0, T), got {t}"
        )));
    }
    let grid = b.grid().nodes();
    let mut s = vec![T::zero()];
    let mut lv = vec![b.at(t)];
    for (&tj, &bj) in grid.iter().zip(b.values()) {
        if tj > t {
            s.push(tj - t);
            lv.push(bj);
        }
    }
    let curve = Curve { s, b: lv };
    Ok(rhs(
        params,
        horizon - t,
        b.at(t),
        &curve,
        &Rule::new(quad_points),
        kernel,
    )? - T::one())
}

/// Solves for the barrier on `cfg.time_grid`, marching backward from `b(T) = 0`.
pub fn solve_integral_equation<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &IeSolverConfig<T>,
) -> Result<IeSolution<T>> {
    params.require_positive_drift()?;
    cfg.validate()?;
    let grid = cfg.time_grid.nodes();
    let horizon = params.horizon();
    if (cfg.time_grid.horizon() - horizon).abs() > T::c(1e-12) * horizon {
        return Err(Error::GridMismatch(format!(
            "time grid ends at {} but T = {horizon}",
            cfg.time_grid.horizon()
        )));
    }
    let n = grid.len();
    let last = n - 1;
    let rule = Rule::new(cfg.quad_subdivisions);
    let b_max = cfg.b_max.unwrap_or_else(|| default_b_max(params));
    // Far above the barrier the right-hand side is 1 up to rounding.
    let sign_tol = T::epsilon() * T::c(1e4);

    let mut values = vec![T::zero(); n];
    let mut residuals = vec![T::zero(); n];
    let mut iterations = vec![0; n];
    let first_patched = last - cfg.tail_patch_cells;
    for i in first_patched..last {
        values[i] = boundary_asymptote(grid[i], params)?;
        if horizon - grid[i] > T::one() / T::E() {
            return Err(Error::Domain(format!(
                "tail patch at T - t = {} lies where the asymptote is not monotone",
                horizon - grid[i]
            )));
        }
    }

    for i in (0..first_patched).rev() {
        let t = grid[i];
        let tau = horizon - t;
        let mut curve = Curve {
            s: grid[i..].iter().map(|&tj| tj - t).collect(),
            b: values[i..].to_vec(),
        };
        let mut residual = |x: T| -> Result<T> {
            curve.b[0] = x;
            Ok(rhs(params, tau, x, &curve, &rule, cfg.kernel)? - T::one())
        };
        let mut lo = values[i + 1];
        let mut hi = b_max;
        let f_lo = residual(lo)?;
        let f_hi = residual(hi)?;
        if !(f_lo > sign_tol) {
            return Err(Error::NonMonotone {
                t: t.to_f64_lossy(),
                value: lo.to_f64_lossy(),
                next: values[i + 1].to_f64_lossy(),
            });
        }
        if f_hi > sign_tol {
            return Err(Error::NoBracket {
                t: t.to_f64_lossy(),
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
                residual_lo: f_lo.to_f64_lossy(),
                residual_hi: f_hi.to_f64_lossy(),
            });
        }
        let mut iters = 0;
        while hi - lo > cfg.root_tol {
            if iters == cfg.max_root_iters {
                return Err(Error::RootNotConverged {
                    t: t.to_f64_lossy(),
                    iterations: iters,
                });
            }
            let mid = T::c(0.5) * (lo + hi);
            if residual(mid)? > sign_tol {
                lo = mid;
            } else {
                hi = mid;
            }
            iters += 1;
        }
        let root = T::c(0.5) * (lo + hi);
        residuals[i] = residual(root)?;
        values[i] = root;
        iterations[i] = iters;
    }

    let boundary = Boundary::new(cfg.time_grid.clone(), values)?;
    Ok(IeSolution {
        boundary,
        residuals,
        iterations,
        first_patched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bench() -> ModelParams<f64> {
        ModelParams::new(0.5, 1.0, 0.05, 1.0).unwrap()
    }

    #[test]
    fn asymptote_examples() {
        let p = bench();
        let t = 1.0 - (-1.0_f64).exp();
        assert_relative_eq!(
            boundary_asymptote(t, &p).unwrap(),
            (-0.5_f64).exp(),
            max_relative = 1e-12
        );
        let p2 = ModelParams::new(0.5, 2.0, 0.05, 1.0).unwrap();
        assert_relative_eq!(
            boundary_asymptote(0.99, &p2).unwrap(),
            0.429_193_205_257_869_5,
            max_relative = 1e-12
        );
        assert!(boundary_asymptote(1.0 - 1e-12, &p).unwrap() < 1e-5);
        assert!(boundary_asymptote(1.0, &p).is_err());
        assert!(boundary_asymptote(0.0, &p).is_err());
    }

    #[test]
    fn rejects_non_positive_drift() {
        let p = ModelParams::new(0.0, 1.0, 0.05, 1.0).unwrap();
        let cfg = IeSolverConfig::with_defaults(&p, TimeGrid::uniform(1.0, 20).unwrap());
        assert!(matches!(
            solve_integral_equation(&p, &cfg),
            Err(Error::TrivialCase { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let p = bench();
        let mut cfg = IeSolverConfig::with_defaults(&p, TimeGrid::uniform(1.0, 4).unwrap());
        cfg.tail_patch_cells = 4;
        assert!(cfg.validate().is_err());
        cfg.tail_patch_cells = 1;
        cfg.root_tol = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tiny_b_max_has_no_bracket() {
        let p = bench();
        let mut cfg = IeSolverConfig::with_defaults(&p, TimeGrid::uniform(1.0, 20).unwrap());
        cfg.b_max = Some(0.45);
        assert!(matches!(
            solve_integral_equation(&p, &cfg),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn coarse_solve_is_a_valid_boundary() {
        let p = bench();
        let cfg = IeSolverConfig::with_defaults(&p, TimeGrid::uniform(1.0, 40).unwrap());
        let sol = solve_integral_equation(&p, &cfg).unwrap();
        let v = sol.boundary.values();
        assert_eq!(v[40], 0.0);
        assert!(v.windows(2).all(|w| w[0] >= w[1]));
        for (i, r) in sol.residuals.iter().enumerate().take(sol.first_patched) {
            assert!(r.abs() <= 10.0 * cfg.root_tol, "node {i}: residual {r}");
            let direct = ie_residual(&sol.boundary, cfg.time_grid.nodes()[i], &p).unwrap();
            assert!((direct - r).abs() < 1e-12);
        }
    }
}

//! Finite-difference solve of the optimal stopping problem for `U = V_x`.
//!
//! `U` solves the obstacle problem `max(L U, 1 - U) = 0` on `[0, T) x (0, x_max)`
//! with `L = d/dt + sigma^2/2 d^2/dx^2 + mu d/dx - r`, terminal value `U(T, .) = 1`,
//! the creation condition `U_x(t, 0) + lambda U(t, 0) = 0` and `U = 1` at
//! `x_max`. Each backward step is a linear complementarity problem with the
//! constant obstacle 1, solved either directly (Brennan–Schwartz) or by
//! projected SOR.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Boundary, ModelParams, SpaceGrid, TimeGrid};
use crate::report::{CheckRow, VerificationReport};
use crate::scalar::Scalar;

pub const DEFAULT_EXTRACT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurfaceKind {
    U,
    V,
}

/// A value function sampled on a time x space grid. Row `i` is time node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface<T> {
    pub time_grid: TimeGrid<T>,
    pub space_grid: SpaceGrid<T>,
    pub values: Array2<T>,
    pub kind: SurfaceKind,
}

impl<T: Scalar> ValueSurface<T> {
    pub fn new(
        time_grid: TimeGrid<T>,
        space_grid: SpaceGrid<T>,
        values: Array2<T>,
        kind: SurfaceKind,
    ) -> Result<Self> {
        if values.dim() != (time_grid.count(), space_grid.count()) {
            return Err(Error::GridMismatch(format!(
                "values are {:?}, grids are {} x {}",
                values.dim(),
                time_grid.count(),
                space_grid.count()
            )));
        }
        Ok(Self {
            time_grid,
            space_grid,
            values,
            kind,
        })
    }

    fn require(&self, kind: SurfaceKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::WrongSurfaceKind {
                expected: if kind == SurfaceKind::U { "U" } else { "V" },
            })
        }
    }

    fn step(&self) -> Result<T> {
        self.space_grid.uniform_step().ok_or_else(|| {
            Error::InvalidGrid("finite-difference operators need a uniform space grid".into())
        })
    }

    /// Bilinear interpolation at `(t, x)`, clamped to the grid.
    pub fn at(&self, t: T, x: T) -> T {
        let (i, wt) = self.time_grid.locate(t);
        let (j, wx) = self.space_grid.locate(x);
        let v = &self.values;
        let lo = v[[i, j]] + wx * (v[[i, j + 1]] - v[[i, j]]);
        let hi = v[[i + 1, j]] + wx * (v[[i + 1, j + 1]] - v[[i + 1, j]]);
        lo + wt * (hi - lo)
    }

    /// Central-difference `d/dx` at `(t, x)`, linearly interpolated in both variables.
    pub fn x_derivative_at(&self, t: T, x: T) -> Result<T> {
        let h = self.step()?;
        let n = self.space_grid.count();
        let row_derivative = |row: usize, j: usize| {
            let v = &self.values;
            if j == 0 {
                (v[[row, 1]] - v[[row, 0]]) / h
            } else if j == n - 1 {
                (v[[row, n - 1]] - v[[row, n - 2]]) / h
            } else {
                (v[[row, j + 1]] - v[[row, j - 1]]) / (T::c(2.0) * h)
            }
        };
        let (i, wt) = self.time_grid.locate(t);
        let (j, wx) = self.space_grid.locate(x);
        let at_row = |row| {
            row_derivative(row, j) + wx * (row_derivative(row, j + 1) - row_derivative(row, j))
        };
        Ok(at_row(i) + wt * (at_row(i + 1) - at_row(i)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ImplicitProjected,
    CrankNicolsonProjected,
    /// Variable-step second-order backward differences.
    Bdf2Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LcpSolver {
    BrennanSchwartz,
    Psor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeConfig<T> {
    pub time_grid: TimeGrid<T>,
    pub space_grid: SpaceGrid<T>,
    pub scheme: Scheme,
    pub lcp_solver: LcpSolver,
    pub psor_tol: T,
    pub psor_max_iters: usize,
    pub psor_omega: T,
    /// `U > 1 + boundary_extract_tol` marks the continuation region.
    pub boundary_extract_tol: T,
    /// Number of steps next to `T` taken as two implicit half-steps
    /// (Crank–Nicolson and BDF2; BDF2 always starts with at least one).
    pub rannacher_steps: usize,
}

impl<T: Scalar> PdeConfig<T> {
    pub fn new(time_grid: TimeGrid<T>, space_grid: SpaceGrid<T>) -> Self {
        Self {
            time_grid,
            space_grid,
            scheme: Scheme::Bdf2Projected,
            lcp_solver: LcpSolver::BrennanSchwartz,
            psor_tol: T::c(1e-12),
            psor_max_iters: 10_000,
            psor_omega: T::c(1.5),
            boundary_extract_tol: T::c(DEFAULT_EXTRACT_TOL),
            rannacher_steps: 4,
        }
    }

    /// Uniform grids on `[0, T] x [0, 4 sigma sqrt T]`.
    pub fn desk_scale(
        params: &ModelParams<T>,
        time_steps: usize,
        space_cells: usize,
    ) -> Result<Self> {
        let x_max = T::c(4.0) * params.sigma() * params.horizon().sqrt();
        Ok(Self::new(
            TimeGrid::uniform(params.horizon(), time_steps)?,
            SpaceGrid::uniform(x_max, space_cells)?,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: T| {
            if v > T::zero() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: v.to_f64_lossy(),
                    reason: "must be positive",
                })
            }
        };
        positive("psor_tol", self.psor_tol)?;
        positive("boundary_extract_tol", self.boundary_extract_tol)?;
        if !(self.psor_omega > T::zero() && self.psor_omega < T::c(2.0)) {
            return Err(Error::InvalidParameter {
                name: "psor_omega",
                value: self.psor_omega.to_f64_lossy(),
                reason: "must lie in (0, 2)",
            });
        }
        self.space_grid.uniform_step().ok_or_else(|| {
            Error::InvalidGrid("the PDE solver needs a uniform space grid".into())
        })?;
        Ok(())
    }
}

/// Tridiagonal spatial operator `A` with `(A u)_i = lo_i u_{i-1} + di_i u_i + up_i u_{i+1}`.
/// Row 0 carries the creation condition through a ghost node
/// `u_{-1} = u_1 + 2 h lambda u_0`; the last row is the Dirichlet node.
struct Operator<T> {
    lo: T,
    di: T,
    up: T,
    di0: T,
    up0: T,
}

impl<T: Scalar> Operator<T> {
    fn new(p: &ModelParams<T>, h: T) -> Self {
        let half = T::c(0.5);
        let s2 = p.sigma() * p.sigma();
        let diff = half * s2 / (h * h);
        let conv = half * p.mu() / h;
        Self {
            lo: diff - conv,
            di: -T::c(2.0) * diff - p.r(),
            up: diff + conv,
            // sigma^2 lambda / h = 2 mu / h
            di0: -s2 / (h * h) + T::c(2.0) * p.mu() / h - p.mu() * p.lambda() - p.r(),
            up0: s2 / (h * h),
        }
    }

    fn apply(&self, u: &[T], out: &mut [T]) {
        let n = u.len();
        out[0] = self.di0 * u[0] + self.up0 * u[1];
        for i in 1..n - 1 {
            out[i] = self.lo * u[i - 1] + self.di * u[i] + self.up * u[i + 1];
        }
        out[n - 1] = T::zero();
    }

    fn row(&self, i: usize, n: usize) -> (T, T, T) {
        if i == 0 {
            (T::zero(), self.di0, self.up0)
        } else if i == n - 1 {
            (T::zero(), T::zero(), T::zero())
        } else {
            (self.lo, self.di, self.up)
        }
    }
}

/// Solves `(c0 I - w A) u = rhs` subject to `u >= 1`, `u_last = 1`.
struct StepSolver<'a, T> {
    op: &'a Operator<T>,
    cfg: &'a PdeConfig<T>,
    // scratch
    c_prime: Vec<T>,
    d_prime: Vec<T>,
    tmp: Vec<T>,
    rhs: Vec<T>,
}

impl<'a, T: Scalar> StepSolver<'a, T> {
    fn new(op: &'a Operator<T>, cfg: &'a PdeConfig<T>, n: usize) -> Self {
        let z = vec![T::zero(); n];
        Self {
            op,
            cfg,
            c_prime: z.clone(),
            d_prime: z.clone(),
            tmp: z.clone(),
            rhs: z,
        }
    }

    /// One theta-step from `next` (time t_{k+1}) to `cur` (time t_k).
    fn theta_step(
        &mut self,
        next: &[T],
        cur: &mut [T],
        dt: T,
        theta: T,
        step_index: usize,
    ) -> Result<()> {
        self.op.apply(next, &mut self.tmp);
        let explicit = (T::one() - theta) * dt;
        for ((r, &u), &au) in self.rhs.iter_mut().zip(next).zip(&self.tmp) {
            *r = u + explicit * au;
        }
        self.solve(cur, next, T::one(), theta * dt, step_index)
    }

    /// Variable-step BDF2 from `next` (t_{k+1}) and `after` (t_{k+2}) to `cur`
    /// (t_k), with `dt = t_{k+1} - t_k` and `ratio = dt / (t_{k+2} - t_{k+1})`.
    fn bdf2_step(
        &mut self,
        next: &[T],
        after: &[T],
        cur: &mut [T],
        dt: T,
        ratio: T,
        step_index: usize,
    ) -> Result<()> {
        let one = T::one();
        let c1 = one + ratio;
        let c2 = ratio * ratio / (one + ratio);
        for ((r, &u1), &u2) in self.rhs.iter_mut().zip(next).zip(after) {
            *r = c1 * u1 - c2 * u2;
        }
        let c0 = (one + T::c(2.0) * ratio) / (one + ratio);
        self.solve(cur, next, c0, dt, step_index)
    }

    fn solve(&mut self, cur: &mut [T], guess: &[T], c0: T, w: T, step_index: usize) -> Result<()> {
        let n = cur.len();
        self.rhs[n - 1] = T::one();
        let op = self.op;
        let coeffs = |i: usize| {
            let (l, d, u) = op.row(i, n);
            if i == n - 1 {
                (T::zero(), T::one(), T::zero())
            } else {
                (-w * l, c0 - w * d, -w * u)
            }
        };
        let rhs = &self.rhs;
        match self.cfg.lcp_solver {
            LcpSolver::BrennanSchwartz => {
                // Forward elimination from x = 0, projected back-substitution from
                // x_max: the stopping region lies at the top of the grid.
                let (_, d0, u0) = coeffs(0);
                self.c_prime[0] = u0 / d0;
                self.d_prime[0] = rhs[0] / d0;
                for i in 1..n {
                    let (l, d, u) = coeffs(i);
                    let m = d - l * self.c_prime[i - 1];
                    self.c_prime[i] = u / m;
                    self.d_prime[i] = (rhs[i] - l * self.d_prime[i - 1]) / m;
                }
                cur[n - 1] = self.d_prime[n - 1].max(T::one());
                for i in (0..n - 1).rev() {
                    cur[i] = (self.d_prime[i] - self.c_prime[i] * cur[i + 1]).max(T::one());
                }
            }
            LcpSolver::Psor => {
                cur.copy_from_slice(guess);
                let omega = self.cfg.psor_omega;
                let mut delta = T::zero();
                for _ in 0..self.cfg.psor_max_iters {
                    delta = T::zero();
                    for i in 0..n {
                        let (l, d, u) = coeffs(i);
                        let mut s = rhs[i];
                        if i > 0 {
                            s -= l * cur[i - 1];
                        }
                        if i + 1 < n {
                            s -= u * cur[i + 1];
                        }
                        let gs = s / d;
                        let updated = (cur[i] + omega * (gs - cur[i])).max(T::one());
                        delta = delta.max((updated - cur[i]).abs());
                        cur[i] = updated;
                    }
                    if delta <= self.cfg.psor_tol {
                        return Ok(());
                    }
                }
                return Err(Error::PsorDiverged {
                    step: step_index,
                    iterations: self.cfg.psor_max_iters,
                    residual: delta.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

/// Backward sweep for `U` from `U(T, .) = 1`.
pub fn solve_u<T: Scalar>(params: &ModelParams<T>, cfg: &PdeConfig<T>) -> Result<ValueSurface<T>> {
    params.require_positive_drift()?;
    cfg.validate()?;
    let horizon = params.horizon();
    if (cfg.time_grid.horizon() - horizon).abs() > T::c(1e-12) * horizon {
        return Err(Error::GridMismatch(format!(
            "time grid ends at {} but T = {horizon}",
            cfg.time_grid.horizon()
        )));
    }
    let h = cfg.space_grid.uniform_step().expect("validated");
    let op = Operator::new(params, h);
    let times = cfg.time_grid.nodes();
    let nt = times.len();
    let nx = cfg.space_grid.count();
    let mut values = Array2::from_elem((nt, nx), T::one());
    let mut solver = StepSolver::new(&op, cfg, nx);
    let mut next = vec![T::one(); nx];
    let mut after = vec![T::one(); nx];
    let mut cur = vec![T::one(); nx];
    let mut mid = vec![T::one(); nx];
    let half = T::c(0.5);
    let threshold = T::one() + cfg.boundary_extract_tol;

    for k in (0..nt - 1).rev() {
        let dt = times[k + 1] - times[k];
        let steps_from_end = nt - 2 - k;
        match cfg.scheme {
            Scheme::ImplicitProjected => solver.theta_step(&next, &mut cur, dt, T::one(), k)?,
            Scheme::CrankNicolsonProjected | Scheme::Bdf2Projected
                if steps_from_end < cfg.rannacher_steps.max(1) =>
            {
                solver.theta_step(&next, &mut mid, half * dt, T::one(), k)?;
                solver.theta_step(&mid, &mut cur, half * dt, T::one(), k)?;
            }
            Scheme::CrankNicolsonProjected => solver.theta_step(&next, &mut cur, dt, half, k)?,
            Scheme::Bdf2Projected => {
                let ratio = dt / (times[k + 2] - times[k + 1]);
                solver.bdf2_step(&next, &after, &mut cur, dt, ratio, k)?;
            }
        }
        if cur[nx - 2] > threshold {
            return Err(Error::XmaxTooSmall {
                t: times[k].to_f64_lossy(),
                x_max: cfg.space_grid.x_max().to_f64_lossy(),
            });
        }
        values
            .row_mut(k)
            .iter_mut()
            .zip(&cur)
            .for_each(|(v, &c)| *v = c);
        std::mem::swap(&mut after, &mut next);
        std::mem::swap(&mut next, &mut cur);
    }
    ValueSurface::new(
        cfg.time_grid.clone(),
        cfg.space_grid.clone(),
        values,
        SurfaceKind::U,
    )
}

/// Pool-adjacent-violators projection onto non-increasing sequences.
fn isotonic_non_increasing<T: Scalar>(v: &mut [T]) {
    let mut blocks: Vec<(T, usize)> = Vec::with_capacity(v.len());
    for &x in v.iter() {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m2 <= m1 {
                break;
            }
            let w1 = T::from_usize(n1).expect("usize fits");
            let w2 = T::from_usize(n2).expect("usize fits");
            blocks.pop();
            let last = blocks.len() - 1;
            blocks[last] = ((m1 * w1 + m2 * w2) / (w1 + w2), n1 + n2);
        }
    }
    let mut i = 0;
    for (m, n) in blocks {
        for slot in &mut v[i..i + n] {
            *slot = m;
        }
        i += n;
    }
}

/// Width, in units of `sigma sqrt(T)`, of the fitting window below the contact point.
pub const EXTRACT_WINDOW: f64 = 0.05;

/// Free boundary of `U` at each time node.
///
/// On the barrier `U = 1` and `U_x = 0`, hence `U_t = 0`, and the equation
/// gives `U_xx(t, b-) = 2 r / sigma^2`. Below the barrier therefore
/// `phi = sqrt((U - 1) sigma^2 / r)` is `d + k d^2 + O(d^3)` in `d = b - x`, and
/// `b` is the intercept of a least-squares fit of `phi + x` against `phi^2` over
/// the continuation nodes within [`EXTRACT_WINDOW`] of the last one. With
/// `r = 0` the curvature is unknown and `sqrt(U - 1)` is extrapolated linearly
/// from the last two continuation nodes instead.
pub fn extract_boundary<T: Scalar>(
    u: &ValueSurface<T>,
    params: &ModelParams<T>,
) -> Result<Boundary<T>> {
    extract_boundary_with_tol(u, params, T::c(DEFAULT_EXTRACT_TOL))
}

/// Level from the fit described on [`extract_boundary`]; `j` is the last
/// continuation node.
fn contact_level<T: Scalar>(row: &[T], x: &[T], j: usize, curvature: T, window: T) -> T {
    let one = T::one();
    if curvature > T::zero() {
        let phi = |i: usize| ((row[i] - one).max(T::zero()) / curvature).sqrt();
        let lo = (0..=j).find(|&i| x[j] - x[i] <= window).unwrap_or(j);
        if j - lo < 2 {
            return x[j] + phi(j);
        }
        let n = T::from_usize(j - lo + 1).expect("usize fits");
        let (mut su, mut sv) = (T::zero(), T::zero());
        for i in lo..=j {
            su += phi(i) * phi(i);
            sv += phi(i) + x[i];
        }
        let (mu, mv) = (su / n, sv / n);
        let (mut suu, mut suv) = (T::zero(), T::zero());
        for i in lo..=j {
            let du = phi(i) * phi(i) - mu;
            suu += du * du;
            suv += du * (phi(i) + x[i] - mv);
        }
        if suu > T::zero() {
            mv - suv / suu * mu
        } else {
            x[j] + phi(j)
        }
    } else {
        let g0 = (row[j] - one).sqrt();
        let gm = if j > 0 {
            (row[j - 1] - one).max(T::zero()).sqrt()
        } else {
            T::zero()
        };
        if j > 0 && gm > g0 {
            x[j] + g0 * (x[j] - x[j - 1]) / (gm - g0)
        } else {
            x[j]
        }
    }
}

/// [`extract_boundary`] with an explicit contact threshold.
pub fn extract_boundary_with_tol<T: Scalar>(
    u: &ValueSurface<T>,
    params: &ModelParams<T>,
    tol: T,
) -> Result<Boundary<T>> {
    u.require(SurfaceKind::U)?;
    let x = u.space_grid.nodes();
    let nt = u.time_grid.count();
    let curvature = params.r() / (params.sigma() * params.sigma());
    let window = T::c(EXTRACT_WINDOW) * params.sigma() * params.horizon().sqrt();
    let mut b = vec![T::zero(); nt];
    for (k, row) in u.values.rows().into_iter().enumerate() {
        let row = row.to_vec();
        let Some(j) = row.iter().rposition(|&v| v > T::one() + tol) else {
            continue;
        };
        if j + 1 >= x.len() {
            return Err(Error::XmaxTooSmall {
                t: u.time_grid.nodes()[k].to_f64_lossy(),
                x_max: u.space_grid.x_max().to_f64_lossy(),
            });
        }
        // The discrete contact point may lag the true one by up to a cell.
        let cap = x[(j + 2).min(x.len() - 1)];
        b[k] = contact_level(&row, x, j, curvature, window)
            .max(x[j])
            .min(cap);
    }
    b[nt - 1] = T::zero();

    let h = u.space_grid.uniform_step().unwrap_or_else(|| x[1] - x[0]);
    let mut worst = T::zero();
    let mut worst_t = T::zero();
    let mut running_min = b[0];
    for (k, &v) in b.iter().enumerate() {
        if v - running_min > worst {
            worst = v - running_min;
            worst_t = u.time_grid.nodes()[k];
        }
        running_min = running_min.min(v);
    }
    if worst > h {
        return Err(Error::NonMonotoneBeyondCell {
            t: worst_t.to_f64_lossy(),
            excess: worst.to_f64_lossy(),
        });
    }
    if worst > T::zero() {
        isotonic_non_increasing(&mut b[..nt - 1]);
    }
    Boundary::new(u.time_grid.clone(), b)
}

/// `V(t, x) = int_0^x U(t, y) dy` by the composite trapezoid rule, row by row.
///
/// Accumulates `U - 1` and adds `x`, so rows with `U = 1` give `V = x` exactly.
pub fn integrate_v<T: Scalar>(u: &ValueSurface<T>) -> Result<ValueSurface<T>> {
    u.require(SurfaceKind::U)?;
    let x = u.space_grid.nodes();
    let mut values = Array2::zeros(u.values.dim());
    let half = T::c(0.5);
    for (src, mut dst) in u.values.rows().into_iter().zip(values.rows_mut()) {
        let mut excess = T::zero();
        dst[0] = T::zero();
        for j in 1..x.len() {
            excess += half * (x[j] - x[j - 1]) * ((src[j - 1] - T::one()) + (src[j] - T::one()));
            dst[j] = x[j] + excess;
        }
    }
    ValueSurface::new(
        u.time_grid.clone(),
        u.space_grid.clone(),
        values,
        SurfaceKind::V,
    )
}

/// Returns `x`: with non-positive drift paying everything at once is optimal.
pub fn trivial_value<T: Scalar>(params: &ModelParams<T>, _t: T, x: T) -> Result<T> {
    if params.mu() > T::zero() {
        return Err(Error::InvalidParameter {
            name: "mu",
            value: params.mu().to_f64_lossy(),
            reason: "trivial value needs mu <= 0",
        });
    }
    Ok(x)
}

/// Requires `x_max >= 2 b(0)`.
pub fn check_xmax<T: Scalar>(b: &Boundary<T>, space_grid: &SpaceGrid<T>) -> Result<()> {
    let b0 = b.values()[0];
    if space_grid.x_max() < T::c(2.0) * b0 {
        return Err(Error::XmaxTooSmall {
            t: 0.0,
            x_max: space_grid.x_max().to_f64_lossy(),
        });
    }
    Ok(())
}

/// Time window `[0, fraction * T]` used by the accuracy checks.
fn rows_up_to<T: Scalar>(grid: &TimeGrid<T>, fraction: T) -> impl Iterator<Item = usize> + '_ {
    let limit = fraction * grid.horizon() * (T::one() + T::c(1e-12));
    grid.nodes()
        .iter()
        .enumerate()
        .take_while(move |(_, &t)| t <= limit)
        .map(|(i, _)| i)
}

/// `(t, U_x(t, b(t)))` for `t in [0, fraction T]` with `fraction < 1`, using the
/// left (backward) difference interpolated at the extracted boundary.
pub fn smooth_fit_residual<T: Scalar>(
    u: &ValueSurface<T>,
    b: &Boundary<T>,
    fraction: T,
) -> Result<Vec<(T, T)>> {
    u.require(SurfaceKind::U)?;
    if b.grid() != &u.time_grid {
        return Err(Error::GridMismatch(
            "boundary and surface time grids differ".into(),
        ));
    }
    let h = u.step()?;
    let x = u.space_grid.nodes();
    let nx = x.len();
    let times = u.time_grid.nodes();
    let mut out = Vec::new();
    for k in rows_up_to(&u.time_grid, fraction) {
        if k == times.len() - 1 {
            break;
        }
        let row = u.values.row(k);
        let left_diff = |j: usize| {
            if j == 0 {
                T::zero()
            } else {
                (row[j] - row[j - 1]) / h
            }
        };
        let (j, w) = u.space_grid.locate(b.values()[k]);
        let j1 = (j + 1).min(nx - 1);
        out.push((times[k], left_diff(j) + w * (left_diff(j1) - left_diff(j))));
    }
    Ok(out)
}

/// `(t, U_x(t, 0) + lambda U(t, 0))` for `t in [0, fraction T]` with a
/// second-order one-sided difference for `U_x`.
pub fn creation_residual<T: Scalar>(
    u: &ValueSurface<T>,
    params: &ModelParams<T>,
    fraction: T,
) -> Result<Vec<(T, T)>> {
    u.require(SurfaceKind::U)?;
    let h = u.step()?;
    let times = u.time_grid.nodes();
    let mut out = Vec::new();
    for k in rows_up_to(&u.time_grid, fraction) {
        if k == times.len() - 1 {
            break;
        }
        let r = u.values.row(k);
        let ux = (-T::c(3.0) * r[0] + T::c(4.0) * r[1] - r[2]) / (T::c(2.0) * h);
        out.push((times[k], ux + params.lambda() * r[0]));
    }
    Ok(out)
}

/// Tolerances for [`verification_residuals`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationTolerances<T> {
    /// `max |max(L V, 1 - V_x)|` away from the boundary collar.
    pub hjb: T,
    /// `max |L V|` in the continuation region.
    pub generator: T,
    /// `max |V_x - 1|` in the stopping region.
    pub slope: T,
    /// Fraction of the horizon checked (the rest near `T` is under-resolved).
    pub time_fraction: T,
    /// Cells excluded on each side of the boundary.
    pub collar_cells: usize,
}

impl<T: Scalar> VerificationTolerances<T> {
    /// `C (dx + dt)` for the generator conditions, `5 dx` for the slope.
    pub fn for_grids(
        time_grid: &TimeGrid<T>,
        space_grid: &SpaceGrid<T>,
        generator_constant: T,
    ) -> Self {
        let dx = space_grid.nodes()[1] - space_grid.nodes()[0];
        let dt = time_grid.nodes()[1] - time_grid.nodes()[0];
        Self {
            hjb: generator_constant * (dx + dt),
            generator: generator_constant * (dx + dt),
            slope: T::c(5.0) * dx,
            time_fraction: T::c(0.95),
            collar_cells: 2,
        }
    }
}

/// Discrete `L V` at the cell-centred time `(t_k + t_{k+1}) / 2`, node `j`.
fn generator_at<T: Scalar>(
    v: &Array2<T>,
    k: usize,
    j: usize,
    dt: T,
    h: T,
    p: &ModelParams<T>,
) -> T {
    let half = T::c(0.5);
    let spatial = |row: usize| {
        let d2 = (v[[row, j + 1]] - T::c(2.0) * v[[row, j]] + v[[row, j - 1]]) / (h * h);
        let d1 = (v[[row, j + 1]] - v[[row, j - 1]]) / (T::c(2.0) * h);
        half * p.sigma() * p.sigma() * d2 + p.mu() * d1 - p.r() * v[[row, j]]
    };
    (v[[k + 1, j]] - v[[k, j]]) / dt + half * (spatial(k) + spatial(k + 1))
}

/// Numerical check of the verification conditions for `V` and barrier `b`:
/// (i) `max(L V, 1 - V_x) = 0`, (ii) `V(t, 0) = 0`, (iii) `V(T, x) = x`,
/// (iv) `L V = 0` below `b`, (v) `V_x = 1` above `b`.
pub fn verification_residuals<T: Scalar>(
    v: &ValueSurface<T>,
    b: &Boundary<T>,
    params: &ModelParams<T>,
    tol: &VerificationTolerances<T>,
) -> Result<VerificationReport> {
    v.require(SurfaceKind::V)?;
    if b.grid() != &v.time_grid {
        return Err(Error::GridMismatch(
            "boundary and surface time grids differ".into(),
        ));
    }
    let h = v.step()?;
    let x = v.space_grid.nodes();
    let times = v.time_grid.nodes();
    let nx = x.len();
    let nt = times.len();
    let vals = &v.values;

    let cond_ii = (0..nt).map(|k| vals[[k, 0]].abs()).fold(T::zero(), T::max);
    let cond_iii = (0..nx)
        .map(|j| (vals[[nt - 1, j]] - x[j]).abs())
        .fold(T::zero(), T::max);

    let collar = T::from_usize(tol.collar_cells).expect("usize fits") * h;
    let mut cond_i = T::zero();
    let mut cond_iv = T::zero();
    let mut cond_v = T::zero();
    for k in rows_up_to(&v.time_grid, tol.time_fraction) {
        if k + 1 >= nt {
            break;
        }
        let dt = times[k + 1] - times[k];
        // Barrier over the step: the interval [b(t_{k+1}), b(t_k)] is a collar too.
        let b_hi = b.values()[k];
        let b_lo = b.values()[k + 1];
        for j in 1..nx - 1 {
            let lv = generator_at(vals, k, j, dt, h, params);
            let vx = (vals[[k, j + 1]] - vals[[k, j - 1]]) / (T::c(2.0) * h);
            let near = x[j] > b_lo - collar && x[j] < b_hi + collar;
            if !near && j > tol.collar_cells {
                cond_i = cond_i.max(lv.max(T::one() - vx).abs());
            }
            if x[j] < b_lo - collar && j > tol.collar_cells {
                cond_iv = cond_iv.max(lv.abs());
            }
            if x[j] >= b_hi + collar {
                cond_v = cond_v.max((vx - T::one()).abs());
            }
        }
    }

    let f = |v: T| v.to_f64_lossy();
    let mut report = VerificationReport::default();
    report.push(CheckRow::at_most(
        "hjb_max_residual_i",
        f(cond_i),
        f(tol.hjb),
    ));
    report.push(CheckRow::at_most("v_at_zero_ii", f(cond_ii), 0.0));
    report.push(CheckRow::at_most("v_terminal_iii", f(cond_iii), 0.0));
    report.push(CheckRow::at_most(
        "generator_continuation_iv",
        f(cond_iv),
        f(tol.generator),
    ));
    report.push(CheckRow::at_most(
        "slope_stopping_v",
        f(cond_v),
        f(tol.slope),
    ));
    Ok(report)
}

/// Shape checks on `U`, `V` and `b`, each as a maximum violation against `tol`.
pub fn shape_invariants<T: Scalar>(
    u: &ValueSurface<T>,
    v: &ValueSurface<T>,
    b: &Boundary<T>,
    tol: T,
) -> Result<VerificationReport> {
    u.require(SurfaceKind::U)?;
    v.require(SurfaceKind::V)?;
    let h = u.step()?;
    let uv = &u.values;
    let vv = &v.values;
    let (nt, nx) = uv.dim();
    let mut below_one = T::zero();
    let mut t_increase = T::zero();
    let mut x_increase = T::zero();
    let mut nonconvex = T::zero();
    let mut nonconcave = T::zero();
    let mut slope_below_one = T::zero();
    let mut v_zero = T::zero();
    for k in 0..nt {
        v_zero = v_zero.max(vv[[k, 0]].abs());
        for j in 0..nx {
            below_one = below_one.max(T::one() - uv[[k, j]]);
            if k + 1 < nt {
                t_increase = t_increase.max(uv[[k + 1, j]] - uv[[k, j]]);
            }
            if j + 1 < nx {
                x_increase = x_increase.max(uv[[k, j + 1]] - uv[[k, j]]);
                slope_below_one = slope_below_one.max(T::one() - (vv[[k, j + 1]] - vv[[k, j]]) / h);
            }
            if j >= 1 && j + 1 < nx {
                nonconvex =
                    nonconvex.max(-(uv[[k, j + 1]] - T::c(2.0) * uv[[k, j]] + uv[[k, j - 1]]));
                nonconcave =
                    nonconcave.max(vv[[k, j + 1]] - T::c(2.0) * vv[[k, j]] + vv[[k, j - 1]]);
            }
        }
    }
    let bv = b.values();
    let n = bv.len();
    let b_nonpositive = bv[..n - 1]
        .iter()
        .map(|&v| -v)
        .fold(T::neg_infinity(), T::max);
    let b_increase = bv
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(T::neg_infinity(), T::max);

    let f = |v: T| v.to_f64_lossy();
    let t = f(tol);
    let mut report = VerificationReport::default();
    report.push(CheckRow::at_most("u_at_least_one", f(below_one), t));
    report.push(CheckRow::at_most("u_non_increasing_in_t", f(t_increase), t));
    report.push(CheckRow::at_most("u_non_increasing_in_x", f(x_increase), t));
    report.push(CheckRow::at_most("u_convex_in_x", f(nonconvex), t));
    report.push(CheckRow::at_most("v_concave_in_x", f(nonconcave), t));
    report.push(CheckRow::at_most(
        "v_slope_at_least_one",
        f(slope_below_one),
        t,
    ));
    report.push(CheckRow::at_most("v_zero_at_origin", f(v_zero), t));
    report.push(CheckRow::below(
        "b_positive_before_t",
        f(b_nonpositive),
        0.0,
    ));
    report.push(CheckRow::at_most("b_non_increasing", f(b_increase), t));
    report.push(CheckRow::at_most(
        "b_zero_at_horizon",
        f(bv[n - 1].abs()),
        0.0,
    ));
    Ok(report)
}

//! Problem constants, discretisation grids and the dividend barrier curve.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Drift, volatility, discount rate and horizon of the fund dynamics
/// `dX = mu dt + sigma dB - dD`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    mu: T,
    sigma: T,
    r: T,
    horizon: T,
    lambda: T,
}

impl<T: Scalar> ModelParams<T> {
    /// Validates `sigma > 0`, `horizon > 0`, `r >= 0`. Any sign of `mu` is
    /// accepted here; solver entry points call [`ModelParams::require_positive_drift`].
    pub fn new(mu: T, sigma: T, r: T, horizon: T) -> Result<Self> {
        let check = |name, v: T, ok: bool, reason| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: v.to_f64_lossy(),
                    reason,
                })
            }
        };
        check("mu", mu, true, "must be finite")?;
        check("sigma", sigma, sigma > T::zero(), "must be positive")?;
        check("r", r, r >= T::zero(), "must be non-negative")?;
        check("horizon", horizon, horizon > T::zero(), "must be positive")?;
        let lambda = T::c(2.0) * mu / (sigma * sigma);
        Ok(Self {
            mu,
            sigma,
            r,
            horizon,
            lambda,
        })
    }

    pub fn mu(&self) -> T {
        self.mu
    }
    pub fn sigma(&self) -> T {
        self.sigma
    }
    pub fn r(&self) -> T {
        self.r
    }
    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// Creation rate `2 mu / sigma^2` of the reflected process at zero.
    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn require_positive_drift(&self) -> Result<()> {
        if self.mu > T::zero() {
            Ok(())
        } else {
            Err(Error::TrivialCase {
                mu: self.mu.to_f64_lossy(),
            })
        }
    }
}

/// `2 mu / sigma^2`.
pub fn lambda_of<T: Scalar>(params: &ModelParams<T>) -> T {
    params.lambda()
}

fn check_nodes<T: Scalar>(nodes: &[T], what: &str) -> Result<()> {
    if nodes.len() < 3 {
        return Err(Error::InvalidGrid(format!(
            "{what} needs at least 3 nodes, got {}",
            nodes.len()
        )));
    }
    if nodes[0] != T::zero() {
        return Err(Error::InvalidGrid(format!("{what} must start at 0")));
    }
    if let Some(i) = nodes
        .windows(2)
        .position(|w| !(w[1] > w[0]) || !w[1].is_finite())
    {
        return Err(Error::InvalidGrid(format!(
            "{what} not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Locates `x` in sorted `nodes`: returns `(i, w)` with
/// `x = (1 - w) nodes[i] + w nodes[i + 1]`, clamped to the grid range.
fn locate<T: Scalar>(nodes: &[T], x: T) -> (usize, T) {
    let n = nodes.len();
    if x <= nodes[0] {
        return (0, T::zero());
    }
    if x >= nodes[n - 1] {
        return (n - 2, T::one());
    }
    let i = nodes.partition_point(|&v| v <= x) - 1;
    let i = i.min(n - 2);
    let w = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
    (i, w)
}

/// Time discretisation of `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    nodes: Vec<T>,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(nodes: Vec<T>) -> Result<Self> {
        check_nodes(&nodes, "time grid")?;
        Ok(Self { nodes })
    }

    /// `steps + 1` equally spaced nodes; the last node is exactly `horizon`.
    pub fn uniform(horizon: T, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidGrid(format!(
                "time grid needs at least 2 steps, got {steps}"
            )));
        }
        let n = T::from_usize(steps).expect("usize fits");
        let mut nodes: Vec<T> = (0..=steps)
            .map(|i| horizon * T::from_usize(i).expect("usize fits") / n)
            .collect();
        nodes[steps] = horizon;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }
    pub fn count(&self) -> usize {
        self.nodes.len()
    }
    pub fn horizon(&self) -> T {
        self.nodes[self.nodes.len() - 1]
    }
    pub fn locate(&self, t: T) -> (usize, T) {
        locate(&self.nodes, t)
    }
    /// Index of the node equal to `t` up to a relative `1e-9` of the horizon.
    pub fn index_of(&self, t: T) -> Option<usize> {
        let tol = T::c(1e-9) * self.horizon();
        self.nodes.iter().position(|&v| (v - t).abs() <= tol)
    }
}

/// Fund-level discretisation of `[0, x_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceGrid<T> {
    nodes: Vec<T>,
}

impl<T: Scalar> SpaceGrid<T> {
    pub fn new(nodes: Vec<T>) -> Result<Self> {
        check_nodes(&nodes, "space grid")?;
        Ok(Self { nodes })
    }

    pub fn uniform(x_max: T, cells: usize) -> Result<Self> {
        if cells < 2 || !(x_max > T::zero()) {
            return Err(Error::InvalidGrid(format!(
                "space grid needs x_max > 0 and >= 2 cells, got {x_max}, {cells}"
            )));
        }
        let n = T::from_usize(cells).expect("usize fits");
        let mut nodes: Vec<T> = (0..=cells)
            .map(|i| x_max * T::from_usize(i).expect("usize fits") / n)
            .collect();
        nodes[cells] = x_max;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }
    pub fn count(&self) -> usize {
        self.nodes.len()
    }
    pub fn x_max(&self) -> T {
        self.nodes[self.nodes.len() - 1]
    }
    pub fn locate(&self, x: T) -> (usize, T) {
        locate(&self.nodes, x)
    }

    /// Spacing of a uniform grid, or `None` when spacings differ by more
    /// than a relative `1e-9`, or the accumulated rounding of the scalar type.
    pub fn uniform_step(&self) -> Option<T> {
        let h = self.nodes[1] - self.nodes[0];
        let rounding = T::epsilon() * T::c(4.0 * self.nodes.len() as f64);
        let tol = T::c(1e-9).max(rounding) * h;
        self.nodes
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= tol)
            .then_some(h)
    }
}

/// Optimal dividend barrier `b(t)` sampled on a time grid, interpolated
/// piecewise-linearly in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary<T> {
    grid: TimeGrid<T>,
    values: Vec<T>,
}

impl<T: Scalar> Boundary<T> {
    /// Builds a boundary and checks it is positive before `T`, non-increasing
    /// and zero at `T`.
    pub fn new(grid: TimeGrid<T>, values: Vec<T>) -> Result<Self> {
        let b = Self::from_raw(grid, values)?;
        b.validate()?;
        Ok(b)
    }

    /// Builds a curve without the shape checks. Used to probe residuals of
    /// trial curves (for example the zero curve); only the length is checked.
    pub fn from_raw(grid: TimeGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::GridMismatch(format!(
                "boundary has {} values for {} time nodes",
                values.len(),
                grid.count()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidBoundary(
                "values must be finite and non-negative".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.values.len();
        if self.values[n - 1] != T::zero() {
            return Err(Error::InvalidBoundary(format!(
                "b(T) = {} but must be 0",
                self.values[n - 1]
            )));
        }
        if let Some(i) = self.values[..n - 1].iter().position(|v| !(*v > T::zero())) {
            return Err(Error::InvalidBoundary(format!(
                "b must be positive before T, b[{i}] = {}",
                self.values[i]
            )));
        }
        if let Some(i) = self.values.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::InvalidBoundary(format!(
                "b increases between t[{i}] and t[{}]: {} -> {}",
                i + 1,
                self.values[i],
                self.values[i + 1]
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Piecewise-linear value at `t`, clamped to `[0, T]`.
    pub fn at(&self, t: T) -> T {
        let (i, w) = self.grid.locate(t);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }
}

/// A dividend barrier as seen by the simulators: any level curve in time.
pub trait Barrier<T>: Sync {
    fn level(&self, t: T) -> T;
}

impl<T: Scalar> Barrier<T> for Boundary<T> {
    fn level(&self, t: T) -> T {
        self.at(t)
    }
}

/// Time-constant barrier `b(t) = c` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantBarrier<T>(pub T);

impl<T: Scalar> Barrier<T> for ConstantBarrier<T> {
    fn level(&self, _t: T) -> T {
        self.0
    }
}

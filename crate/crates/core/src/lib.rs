//! Solvers for the finite-horizon optimal dividend problem with absorption
//! at zero.
//!
//! The optimal dividend barrier `b(t)` and the value `V(t, x)` are computed by
//! three routes that check one another:
//!
//! * [`boundary`]: backward-marching root finding on the integral equation
//!   characterising `b`;
//! * [`pde`]: a projected finite-difference solve of the linked optimal
//!   stopping problem for `U = V_x` (reflection with creation at zero), then
//!   `V(t, x) = int_0^x U(t, y) dy`;
//! * [`mc`]: seeded Monte Carlo of the barrier strategy and of the stopping
//!   problem.
//!
//! All numerical code is generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix it to `f64`, which is what the command-line tool uses.

pub mod boundary;
pub mod config;
pub mod error;
pub mod io;
pub mod kernels;
pub mod mc;
pub mod model;
pub mod pde;
pub mod quad;
pub mod report;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use model::{lambda_of, Barrier, ConstantBarrier};
pub use scalar::Scalar;

pub type ModelParams = model::ModelParams<f64>;
pub type TimeGrid = model::TimeGrid<f64>;
pub type SpaceGrid = model::SpaceGrid<f64>;
pub type Boundary = model::Boundary<f64>;
pub type ValueSurface = pde::ValueSurface<f64>;
pub type IeSolverConfig = boundary::IeSolverConfig<f64>;
pub type PdeConfig = pde::PdeConfig<f64>;
pub type McEstimate = mc::McEstimate<f64>;

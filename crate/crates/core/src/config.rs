//! Run configuration read from a single TOML file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::boundary::{IeKernel, IeSolverConfig};
use crate::error::{Error, Result};
use crate::mc::McConfig;
use crate::model::{ModelParams, SpaceGrid, TimeGrid};
use crate::pde::{LcpSolver, PdeConfig, Scheme, DEFAULT_EXTRACT_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSection {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub horizon: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            mu: 0.5,
            sigma: 1.0,
            r: 0.05,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub time_steps: usize,
    pub space_cells: usize,
    /// Defaults to `4 sigma sqrt(T)`.
    pub x_max: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            time_steps: 400,
            space_cells: 800,
            x_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IeSection {
    /// Defaults to `1e-6 sigma sqrt(T)`.
    pub root_tol: Option<f64>,
    pub max_root_iters: usize,
    pub quad_subdivisions: usize,
    pub tail_patch_cells: usize,
    /// Defaults to `max(5 sigma sqrt T, 10 mu T)`.
    pub b_max: Option<f64>,
    pub kernel: IeKernel,
}

impl Default for IeSection {
    fn default() -> Self {
        Self {
            root_tol: None,
            max_root_iters: 200,
            quad_subdivisions: crate::boundary::DEFAULT_QUAD_POINTS,
            tail_patch_cells: 0,
            b_max: None,
            kernel: IeKernel::CreationWeighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSection {
    pub scheme: Scheme,
    pub lcp_solver: LcpSolver,
    pub psor_tol: f64,
    pub psor_max_iters: usize,
    pub psor_omega: f64,
    pub boundary_extract_tol: f64,
    pub rannacher_steps: usize,
}

impl Default for PdeSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::Bdf2Projected,
            lcp_solver: LcpSolver::BrennanSchwartz,
            psor_tol: 1e-12,
            psor_max_iters: 10_000,
            psor_omega: 1.5,
            boundary_extract_tol: DEFAULT_EXTRACT_TOL,
            rannacher_steps: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub n_paths: usize,
    /// Defaults to `1e-3 T`.
    pub dt: Option<f64>,
    pub seed: u64,
    pub bridge_correction: bool,
    pub antithetic: bool,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n_paths: 200_000,
            dt: None,
            seed: 20_240_601,
            bridge_correction: true,
            antithetic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// `C` in the bound `C (dx + dt)` on the generator residual in the continuation region.
    pub generator_constant: f64,
    /// Constant barriers for the dominance check, as multiples of `b(0)`.
    pub suboptimal_fractions: Vec<f64>,
    /// Starting level of the dominance check.
    pub suboptimal_x: f64,
    /// `(t, x)` points for the `U_x` representation check.
    pub ux_points: Vec<[f64; 2]>,
    /// Repeat the PDE solve on grids refined by two and check the error decay.
    pub refinement_study: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            generator_constant: 1.0,
            suboptimal_fractions: vec![0.25, 0.5, 1.0],
            suboptimal_x: 0.5,
            ux_points: vec![[0.0, 0.0], [0.0, 0.5], [0.5, 0.25]],
            refinement_study: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// `(t, x)` evaluation points.
    pub checkpoints: Vec<[f64; 2]>,
    pub params: ParamsSection,
    pub grids: GridSection,
    pub ie: IeSection,
    pub pde: PdeSection,
    pub mc: McSection,
    pub verify: VerifySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut checkpoints = Vec::new();
        for t in [0.0, 0.5] {
            for x in [0.0, 0.25, 0.5, 1.0] {
                checkpoints.push([t, x]);
            }
        }
        Self {
            output_dir: PathBuf::from("out"),
            checkpoints,
            params: ParamsSection::default(),
            grids: GridSection::default(),
            ie: IeSection::default(),
            pde: PdeSection::default(),
            mc: McSection::default(),
            verify: VerifySection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> Result<ModelParams<f64>> {
        let p = &self.params;
        ModelParams::new(p.mu, p.sigma, p.r, p.horizon)
    }

    pub fn x_max(&self) -> f64 {
        self.grids
            .x_max
            .unwrap_or(4.0 * self.params.sigma * self.params.horizon.sqrt())
    }

    pub fn time_grid(&self) -> Result<TimeGrid<f64>> {
        TimeGrid::uniform(self.params.horizon, self.grids.time_steps)
    }

    pub fn space_grid(&self) -> Result<SpaceGrid<f64>> {
        SpaceGrid::uniform(self.x_max(), self.grids.space_cells)
    }

    pub fn ie_config(&self) -> Result<IeSolverConfig<f64>> {
        let params = self.params()?;
        let mut cfg = IeSolverConfig::with_defaults(&params, self.time_grid()?);
        if let Some(tol) = self.ie.root_tol {
            cfg.root_tol = tol;
        }
        cfg.max_root_iters = self.ie.max_root_iters;
        cfg.quad_subdivisions = self.ie.quad_subdivisions;
        cfg.tail_patch_cells = self.ie.tail_patch_cells;
        cfg.b_max = self.ie.b_max;
        cfg.kernel = self.ie.kernel;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pde_config(&self) -> Result<PdeConfig<f64>> {
        let mut cfg = PdeConfig::new(self.time_grid()?, self.space_grid()?);
        let s = &self.pde;
        cfg.scheme = s.scheme;
        cfg.lcp_solver = s.lcp_solver;
        cfg.psor_tol = s.psor_tol;
        cfg.psor_max_iters = s.psor_max_iters;
        cfg.psor_omega = s.psor_omega;
        cfg.boundary_extract_tol = s.boundary_extract_tol;
        cfg.rannacher_steps = s.rannacher_steps;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mc_config(&self) -> Result<McConfig<f64>> {
        let m = &self.mc;
        let cfg = McConfig {
            n_paths: m.n_paths,
            dt: m.dt.unwrap_or(1e-3 * self.params.horizon),
            seed: m.seed,
            bridge_correction: m.bridge_correction,
            antithetic: m.antithetic,
        };
        cfg.validate(self.params.horizon)?;
        Ok(cfg)
    }

    /// Checkpoints must lie in `[0, T) x [0, x_max]`.
    pub fn validate_checkpoints(&self) -> Result<()> {
        let (horizon, x_max) = (self.params.horizon, self.x_max());
        for &[t, x] in &self.checkpoints {
            if !(0.0..horizon).contains(&t) || !(0.0..=x_max).contains(&x) {
                return Err(Error::Config(format!(
                    "checkpoint ({t}, {x}) outside [0, {horizon}) x [0, {x_max}]"
                )));
            }
        }
        for &[t, x] in &self.verify.ux_points {
            if !(0.0..horizon).contains(&t) || !(0.0..=x_max).contains(&x) {
                return Err(Error::Config(format!(
                    "U_x point ({t}, {x}) outside [0, {horizon}) x [0, {x_max}]"
                )));
            }
        }
        Ok(())
    }

    /// Every derived config plus checkpoint ranges. Drift sign is not checked.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.ie_config()?;
        self.pde_config()?;
        self.mc_config()?;
        self.validate_checkpoints()
    }
}

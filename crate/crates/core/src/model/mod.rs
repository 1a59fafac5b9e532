//! Latent Gaussian model engine: assembly of Models 1–3, exact Gaussian
//! conditionals, hyperparameter mode search and integration over θ.

mod assemble;
mod fit;
mod grid;
mod optimize;
mod posterior;

use serde::{Deserialize, Serialize};

pub use crate::priors::ModelKind;
pub use assemble::{assemble, AssembledModel, LatentLayout, ThetaParams};
pub use fit::{fit, fit_assembled, fit_at, fit_on_grid, fit_on_mesh, mixture_quantile, observation_moments, BetaMarginal, FitResult, HyperMarginal, LatentMarginals, ObsMoments};
pub use grid::{explore, explore_with, GridPoint, ThetaGrid};
pub use optimize::{finite_difference_hessian, nelder_mead, optimize_hyperparameters, repair_hessian, NelderMeadResult, OptimResult};
pub use posterior::{conditional_posterior, log_marginal_likelihood, log_marginal_posterior, GaussianPosterior, ThetaEval};

use crate::error::Result;
use crate::mesh::MeshConfig;
use crate::priors::PriorConfig;
use crate::spde::SpdeConfig;
use crate::temporal::DEFAULT_DIM_CAP;

/// How the hyperparameter posterior is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntStrategy {
    /// Regular grid in the standardized z-space, step `grid_step`, keeping
    /// points within `grid_drop` log-units of the mode.
    #[default]
    Grid,
    /// Central composite design: the mode, `2d` axis points and the
    /// corners of a (fractional) factorial design.
    Ccd,
    /// The mode alone.
    Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub strategy: IntStrategy,
    pub grid_step: f64,
    pub grid_drop: f64,
    /// Hard limit on the number of evaluated grid points.
    pub max_grid_points: usize,
    /// Stop when the spread of the simplex log-posteriors falls below this.
    pub optim_tol: f64,
    pub optim_max_iter: usize,
    /// Finite-difference step of the Hessian, per internal coordinate.
    pub hessian_step: f64,
    /// Starting point on the internal scale; derived from the data if absent.
    pub init: Option<Vec<f64>>,
    /// Worker threads for θ evaluations (0 = all available).
    pub threads: usize,
    /// Largest latent dimension accepted.
    pub dim_cap: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            strategy: IntStrategy::Grid,
            grid_step: 0.75,
            grid_drop: 5.0,
            max_grid_points: 20_000,
            optim_tol: 1e-4,
            optim_max_iter: 500,
            hessian_step: 1e-3,
            init: None,
            threads: 0,
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub spde: SpdeConfig,
    #[serde(default)]
    pub mesh_cfg: MeshConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            prior: PriorConfig::default(),
            spde: SpdeConfig::default(),
            mesh_cfg: MeshConfig::default(),
            inference: InferenceConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.spde.validate()?;
        self.mesh_cfg.validate()
    }
}

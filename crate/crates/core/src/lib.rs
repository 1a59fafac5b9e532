//! Spatiotemporal latent Gaussian models with SPDE Matérn fields on a
//! triangulated mesh, AR(1) time dynamics and exact Gaussian conditionals.

pub mod data_io;
pub mod diagnostics;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod model;
pub mod predict;
pub mod priors;
pub mod scalar;
pub mod sparse;
pub mod spde;
pub mod synthetic;
pub mod temporal;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CscMatrix64 = sparse::CscMatrix<f64>;
pub type CscMatrix32 = sparse::CscMatrix<f32>;
pub type SparseSpd64 = sparse::SparseSpd<f64>;
pub type SparseSpd32 = sparse::SparseSpd<f32>;
pub type CholeskyFactor64 = sparse::CholeskyFactor<f64>;
pub type FemMatrices64 = fem::FemMatrices<f64>;
pub type FemMatrices32 = fem::FemMatrices<f32>;
pub type MaternParams64 = spde::MaternParams<f64>;
pub type Ar1Params64 = temporal::Ar1Params<f64>;
pub type ProjectorMatrix64 = mesh::ProjectorMatrix<f64>;

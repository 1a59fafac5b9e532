use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the modeling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric value `{value}` in column `{column}` at line {line}")]
    NonNumeric {
        column: String,
        line: usize,
        value: String,
    },
    #[error("missing covariate `{column}` at line {line}")]
    MissingCovariate { column: String, line: usize },
    #[error("duplicate site-time key (lon {lon}, lat {lat}, year {year}, month {month})")]
    DuplicateKey {
        lon: f64,
        lat: f64,
        year: i32,
        month: u32,
    },
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("cutoff month {cutoff} outside 1..{max}")]
    CutoffOutOfRange { cutoff: usize, max: usize },
    #[error("degenerate site geometry: {0}")]
    DegenerateSites(String),
    #[error("zero-area triangle {index} with corners {corners:?}")]
    ZeroAreaTriangle {
        index: usize,
        corners: [(f64, f64); 3],
    },
    #[error("point ({x}, {y}) lies outside the mesh")]
    OutsideMesh { x: f64, y: f64 },
    #[error("matrix is not positive definite (pivot {pivot}) after {attempts} jitter attempts")]
    NotPositiveDefinite { pivot: usize, attempts: usize },
    #[error("matrix has not been factorized")]
    NotFactorized,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("non-finite objective at {0:?}")]
    NonFiniteObjective(Vec<f64>),
    #[error("rank-deficient covariate matrix: {0}")]
    RankDeficient(String),
    #[error("latent dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable code for error reporting.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Json(_) => "json",
            Error::MissingColumn(_) => "missing_column",
            Error::NonNumeric { .. } => "non_numeric",
            Error::MissingCovariate { .. } => "missing_covariate",
            Error::DuplicateKey { .. } => "duplicate_key",
            Error::ZeroVariance(_) => "zero_variance",
            Error::CutoffOutOfRange { .. } => "cutoff_out_of_range",
            Error::DegenerateSites(_) => "degenerate_sites",
            Error::ZeroAreaTriangle { .. } => "zero_area_triangle",
            Error::OutsideMesh { .. } => "outside_mesh",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::NotFactorized => "not_factorized",
            Error::Dimension(_) => "dimension",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Unsupported(_) => "unsupported",
            Error::NonFiniteObjective(_) => "non_finite_objective",
            Error::RankDeficient(_) => "rank_deficient",
            Error::DimensionCap { .. } => "dimension_cap",
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("could not place defect {placed} of {total} after {attempts} consecutive rejections")]
    Packing { placed: usize, total: usize, attempts: u64 },

    #[error("charge source within {distance:e} nm of NV {nv}")]
    SingularGeometry { nv: usize, distance: f64 },

    #[error("steady state is not unique (null space dimension {nullity})")]
    DegenerateSteadyState { nullity: usize },

    #[error("invalid PL spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("nitrogen concentration must be positive")]
    Concentration,

    #[error("quadrature did not converge (error estimate {estimate:e} after {intervals} intervals)")]
    Quadrature { estimate: f64, intervals: usize },

    #[error("fit diverged after {iterations} iterations")]
    FitDiverged { iterations: usize },

    #[error("degenerate fit input: {0}")]
    Degenerate(String),

    #[error("no resolvable spectral feature: {0}")]
    Feature(String),

    #[error("missing calibration: {0}")]
    MissingCalibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Config(e.to_string())
    }
}

//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("energies {0} and {1} are closer than the degeneracy threshold")]
    DegenerateEnergies(f64, f64),

    #[error("resolvent is singular at Q-space index {index} (E = {energy})")]
    SingularResolvent { index: usize, energy: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("supercritical charge: Z alpha = {z_alpha} >= |kappa| = {kappa}")]
    SupercriticalZ { z_alpha: f64, kappa: i32 },

    #[error("diagonalization failed: {0}")]
    DiagonalizationFailure(String),

    #[error("pair ({r}, {s}) is degenerate with the reference energy")]
    SingularDenominator { r: usize, s: usize },

    #[error("photon node k = {k} sits on a pole at {pole}")]
    PoleOnGrid { k: f64, pole: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("config error at line {line}, key `{key}`: {msg}")]
    Config { line: usize, key: String, msg: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Tags an error with the pipeline stage that produced it.
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// Innermost error after stripping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

//! Crate-wide error type.

use thiserror::Error;

/// Alias for results produced by this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by model construction, fitting and prediction.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Variance components outside the parameter space
    /// `{sigma_u^2 >= 0, sigma_e^2 > 0}`, or not finite.
    #[error("invalid variance components: sigma_u2 = {sigma_u2}, sigma_e2 = {sigma_e2}")]
    InvalidTheta { sigma_u2: f64, sigma_e2: f64 },

    /// Mismatched dimensions between related inputs.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Structurally invalid population layout (too few areas, empty sample,
    /// inconsistent covariate dimension, sample larger than population).
    #[error("invalid layout: {0}")]
    Layout(String),

    /// An input value is NaN or infinite.
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    /// The weighted cross-product matrix `X' V^-1 X` is numerically singular,
    /// so the regression coefficients are not identified.
    #[error("design matrix is rank deficient: {what}")]
    RankDeficient { what: &'static str },

    /// The Fisher information matrix cannot be inverted.
    #[error("Fisher information is singular at sigma_u2 = {sigma_u2}, sigma_e2 = {sigma_e2}")]
    SingularFisher { sigma_u2: f64, sigma_e2: f64 },

    /// Fisher scoring did not reach the convergence tolerance. Carries the
    /// last iterate so callers can diagnose or restart.
    #[error(
        "ML fit did not converge after {iterations} iterations \
         (last iterate sigma_u2 = {sigma_u2}, sigma_e2 = {sigma_e2}, step norm = {step_norm:.3e})"
    )]
    NotConverged {
        iterations: usize,
        sigma_u2: f64,
        sigma_e2: f64,
        step_norm: f64,
    },

    /// An area or unit index outside the layout.
    #[error("index out of range: {what}")]
    Index { what: &'static str },

    /// A run configuration that cannot be executed as given.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Too many resampling replicates failed for the report to be usable.
    #[error("all {attempted} replicates failed to refit; no estimate available")]
    AllReplicatesFailed { attempted: usize },
}

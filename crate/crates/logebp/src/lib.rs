//! Empirical best prediction for log-transformed variables under the
//! nested-error regression model.
//!
//! The model is the unit-level linear mixed model
//!
//! ```text
//! y_di = x_di' beta + u_d + e_di,   u_d ~ N(0, sigma_u^2),  e_di ~ N(0, sigma_e^2),
//! ```
//!
//! for areas `d = 1..D` and units `i = 1..N_d`, where only the first `n_d`
//! units of each area are sampled. The quantities of interest live on the
//! original scale of the variable `w_di = exp(y_di)` (typically `y` is a
//! log-transformed income or expenditure): individual out-of-sample values
//! `w_di` and area means `tau_d = N_d^{-1} sum_i w_di`.
//!
//! The crate provides:
//!
//! * best predictors of `w_di` and `tau_d` (exactly unbiased under the model)
//!   together with their empirical versions that plug in estimated regression
//!   coefficients (first stage) and ML variance components (second stage)
//!   ([`predict`]);
//! * maximum likelihood estimation of the variance components by Fisher
//!   scoring on the profile log-likelihood ([`fit`]);
//! * exact mean squared error (MSE) and mean crossed product error (MCPE)
//!   formulas for the known-parameter predictors, and the exact first-stage
//!   formula `M1` ([`mcpe`]);
//! * a second-order `O(1/D)` expansion of the MCPE of the second-stage
//!   predictors (`M2`, `M3` terms) ([`second_order`]);
//! * second-order-unbiased plug-in estimators of those MSEs, including the
//!   five bias-correction terms for the plugged-in `M1` ([`mse_estimation`]);
//! * a parametric bootstrap alternative with deterministic, splittable
//!   seeding ([`bootstrap`]);
//! * a Monte Carlo simulation engine used to validate every closed form
//!   against its defining expectation, plus the survey-style direct
//!   estimator for comparison studies ([`sim`]).
//!
//! Dense `O(n^3)` reference implementations of all structured linear algebra
//! live in [`reference`]; they are slow but independent, and the test suite
//! holds the production paths to them.
//!
//! All computational routines are pure functions of their inputs: nothing is
//! cached behind mutable state, so values can be shared freely across
//! threads. Monte Carlo and bootstrap replicates derive per-replicate RNG
//! seeds from a documented splittable scheme ([`rng`]), which makes every
//! result bit-reproducible for a fixed seed regardless of how many worker
//! threads execute the replicates.

pub mod bootstrap;
pub mod error;
pub mod fd;
pub mod fit;
#[cfg(test)]
pub(crate) mod fixture;
pub mod mcpe;
pub mod model;
pub mod mse_estimation;
pub mod predict;
pub mod reference;
pub mod rng;
pub mod second_order;
pub mod sim;

pub use error::{Error, Result};
pub use model::{AreaFrame, BlockGamma, PopulationLayout, Theta};

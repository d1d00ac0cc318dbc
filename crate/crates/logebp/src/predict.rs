//! Point predictors of exp-scale unit values and area means.
//!
//! The log-scale point predictor of an out-of-sample unit shrinks the area
//! residual mean,
//!
//! ```text
//! y_tilde_di = x_di' beta + gamma_d (ybar_ds - xbar_ds' beta),
//! ```
//!
//! and the exp-scale predictor corrects for the remaining conditional
//! variance, `w_tilde_di = exp(y_tilde_di + alpha_d)`, which is the exact
//! conditional mean `E(w_di | y_s)` and therefore unbiased when `(beta,
//! theta)` are the true values. Area means mix observed sample values with
//! predicted out-of-sample values. The empirical versions plug in the WLS
//! coefficients at a known `theta` (first stage) and additionally the ML
//! variance components (second stage).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fit::{wls_beta, FitResult};
use crate::model::{gamma_alpha, AreaFrame, BlockGamma, PopulationLayout, Theta};

/// Which parameters a prediction was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// True `(beta, theta)`.
    Bp,
    /// WLS coefficients at a known `theta`.
    Eb1,
    /// WLS coefficients at the ML variance components.
    Eb2,
}

/// Prediction of one out-of-sample unit.
#[derive(Debug, Clone)]
pub struct UnitPrediction {
    /// Area identifier.
    pub area_id: String,
    /// Row index of the unit within the area's out-of-sample design.
    pub unit_index: usize,
    /// Log-scale point predictor.
    pub y_tilde: f64,
    /// Exp-scale predictor `exp(y_tilde + alpha_d)`.
    pub w_tilde: f64,
    /// Parameter stage.
    pub stage: Stage,
}

/// Prediction of one area mean.
#[derive(Debug, Clone)]
pub struct AreaPrediction {
    /// Area identifier.
    pub area_id: String,
    /// Predicted mean `(sample_sum + oos_sum) / N_d`.
    pub tau_hat: f64,
    /// Exact sum of the observed sample values.
    pub sample_sum: f64,
    /// Sum of the predicted out-of-sample values.
    pub oos_sum: f64,
    /// Parameter stage.
    pub stage: Stage,
}

/// Predictions for every out-of-sample unit and every area mean.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub units: Vec<UnitPrediction>,
    pub areas: Vec<AreaPrediction>,
    pub stage: Stage,
}

fn check_area(layout: &PopulationLayout, d: usize) -> Result<&AreaFrame> {
    layout.areas().get(d).ok_or(Error::Index {
        what: "area index out of range",
    })
}

/// Log-scale predictor of out-of-sample row `i`, given the area's shrinkage.
fn y_tilde(area: &AreaFrame, bg: &BlockGamma, beta: &DVector<f64>, i: usize) -> f64 {
    let resid = area.ybar() - area.xbar().dot(beta);
    let x = area.xr().row(i);
    let mut fixed = 0.0;
    for (k, b) in beta.iter().enumerate() {
        fixed += x[k] * b;
    }
    fixed + bg.gamma * resid
}

/// Best predictor of one out-of-sample unit at known parameters.
pub fn best_predict_unit(
    layout: &PopulationLayout,
    beta: &DVector<f64>,
    theta: &Theta,
    d: usize,
    i: usize,
) -> Result<UnitPrediction> {
    let area = check_area(layout, d)?;
    if i >= area.r() {
        return Err(Error::Index {
            what: "out-of-sample unit index out of range",
        });
    }
    let bg = gamma_alpha(theta, area.n())?;
    let y = y_tilde(area, &bg, beta, i);
    Ok(UnitPrediction {
        area_id: area.id().to_string(),
        unit_index: i,
        y_tilde: y,
        w_tilde: (y + bg.alpha).exp(),
        stage: Stage::Bp,
    })
}

/// Best predictor of one area mean at known parameters. `w_s` holds the
/// observed original-scale sample values of that area alone.
pub fn best_predict_area(
    layout: &PopulationLayout,
    beta: &DVector<f64>,
    theta: &Theta,
    d: usize,
    w_s: &[f64],
) -> Result<AreaPrediction> {
    let area = check_area(layout, d)?;
    if w_s.len() != area.n() {
        return Err(Error::Dimension {
            what: "observed sample values per area",
            expected: area.n(),
            got: w_s.len(),
        });
    }
    let bg = gamma_alpha(theta, area.n())?;
    let sample_sum: f64 = w_s.iter().sum();
    let mut oos_sum = 0.0;
    for i in 0..area.r() {
        oos_sum += (y_tilde(area, &bg, beta, i) + bg.alpha).exp();
    }
    Ok(AreaPrediction {
        area_id: area.id().to_string(),
        tau_hat: (sample_sum + oos_sum) / area.pop_size() as f64,
        sample_sum,
        oos_sum,
        stage: Stage::Bp,
    })
}

fn predict_all(
    layout: &PopulationLayout,
    beta: &DVector<f64>,
    theta: &Theta,
    w_s: &[f64],
    stage: Stage,
) -> Result<PredictionSet> {
    if w_s.len() != layout.n() {
        return Err(Error::Dimension {
            what: "stacked observed sample values",
            expected: layout.n(),
            got: w_s.len(),
        });
    }
    let mut units = Vec::new();
    let mut areas = Vec::with_capacity(layout.d());
    for (d, area) in layout.areas().iter().enumerate() {
        let bg = gamma_alpha(theta, area.n())?;
        let mut oos_sum = 0.0;
        for i in 0..area.r() {
            let y = y_tilde(area, &bg, beta, i);
            let w = (y + bg.alpha).exp();
            oos_sum += w;
            units.push(UnitPrediction {
                area_id: area.id().to_string(),
                unit_index: i,
                y_tilde: y,
                w_tilde: w,
                stage,
            });
        }
        let sample_sum: f64 = layout.area_slice(w_s, d).iter().sum();
        areas.push(AreaPrediction {
            area_id: area.id().to_string(),
            tau_hat: (sample_sum + oos_sum) / area.pop_size() as f64,
            sample_sum,
            oos_sum,
            stage,
        });
    }
    Ok(PredictionSet {
        units,
        areas,
        stage,
    })
}

/// Best predictions of all out-of-sample units and area means at known
/// parameters. `w_s` holds the observed original-scale sample values,
/// stacked in layout order.
pub fn best_predict(
    layout: &PopulationLayout,
    beta: &DVector<f64>,
    theta: &Theta,
    w_s: &[f64],
) -> Result<PredictionSet> {
    predict_all(layout, beta, theta, w_s, Stage::Bp)
}

/// First-stage empirical best predictions: the coefficients are replaced by
/// their WLS estimate at a known `theta`.
pub fn eb1_predict(layout: &PopulationLayout, theta: &Theta, w_s: &[f64]) -> Result<PredictionSet> {
    let beta = wls_beta(layout, theta)?;
    predict_all(layout, &beta, theta, w_s, Stage::Eb1)
}

/// Second-stage empirical best predictions at a maximum likelihood fit.
pub fn eb2_predict(
    layout: &PopulationLayout,
    fit: &FitResult,
    w_s: &[f64],
) -> Result<PredictionSet> {
    predict_all(layout, &fit.beta_hat, &fit.theta_hat, w_s, Stage::Eb2)
}

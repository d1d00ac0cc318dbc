//! Exact error moments of the exp-scale predictors at known parameters.
//!
//! For out-of-sample units `i, j` of the same area, the mean crossed
//! product error `MCPE = E{(pred_i - w_i)(pred_j - w_j)}` has a closed form
//! both for the best predictor (known `beta`) and for its first-stage
//! empirical version (WLS `beta`, known `theta`). The diagonal `i = j` is
//! the MSE. These are finite-sample exact, not expansions: each formula is
//! a combination of Gaussian moment generating function evaluations.
//!
//! The first-stage formula assembles four expectations,
//!
//! ```text
//! MCPE = E(pred_i pred_j) + E(w_i w_j) - E(pred_i w_j) - E(pred_j w_i),
//! ```
//!
//! whose exponents reduce to scalars in the design metric `Q_s = (X_s'
//! V_s^-1 X_s)^-1` ([`HScalars`]). Cross-area MCPE is identically zero
//! under the model and is not provided.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{gamma_alpha, AreaFrame, CovOps, PopulationLayout, Theta};

/// Quadratic forms in the `Q_s` metric for one unit pair of one area.
#[derive(Debug, Clone, Copy)]
pub struct HScalars {
    /// `x_di' Q_s x_di`.
    pub h_ii: f64,
    /// `x_dj' Q_s x_dj`.
    pub h_jj: f64,
    /// `x_di' Q_s x_dj`.
    pub h_ij: f64,
    /// `x_di' Q_s xbar_ds`.
    pub h_i: f64,
    /// `x_dj' Q_s xbar_ds`.
    pub h_j: f64,
    /// `xbar_ds' Q_s xbar_ds`.
    pub h_d: f64,
}

/// The four exact expectations whose signed sum is the first-stage MCPE.
#[derive(Debug, Clone, Copy)]
pub struct PairMoments {
    /// `E(pred_i pred_j)`, both units predicted.
    pub both_predicted: f64,
    /// `E(w_i w_j)`, both units at their true values.
    pub product_of_targets: f64,
    /// `E(pred_i w_j)`.
    pub predicted_i_target_j: f64,
    /// `E(pred_j w_i)`.
    pub predicted_j_target_i: f64,
}

impl PairMoments {
    /// `E{(pred_i - w_i)(pred_j - w_j)}` for the first-stage predictors.
    pub fn mcpe(&self) -> f64 {
        self.both_predicted + self.product_of_targets
            - self.predicted_i_target_j
            - self.predicted_j_target_i
    }
}

fn oos_pair<'a>(
    layout: &'a PopulationLayout,
    d: usize,
    i: usize,
    j: usize,
) -> Result<&'a AreaFrame> {
    let area = layout.areas().get(d).ok_or(Error::Index {
        what: "area index out of range",
    })?;
    if i >= area.r() || j >= area.r() {
        return Err(Error::Index {
            what: "out-of-sample unit index out of range",
        });
    }
    Ok(area)
}

fn xrow_dot(area: &AreaFrame, i: usize, v: &DVector<f64>) -> f64 {
    let row = area.xr().row(i);
    let mut acc = 0.0;
    for (k, b) in v.iter().enumerate() {
        acc += row[k] * b;
    }
    acc
}

/// Quadratic forms of the pair `(i, j)` of out-of-sample rows of area `d`
/// in the `Q_s` metric.
pub fn h_scalars(ops: &CovOps, d: usize, i: usize, j: usize) -> Result<HScalars> {
    let area = oos_pair(ops.layout(), d, i, j)?;
    let q = ops.qs();
    let xi = area.xr().row(i).transpose();
    let xj = area.xr().row(j).transpose();
    let xbar = area.xbar();
    let qxi = q * &xi;
    let qxj = q * &xj;
    let qxbar = q * &xbar;
    Ok(HScalars {
        h_ii: qxi.dot(&xi),
        h_jj: qxj.dot(&xj),
        h_ij: qxi.dot(&xj),
        h_i: qxi.dot(&xbar),
        h_j: qxj.dot(&xbar),
        h_d: qxbar.dot(&xbar),
    })
}

/// MCPE of the best predictors of units `i, j` (out-of-sample rows of
/// area `d`) at the true parameters:
///
/// ```text
/// exp{2 sigma_u^2 + sigma_e^2 + (x_di + x_dj)' beta}
///   * [1 - exp{-sigma_u^2 (1 - gamma_d)} + (exp(sigma_e^2) - 1) 1{i=j}].
/// ```
pub fn mcpe_bp(
    beta: &DVector<f64>,
    theta: &Theta,
    area: &AreaFrame,
    i: usize,
    j: usize,
) -> Result<f64> {
    if i >= area.r() || j >= area.r() {
        return Err(Error::Index {
            what: "out-of-sample unit index out of range",
        });
    }
    let bg = gamma_alpha(theta, area.n())?;
    let u = theta.sigma_u2();
    let e = theta.sigma_e2();
    let xb = xrow_dot(area, i, beta) + xrow_dot(area, j, beta);
    // expm1 keeps the bracket accurate when u (1 - gamma) is tiny, which is
    // the regime of large well-sampled areas.
    let shrink = -(-u * (1.0 - bg.gamma)).exp_m1();
    let same = if i == j { e.exp_m1() } else { 0.0 };
    Ok((2.0 * u + e + xb).exp() * (shrink + same))
}

/// MSE of the best predictor of the area mean, accumulated by streaming
/// over the out-of-sample rows rather than materializing unit pairs:
///
/// ```text
/// N_d^-2 exp(2 sigma_u^2 + sigma_e^2)
///   * (2 [1 - exp{-sigma_u^2 (1 - gamma_d)}] S1
///      + [exp(sigma_e^2) - exp{-sigma_u^2 (1 - gamma_d)}] S2),
/// ```
///
/// with `S1` the sum of `exp{(x_di + x_dj)' beta}` over out-of-sample pairs
/// `i < j` and `S2` the sum of `exp(2 x_di' beta)`.
pub fn mse_bp_area(beta: &DVector<f64>, theta: &Theta, area: &AreaFrame) -> Result<f64> {
    let bg = gamma_alpha(theta, area.n())?;
    let u = theta.sigma_u2();
    let e = theta.sigma_e2();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for i in 0..area.r() {
        let a = xrow_dot(area, i, beta).exp();
        sum += a;
        sumsq += a * a;
    }
    let s1 = 0.5 * (sum * sum - sumsq);
    let s2 = sumsq;
    let shrink = -(-u * (1.0 - bg.gamma)).exp_m1();
    let diag = e.exp_m1() - (-u * (1.0 - bg.gamma)).exp_m1();
    let core = 2.0 * shrink * s1 + diag * s2;
    let nd = area.pop_size() as f64;
    Ok((2.0 * u + e).exp() * core / (nd * nd))
}

/// The four exact product expectations of the first-stage predictors and
/// targets for the pair `(i, j)` of out-of-sample rows of area `d`.
///
/// All four share the factor `exp{(x_di + x_dj)' beta + 2 alpha_d +
/// 2 gamma_d sigma_u^2}`; they differ by quadratic-form exponents in
/// `Q_s`, so only that common part is large and the cancellation in
/// [`PairMoments::mcpe`] stays benign.
pub fn pair_moments(
    ops: &CovOps,
    beta: &DVector<f64>,
    d: usize,
    i: usize,
    j: usize,
) -> Result<PairMoments> {
    let area = oos_pair(ops.layout(), d, i, j)?;
    let hs = h_scalars(ops, d, i, j)?;
    let theta = ops.theta();
    let bg = gamma_alpha(theta, area.n())?;
    let u = theta.sigma_u2();
    let e = theta.sigma_e2();
    let g = bg.gamma;
    let xb = xrow_dot(area, i, beta) + xrow_dot(area, j, beta);
    let base = xb + 2.0 * bg.alpha + 2.0 * g * u;
    let q_full = 0.5 * (hs.h_ii + 2.0 * hs.h_ij + hs.h_jj) - 2.0 * g * g * hs.h_d;
    let q_i = 0.5 * (hs.h_ii + 2.0 * g * hs.h_i - 3.0 * g * g * hs.h_d);
    let q_j = 0.5 * (hs.h_jj + 2.0 * g * hs.h_j - 3.0 * g * g * hs.h_d);
    let ww = u * (1.0 - g) + if i == j { e } else { 0.0 };
    Ok(PairMoments {
        both_predicted: (base + q_full).exp(),
        product_of_targets: (base + ww).exp(),
        predicted_i_target_j: (base + q_i).exp(),
        predicted_j_target_i: (base + q_j).exp(),
    })
}

/// MCPE of the first-stage empirical best predictors (WLS coefficients at
/// a known `theta`) for units `i, j` of area `d`.
pub fn mcpe_eb1(
    layout: &PopulationLayout,
    beta: &DVector<f64>,
    theta: &Theta,
    d: usize,
    i: usize,
    j: usize,
) -> Result<f64> {
    let ops = CovOps::new(layout, *theta)?;
    Ok(pair_moments(&ops, beta, d, i, j)?.mcpe())
}

//! Dense reference implementations of the structured covariance algebra.
//!
//! Everything here materializes full `n x n` matrices and costs `O(n^3)`.
//! These routines exist so tests can hold the closed-form block algebra in
//! [`crate::model`] and the trace reductions used by the MSE expansions to
//! an independent implementation; production code never calls them.

use nalgebra::{DMatrix, DVector};

use crate::model::{Delta, PopulationLayout, Theta};

/// Stacked dense design matrix `X_s`, `n x p`.
pub fn dense_x(layout: &PopulationLayout) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(layout.n(), layout.p());
    for (d, area) in layout.areas().iter().enumerate() {
        let lo = layout.offsets()[d];
        for i in 0..area.n() {
            for j in 0..layout.p() {
                x[(lo + i, j)] = area.xs()[(i, j)];
            }
        }
    }
    x
}

/// Dense block-diagonal covariance `V_s`, `n x n`.
pub fn dense_v(layout: &PopulationLayout, theta: &Theta) -> DMatrix<f64> {
    let n = layout.n();
    let mut v = DMatrix::zeros(n, n);
    for (d, area) in layout.areas().iter().enumerate() {
        let lo = layout.offsets()[d];
        for i in 0..area.n() {
            for j in 0..area.n() {
                v[(lo + i, lo + j)] = theta.sigma_u2();
            }
            v[(lo + i, lo + i)] += theta.sigma_e2();
        }
    }
    v
}

/// Dense derivative matrix `Delta_h` (`ZZ'` or the identity), `n x n`.
pub fn dense_delta(layout: &PopulationLayout, h: Delta) -> DMatrix<f64> {
    let n = layout.n();
    match h {
        Delta::E => DMatrix::identity(n, n),
        Delta::U => {
            let mut m = DMatrix::zeros(n, n);
            for d in 0..layout.d() {
                let lo = layout.offsets()[d];
                let hi = layout.offsets()[d + 1];
                for i in lo..hi {
                    for j in lo..hi {
                        m[(i, j)] = 1.0;
                    }
                }
            }
            m
        }
    }
}

/// Dense `V_s^-1` by direct inversion.
pub fn dense_vinv(layout: &PopulationLayout, theta: &Theta) -> DMatrix<f64> {
    dense_v(layout, theta)
        .try_inverse()
        .expect("V is positive definite")
}

/// Dense `Q_s = (X_s' V_s^-1 X_s)^-1`.
pub fn dense_qs(layout: &PopulationLayout, theta: &Theta) -> DMatrix<f64> {
    let x = dense_x(layout);
    let vinv = dense_vinv(layout, theta);
    (x.transpose() * &vinv * &x)
        .try_inverse()
        .expect("X' V^-1 X is invertible")
}

/// Dense residual projection `P_s = V^-1 - V^-1 X Q X' V^-1`.
pub fn dense_p(layout: &PopulationLayout, theta: &Theta) -> DMatrix<f64> {
    let x = dense_x(layout);
    let vinv = dense_vinv(layout, theta);
    let q = dense_qs(layout, theta);
    let vx = &vinv * &x;
    &vinv - &vx * q * vx.transpose()
}

/// Dense `tr(V^-1 Delta_h1 V^-1 Delta_h2 ...)`.
pub fn dense_tr_vinv_chain(layout: &PopulationLayout, theta: &Theta, hs: &[Delta]) -> f64 {
    let vinv = dense_vinv(layout, theta);
    let mut m = DMatrix::identity(layout.n(), layout.n());
    for &h in hs {
        m = m * &vinv * dense_delta(layout, h);
    }
    m.trace()
}

/// Dense `tr(P Delta_h1 P Delta_h2 ...)`.
pub fn dense_tr_p_chain(layout: &PopulationLayout, theta: &Theta, hs: &[Delta]) -> f64 {
    let p = dense_p(layout, theta);
    let mut m = DMatrix::identity(layout.n(), layout.n());
    for &h in hs {
        m = m * &p * dense_delta(layout, h);
    }
    m.trace()
}

/// Dense weighted least squares `beta_tilde = (X'V^-1X)^-1 X'V^-1 y`.
pub fn dense_wls_beta(layout: &PopulationLayout, theta: &Theta, ys: &[f64]) -> DVector<f64> {
    let x = dense_x(layout);
    let vinv = dense_vinv(layout, theta);
    let y = DVector::from_column_slice(ys);
    dense_qs(layout, theta) * (x.transpose() * &vinv * y)
}

//! Second-order `O(1/D)` expansion of the MCPE of the second-stage
//! predictors.
//!
//! Replacing the known variance components by their ML estimates adds two
//! corrections to the exact first-stage MCPE: `M2`, the leading variance
//! contribution of the estimated components to each predictor, and a pair
//! of cross terms `M3_ij + M3_ji` coupling the estimation error of the
//! components with the predictor-target gap. The expansion is accurate up
//! to terms of smaller order than `1/D`.
//!
//! Everything reduces to a handful of ingredients:
//!
//! * global trace tensors of the projected covariance at `theta`
//!   ([`ThetaTensors`]): the expected information `F`, the score bias `nu`,
//!   the pair traces `phi_tk = tr(P Delta_t P Delta_k)`, the fully
//!   symmetric triple traces `phi_htk` and `a_htk`, and the contraction
//!   `varsigma_h = tr(F^-1 (3 phi_h - a_h))`;
//! * per-area derivative scalars ([`AreaSecondOrder`]): with
//!   `t_d = sigma_e^2 + n_d sigma_u^2` every eta-vector quantity has
//!   constant entries `sigma_u^2 / t_d` on the area sample, so Jacobians
//!   and Hessians of `eta_d` and `alpha_d` collapse to closed-form 2x2
//!   objects, and the braces multiplying `E_dij` and `E*_dij` are scalars.
//!
//! The closed forms are hand derivatives of the defining expressions; each
//! is unit-tested against finite differences.

use nalgebra::{DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::mcpe::{pair_moments, PairMoments};
use crate::model::{gamma_alpha, CovOps, Delta, PopulationLayout, Theta};

/// Design-wide trace tensors at one `theta`, assembled once and shared by
/// all per-pair evaluations.
#[derive(Debug, Clone)]
pub struct ThetaTensors {
    /// Expected information of the variance components.
    pub fisher: Matrix2<f64>,
    /// Score bias `nu_h = (tr(P Delta_h) - tr(V^-1 Delta_h)) / 2`.
    pub nu: Vector2<f64>,
    /// `phi_tk = tr(P Delta_t P Delta_k)`.
    pub phi: Matrix2<f64>,
    /// `phi_htk = tr(P Delta_h P Delta_t P Delta_k)`, stored by the number
    /// of `Delta_e` factors (the trace is fully symmetric in its indices).
    pub phi3: [f64; 4],
    /// `a_htk = tr(V^-1 Delta_h V^-1 Delta_t V^-1 Delta_k)`, same storage.
    pub a3: [f64; 4],
    /// `varsigma_h = tr(F^-1 P_h)` with `p_htk = 3 phi_htk - a_htk`.
    pub varsigma: Vector2<f64>,
    finv: Matrix2<f64>,
}

impl ThetaTensors {
    /// Inverse of the expected information, computed once at assembly.
    pub fn fisher_inverse(&self) -> &Matrix2<f64> {
        &self.finv
    }
}

fn sym3(arr: &[f64; 4], h: usize, t: usize, k: usize) -> f64 {
    arr[h + t + k]
}

fn invert2(f: &Matrix2<f64>, theta: &Theta) -> Result<Matrix2<f64>> {
    let det = f[(0, 0)] * f[(1, 1)] - f[(0, 1)] * f[(1, 0)];
    if !det.is_finite() || det.abs() < 1e-300 {
        return Err(Error::SingularFisher {
            sigma_u2: theta.sigma_u2(),
            sigma_e2: theta.sigma_e2(),
        });
    }
    Ok(Matrix2::new(f[(1, 1)], -f[(0, 1)], -f[(1, 0)], f[(0, 0)]) / det)
}

fn tr_prod2(a: &Matrix2<f64>, b: &Matrix2<f64>) -> f64 {
    let mut acc = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            acc += a[(r, c)] * b[(c, r)];
        }
    }
    acc
}

/// Assembles the design-wide tensors at the `theta` of `ops`.
pub fn theta_tensors(ops: &CovOps) -> Result<ThetaTensors> {
    let theta = *ops.theta();
    let mut fisher = Matrix2::zeros();
    let mut nu = Vector2::zeros();
    let mut phi = Matrix2::zeros();
    for h in Delta::ALL {
        let i = h.idx();
        nu[i] = 0.5 * (ops.tr_p_chain(&[h]) - ops.tr_vinv_chain(&[h]));
        for l in Delta::ALL {
            let j = l.idx();
            fisher[(i, j)] = -0.5 * ops.tr_vinv_chain(&[h, l]) + ops.tr_p_chain(&[h, l]);
            phi[(i, j)] = ops.tr_p_chain(&[h, l]);
        }
    }
    // One representative chain per multiset of indices; the traces are
    // invariant under every index permutation.
    let reps = [
        [Delta::U, Delta::U, Delta::U],
        [Delta::U, Delta::U, Delta::E],
        [Delta::U, Delta::E, Delta::E],
        [Delta::E, Delta::E, Delta::E],
    ];
    let mut phi3 = [0.0; 4];
    let mut a3 = [0.0; 4];
    for (m, chain) in reps.iter().enumerate() {
        phi3[m] = ops.tr_p_chain(chain);
        a3[m] = ops.tr_vinv_chain(chain);
    }
    let finv = invert2(&fisher, &theta)?;
    let mut varsigma = Vector2::zeros();
    for h in 0..2 {
        let mut acc = 0.0;
        for t in 0..2 {
            for k in 0..2 {
                acc += finv[(k, t)] * (3.0 * sym3(&phi3, h, t, k) - sym3(&a3, h, t, k));
            }
        }
        varsigma[h] = acc;
    }
    Ok(ThetaTensors {
        fisher,
        nu,
        phi,
        phi3,
        a3,
        varsigma,
        finv,
    })
}

/// Closed-form theta-derivative scalars of one area, plus the assembled
/// braces that multiply the pair constants.
///
/// All eta-vector algebra collapses through the shrinkage ratio
/// `rho(theta) = sigma_u^2 / t_d`: the entries of `eta_d` equal `rho` on
/// the area sample, its Jacobian rows equal `rho`'s gradient, and within
/// the area `V 1 = t_d 1`.
#[derive(Debug, Clone)]
pub struct AreaSecondOrder {
    /// Gradient of `alpha_d`.
    pub dalpha: Vector2<f64>,
    /// Hessian of `alpha_d`.
    pub d2alpha: Matrix2<f64>,
    /// Gradient of the eta entry `rho = sigma_u^2 / t_d`.
    pub ratio_grad: Vector2<f64>,
    /// Hessian of `rho`.
    pub ratio_hess: Matrix2<f64>,
    /// `v_d = dalpha + 2 (d eta' / d theta) V eta = dalpha + 2 n_d
    /// sigma_u^2 ratio_grad`; the starred version coincides with it.
    pub v: Vector2<f64>,
    /// Brace of `M2` and `M2*`: `n_d t_d ratio_grad' F^-1 ratio_grad +
    /// v' F^-1 v`.
    pub k_brace: f64,
    /// Brace of `T` (multiplies `E_dij`).
    pub t_brace: f64,
    /// Brace of `T*` (multiplies `E*_dij`).
    pub t_brace_star: f64,
}

/// Brace shared by `T` and `T*`: trace part over the matrix pieces plus the
/// quadratic form in the vector pieces.
fn t_brace_from_parts(
    finv: &Matrix2<f64>,
    deta_e: &Matrix2<f64>,
    d2alpha: &Matrix2<f64>,
    b: &Matrix2<f64>,
    g: &Matrix2<f64>,
    v: &Vector2<f64>,
    nu: &Vector2<f64>,
    eps: &Vector2<f64>,
    varsigma: &Vector2<f64>,
) -> f64 {
    let inner = deta_e + 0.5 * (d2alpha + b) - g;
    tr_prod2(finv, &inner) + v.dot(&(finv * (nu + 0.5 * (eps + varsigma))))
}

/// Computes the per-area scalars and braces for an area with `n_d` sampled
/// units.
pub fn area_second_order(
    tensors: &ThetaTensors,
    theta: &Theta,
    n_d: usize,
) -> Result<AreaSecondOrder> {
    let bg = gamma_alpha(theta, n_d)?;
    let u = theta.sigma_u2();
    let e = theta.sigma_e2();
    let n = n_d as f64;
    let t = bg.t;
    let g = bg.gamma;
    let rho = u / t;

    let ratio_grad = Vector2::new(e, -u) / (t * t);
    let t3 = t * t * t;
    let ratio_hess = Matrix2::new(-2.0 * n * e, n * u - e, n * u - e, 2.0 * u) / t3;
    let dalpha = Vector2::new(e * e / (2.0 * t * t), (n * u * u / (t * t) + 1.0) / 2.0);
    let d2alpha = Matrix2::new(-n * e * e, n * u * e, n * u * e, -n * u * u) / t3;
    let v = dalpha + 2.0 * n * u * ratio_grad;

    let finv = &tensors.finv;
    let k_brace = n * t * ratio_grad.dot(&(finv * ratio_grad)) + v.dot(&(finv * v));

    // G_kl = sum_h (F^-1 v)_h phi_{hkl}; identical for the starred brace
    // because v* = v.
    let w = finv * v;
    let mut gmat = Matrix2::zeros();
    for k in 0..2 {
        for l in 0..2 {
            gmat[(k, l)] = w[0] * sym3(&tensors.phi3, 0, k, l) + w[1] * sym3(&tensors.phi3, 1, k, l);
        }
    }

    // (d eta'/d theta) E_d with E_d = 2 [Delta_u eta, Delta_e eta]: within
    // the area, Delta_u eta = n rho 1 and Delta_e eta = rho 1.
    let deta_e = Matrix2::from_columns(&[
        2.0 * n * g * ratio_grad,
        2.0 * g * ratio_grad,
    ]);
    // B_ht = 2 eta' V (d^2 eta / d theta_h d theta_t) = 2 n sigma_u^2 *
    // ratio_hess, using eta' V = sigma_u^2 1' on the area.
    let b = 2.0 * n * u * ratio_hess;
    let eps = Vector2::new(4.0 * g * g, 4.0 * n * rho * rho);
    let t_brace = t_brace_from_parts(
        finv,
        &deta_e,
        &d2alpha,
        &b,
        &gmat,
        &v,
        &tensors.nu,
        &eps,
        &tensors.varsigma,
    );

    // Starred pieces live in the space augmented by one out-of-sample unit
    // of the area: eta* appends a 1, the augmented Delta_u couples it to
    // the area block, and the d eta*/d theta rows stay those of eta.
    let deta_e_star = Matrix2::from_columns(&[n * (g + 1.0) * ratio_grad, g * ratio_grad]);
    // B*_ht = eta*' V (d^2 eta): the border row of the augmented covariance
    // contributes a second eta' V (d^2 eta), so B* equals the unstarred B.
    let b_star = 2.0 * n * u * ratio_hess;
    let eps_star = Vector2::new((g + 1.0) * (g + 1.0), n * rho * rho + 1.0);
    let t_brace_star = t_brace_from_parts(
        finv,
        &deta_e_star,
        &d2alpha,
        &b_star,
        &gmat,
        &v,
        &tensors.nu,
        &eps_star,
        &tensors.varsigma,
    );

    Ok(AreaSecondOrder {
        dalpha,
        d2alpha,
        ratio_grad,
        ratio_hess,
        v,
        k_brace,
        t_brace,
        t_brace_star,
    })
}

/// Second-order machinery for one `(layout, theta)` pair: tensors plus the
/// per-area braces, with per-pair evaluation methods.
pub struct SecondOrder<'a> {
    ops: CovOps<'a>,
    tensors: ThetaTensors,
    areas: Vec<AreaSecondOrder>,
}

impl<'a> SecondOrder<'a> {
    pub fn new(layout: &'a PopulationLayout, theta: Theta) -> Result<Self> {
        let ops = CovOps::new(layout, theta)?;
        let tensors = theta_tensors(&ops)?;
        let areas = layout
            .areas()
            .iter()
            .map(|a| area_second_order(&tensors, &theta, a.n()))
            .collect::<Result<Vec<_>>>()?;
        Ok(SecondOrder {
            ops,
            tensors,
            areas,
        })
    }

    pub fn tensors(&self) -> &ThetaTensors {
        &self.tensors
    }

    pub fn area(&self, d: usize) -> Result<&AreaSecondOrder> {
        self.areas.get(d).ok_or(Error::Index {
            what: "area index out of range",
        })
    }

    fn moments(&self, beta: &DVector<f64>, d: usize, i: usize, j: usize) -> Result<PairMoments> {
        pair_moments(&self.ops, beta, d, i, j)
    }

    /// Leading variance contribution of the estimated components,
    /// `E_dij * k_brace`.
    pub fn m2(&self, beta: &DVector<f64>, d: usize, i: usize, j: usize) -> Result<f64> {
        Ok(self.moments(beta, d, i, j)?.both_predicted * self.area(d)?.k_brace)
    }

    /// Starred companion `E*_dij * k_brace`; the brace coincides with the
    /// unstarred one because `v* = v`.
    pub fn m2_star(&self, beta: &DVector<f64>, d: usize, i: usize, j: usize) -> Result<f64> {
        Ok(self.moments(beta, d, i, j)?.predicted_i_target_j * self.area(d)?.k_brace)
    }

    /// `T` (unstarred) or `T*` (starred) for the pair; only their
    /// differences enter [`Self::m3`].
    pub fn t_term(
        &self,
        beta: &DVector<f64>,
        d: usize,
        i: usize,
        j: usize,
        starred: bool,
    ) -> Result<f64> {
        let pm = self.moments(beta, d, i, j)?;
        let a = self.area(d)?;
        Ok(if starred {
            pm.predicted_i_target_j * a.t_brace_star
        } else {
            pm.both_predicted * a.t_brace
        })
    }

    /// Cross term `M3_ij = M2/2 + T - M2*/2 - T*`; not symmetric in
    /// `(i, j)`, the full MCPE uses `M3_ij + M3_ji`.
    pub fn m3(&self, beta: &DVector<f64>, d: usize, i: usize, j: usize) -> Result<f64> {
        let pm = self.moments(beta, d, i, j)?;
        let a = self.area(d)?;
        Ok(pm.both_predicted * (0.5 * a.k_brace + a.t_brace)
            - pm.predicted_i_target_j * (0.5 * a.k_brace + a.t_brace_star))
    }

    /// Second-order MCPE of the second-stage predictors:
    /// `M1 + M2 + M3_ij + M3_ji`.
    pub fn mcpe_eb2(&self, beta: &DVector<f64>, d: usize, i: usize, j: usize) -> Result<f64> {
        let pm = self.moments(beta, d, i, j)?;
        let a = self.area(d)?;
        let half = 0.5 * a.k_brace;
        Ok(pm.mcpe()
            + pm.both_predicted * a.k_brace
            + 2.0 * pm.both_predicted * (half + a.t_brace)
            - (pm.predicted_i_target_j + pm.predicted_j_target_i) * (half + a.t_brace_star))
    }

    /// Second-order MSE of the second-stage area-mean predictor,
    /// `N_d^-2 (2 sum_{i<j} MCPE_ij + sum_i MCPE_ii)`.
    pub fn mse_eb2_area(&self, beta: &DVector<f64>, d: usize) -> Result<f64> {
        let area = self.ops.layout().areas().get(d).ok_or(Error::Index {
            what: "area index out of range",
        })?;
        let mut total = 0.0;
        for i in 0..area.r() {
            total += self.mcpe_eb2(beta, d, i, i)?;
            for j in (i + 1)..area.r() {
                total += 2.0 * self.mcpe_eb2(beta, d, i, j)?;
            }
        }
        let nd = area.pop_size() as f64;
        Ok(total / (nd * nd))
    }
}

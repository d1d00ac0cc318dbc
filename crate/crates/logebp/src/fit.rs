//! Maximum likelihood estimation of the variance components.
//!
//! The regression coefficients are profiled out, so the criterion is the
//! penalized log-likelihood
//!
//! ```text
//! l_P(theta) = -1/2 (log|V_s| + y_s' P_s y_s),
//! ```
//!
//! maximized by Fisher scoring with backtracking step-halving. Scoring uses
//! the expected information `F` rather than the observed Hessian because `F`
//! is positive definite on the whole parameter space while the Hessian need
//! not be. The `sigma_u^2 >= 0` constraint is handled by projection: a step
//! that crosses the face is clamped, and after two consecutive clamps the
//! exact boundary solution `(0, SSE_ols / n)` is checked as a KKT point.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::model::{delta_apply, dot, CovOps, Delta, PopulationLayout, Theta};

/// Score vector, observed Hessian, Fisher information and score bias of the
/// penalized log-likelihood at one `theta`.
///
/// The score has expectation `nu`, not zero, at the true parameters: the
/// quadratic form in `l_P` runs through the residual projection `P_s`, whose
/// expectation differs from the `V_s^-1` appearing in the determinant term
/// by the hat-matrix part.
#[derive(Debug, Clone)]
pub struct ScoreState {
    /// Gradient of `l_P`, ordered `(sigma_u^2, sigma_e^2)`.
    pub score: Vector2<f64>,
    /// Second derivative matrix of `l_P`.
    pub hessian: Matrix2<f64>,
    /// Expected information `F = -E(hessian)`.
    pub fisher: Matrix2<f64>,
    /// Score bias `nu_h = (tr(P_s Delta_h) - tr(V_s^-1 Delta_h)) / 2`.
    pub nu: Vector2<f64>,
}

/// A converged maximum likelihood fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// WLS coefficients at the fitted variance components.
    pub beta_hat: DVector<f64>,
    /// Fitted variance components.
    pub theta_hat: Theta,
    /// Fisher information at the fit.
    pub fisher_at_hat: Matrix2<f64>,
    /// Penalized log-likelihood at the fit.
    pub loglik: f64,
    /// Fisher scoring iterations consumed.
    pub iterations: usize,
    /// Always true on a returned fit; non-convergence is an error.
    pub converged: bool,
    /// The fit lies on the `sigma_u^2 = 0` face.
    pub boundary_hit: bool,
}

/// Tuning knobs for [`fit_ml`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Maximum Fisher scoring iterations.
    pub max_iter: usize,
    /// Convergence tolerance on the scoring step norm `|F^-1 s|`.
    pub tol: f64,
    /// Starting point; method-of-moments estimates when absent.
    pub theta_init: Option<Theta>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            theta_init: None,
        }
    }
}

/// Evaluates the penalized log-likelihood at `theta`.
pub fn penalized_loglik(layout: &PopulationLayout, theta: &Theta) -> Result<f64> {
    let ops = CovOps::new(layout, *theta)?;
    Ok(loglik_with(&ops, &layout.flat_ys()))
}

pub(crate) fn loglik_with(ops: &CovOps, ys: &[f64]) -> f64 {
    let py = ops.apply_p(ys);
    -0.5 * (ops.logdet_v() + dot(ys, &py))
}

/// Computes score, Hessian, Fisher information and score bias at `theta`.
pub fn score_hessian_fisher(layout: &PopulationLayout, theta: &Theta) -> Result<ScoreState> {
    let ops = CovOps::new(layout, *theta)?;
    Ok(score_state_with(&ops, &layout.flat_ys()))
}

pub(crate) fn score_state_with(ops: &CovOps, ys: &[f64]) -> ScoreState {
    let layout = ops.layout();
    let py = ops.apply_p(ys);
    // Delta_h (P y) and P Delta_h (P y), once per component.
    let dpy = [
        delta_apply(layout, Delta::U, &py),
        delta_apply(layout, Delta::E, &py),
    ];
    let pdpy = [ops.apply_p(&dpy[0]), ops.apply_p(&dpy[1])];
    let mut score = Vector2::zeros();
    let mut nu = Vector2::zeros();
    let mut hessian = Matrix2::zeros();
    let mut fisher = Matrix2::zeros();
    for h in Delta::ALL {
        let i = h.idx();
        let tr_v = ops.tr_vinv_chain(&[h]);
        let tr_p = ops.tr_p_chain(&[h]);
        // y'P Delta P y = (Py)' Delta (Py) since P X = 0 kills the fixed
        // part of y as well.
        score[i] = -0.5 * tr_v + 0.5 * dot(&py, &dpy[i]);
        nu[i] = 0.5 * (tr_p - tr_v);
        for l in Delta::ALL {
            let j = l.idx();
            hessian[(i, j)] =
                0.5 * ops.tr_vinv_chain(&[h, l]) - dot(&dpy[i], &pdpy[j]);
            fisher[(i, j)] =
                -0.5 * ops.tr_vinv_chain(&[h, l]) + ops.tr_p_chain(&[h, l]);
        }
    }
    ScoreState {
        score,
        hessian,
        fisher,
        nu,
    }
}

/// WLS coefficients `beta_tilde(theta) = Q_s X_s' V_s^-1 y_s`.
pub fn wls_beta(layout: &PopulationLayout, theta: &Theta) -> Result<DVector<f64>> {
    let ops = CovOps::new(layout, *theta)?;
    Ok(ops.wls_beta(&layout.flat_ys()))
}

/// Ordinary least squares coefficients and residual sum of squares.
fn ols_fit(layout: &PopulationLayout) -> Result<(DVector<f64>, f64)> {
    let p = layout.p();
    let beta = if p == 0 {
        DVector::zeros(0)
    } else {
        let mut sxx = DMatrix::zeros(p, p);
        let mut sxy = DVector::zeros(p);
        for area in layout.areas() {
            sxx += area.xs().transpose() * area.xs();
            sxy += area.xs().transpose() * area.ys();
        }
        sxx.cholesky()
            .ok_or(Error::RankDeficient {
                what: "X' X is not positive definite",
            })?
            .solve(&sxy)
    };
    let mut sse = 0.0;
    for area in layout.areas() {
        let r = area.ys() - area.xs() * &beta;
        sse += r.norm_squared();
    }
    Ok((beta, sse))
}

/// Method-of-moments starting values: within-area residual variance for
/// `sigma_e^2`, the residual total minus it for `sigma_u^2`. Falls back to
/// an even split of the OLS residual variance when the decomposition
/// degenerates.
fn initial_theta(layout: &PopulationLayout) -> Result<Theta> {
    let (beta, sse) = ols_fit(layout)?;
    let n = layout.n() as f64;
    let d = layout.d() as f64;
    let p = layout.p() as f64;
    let total = sse / (n - p).max(1.0);
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::NonFinite {
            what: "residual variance of the starting fit",
        });
    }
    let mut within = 0.0;
    for area in layout.areas() {
        let r = area.ys() - area.xs() * &beta;
        let rbar = r.mean();
        within += r.iter().map(|v| (v - rbar) * (v - rbar)).sum::<f64>();
    }
    let e0 = within / (n - d).max(1.0);
    if n > d && e0.is_finite() && e0 > 0.0 {
        Theta::new((total - e0).max(0.0), e0)
    } else {
        Theta::new(0.5 * total, 0.5 * total)
    }
}

/// Exact maximizer on the `sigma_u^2 = 0` face: with `V_s = sigma_e^2 I` the
/// coefficients are OLS and `l_P` is maximized at `sigma_e^2 = SSE / n`.
fn boundary_theta(layout: &PopulationLayout) -> Result<Theta> {
    let (_, sse) = ols_fit(layout)?;
    Theta::new(0.0, sse / layout.n() as f64)
}

fn solve2(f: &Matrix2<f64>, s: &Vector2<f64>) -> Option<Vector2<f64>> {
    let det = f[(0, 0)] * f[(1, 1)] - f[(0, 1)] * f[(1, 0)];
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    let x = (s[0] * f[(1, 1)] - s[1] * f[(0, 1)]) / det;
    let y = (f[(0, 0)] * s[1] - f[(1, 0)] * s[0]) / det;
    if x.is_finite() && y.is_finite() {
        Some(Vector2::new(x, y))
    } else {
        None
    }
}

/// Clamps a raw candidate onto the parameter space. `None` when the unit
/// variance has collapsed; the flag reports a `sigma_u^2` projection.
fn clamp_theta(u: f64, e: f64) -> Option<(Theta, bool)> {
    if e <= 1e-12 {
        return None;
    }
    let projected = u < 0.0;
    Theta::new(u.max(0.0), e).ok().map(|t| (t, projected))
}

/// Fits the variance components by maximum likelihood and the coefficients
/// by WLS at the fitted value.
pub fn fit_ml(layout: &PopulationLayout, options: &FitOptions) -> Result<FitResult> {
    let ys = layout.flat_ys();
    let mut theta = match options.theta_init {
        Some(t) => t,
        None => initial_theta(layout)?,
    };
    let mut projections = 0u32;
    let mut step_norm = f64::INFINITY;
    for it in 1..=options.max_iter {
        let ops = CovOps::new(layout, theta)?;
        let state = score_state_with(&ops, &ys);
        if theta.sigma_u2() == 0.0 && state.score[0] <= 0.0 {
            // Pinned on the face with no inward pull: freeze sigma_u^2 = 0,
            // where sigma_e^2 has the exact solution SSE / n. Accept it if
            // the face is a KKT point there, otherwise restart just inside.
            let tb = boundary_theta(layout)?;
            let sb = score_hessian_fisher(layout, &tb)?;
            if sb.score[0] <= 0.0 {
                return finish(layout, &ys, tb, it);
            }
            theta = Theta::new(1e-8 * tb.sigma_e2(), tb.sigma_e2())?;
            projections = 0;
            continue;
        }
        let step = solve2(&state.fisher, &state.score).ok_or(Error::SingularFisher {
            sigma_u2: theta.sigma_u2(),
            sigma_e2: theta.sigma_e2(),
        })?;
        step_norm = step.norm();
        if step_norm <= options.tol {
            // Converged; the final unclamped nudge is below tolerance.
            if let Some((t, _)) = clamp_theta(
                theta.sigma_u2() + step[0],
                theta.sigma_e2() + step[1],
            ) {
                theta = t;
            }
            return finish(layout, &ys, theta, it);
        }
        let u0 = theta.sigma_u2();
        let e0 = theta.sigma_e2();
        // Terminal Newton polish. The scoring map theta + F^-1 s need not
        // contract near the optimum (its local multiplier is I + F^-1 H),
        // while the Newton step is quadratically stable wherever the
        // observed Hessian is negative definite.
        let mut newton: Option<(Theta, bool)> = None;
        if step_norm < 1e-4 {
            let h = state.hessian;
            let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
            if h[(0, 0)] < 0.0 && det > 0.0 {
                if let Some(nd) = solve2(&(-h), &state.score) {
                    let (u, e) = (u0 + nd[0], e0 + nd[1]);
                    if u >= 0.0 && e > 1e-12 {
                        newton = Theta::new(u, e).ok().map(|t| (t, false));
                    }
                }
            }
        }
        let (cand, projected) = if let Some(c) = newton {
            c
        } else if step_norm < 1e-6 {
            // Close to stationarity the line search would only compare
            // rounding noise in l_P; take raw scoring steps instead.
            clamp_theta(u0 + step[0], e0 + step[1]).ok_or(Error::InvalidTheta {
                sigma_u2: u0 + step[0],
                sigma_e2: e0 + step[1],
            })?
        } else {
            let ll0 = loglik_with(&ops, &ys);
            let mut lam = 1.0;
            loop {
                if let Some((t, proj)) = clamp_theta(u0 + lam * step[0], e0 + lam * step[1]) {
                    let ll = CovOps::new(layout, t).map(|o| loglik_with(&o, &ys))?;
                    if ll >= ll0 - 1e-14 {
                        break (t, proj);
                    }
                }
                lam *= 0.5;
                if lam < 1e-12 {
                    // No uphill point left on the ray: numerical stall.
                    return Err(Error::NotConverged {
                        iterations: it,
                        sigma_u2: u0,
                        sigma_e2: e0,
                        step_norm,
                    });
                }
            }
        };
        let moved = (cand.sigma_u2() - u0).hypot(cand.sigma_e2() - e0);
        theta = cand;
        projections = if projected { projections + 1 } else { 0 };
        if projections >= 2 {
            // Two consecutive clamps: freeze the face and check the exact
            // boundary solution for a KKT point (inward derivative <= 0).
            let tb = boundary_theta(layout)?;
            let sb = score_hessian_fisher(layout, &tb)?;
            if sb.score[0] <= 0.0 {
                return finish(layout, &ys, tb, it);
            }
            // The face is not a maximum after all; restart just inside.
            theta = Theta::new(1e-8 * tb.sigma_e2(), tb.sigma_e2())?;
            projections = 0;
            continue;
        }
        if moved == 0.0 {
            return Err(Error::NotConverged {
                iterations: it,
                sigma_u2: theta.sigma_u2(),
                sigma_e2: theta.sigma_e2(),
                step_norm,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: options.max_iter,
        sigma_u2: theta.sigma_u2(),
        sigma_e2: theta.sigma_e2(),
        step_norm,
    })
}

fn finish(
    layout: &PopulationLayout,
    ys: &[f64],
    theta: Theta,
    iterations: usize,
) -> Result<FitResult> {
    let ops = CovOps::new(layout, theta)?;
    let state = score_state_with(&ops, ys);
    Ok(FitResult {
        beta_hat: ops.wls_beta(ys),
        theta_hat: theta,
        fisher_at_hat: state.fisher,
        loglik: loglik_with(&ops, ys),
        iterations,
        converged: true,
        boundary_hit: theta.sigma_u2() == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;
    use crate::model::AreaFrame;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Frozen values in these tests come from tools/oracle/oracle.py
    // (output at tools/oracle/oracle_out.txt).

    #[test]
    fn loglik_and_score_state_match_dense_oracle() {
        let layout = fixture::layout3();
        let th = fixture::theta0();
        let ll = penalized_loglik(&layout, &th).unwrap();
        assert_relative_eq!(ll, -1.07985948821273992e+00, max_relative = 1e-12);

        let st = score_hessian_fisher(&layout, &th).unwrap();
        assert_relative_eq!(st.score[0], 3.72052040609188062e-01, max_relative = 1e-10);
        assert_relative_eq!(st.score[1], -3.49603261994181702e+00, max_relative = 1e-10);
        assert_relative_eq!(st.hessian[(0, 0)], -9.55280001093206721e+00, max_relative = 1e-10);
        assert_relative_eq!(st.hessian[(0, 1)], -3.77847482363739129e+00, max_relative = 1e-10);
        assert_relative_eq!(st.hessian[(1, 0)], -3.77847482363739218e+00, max_relative = 1e-10);
        assert_relative_eq!(st.hessian[(1, 1)], 1.40670122491929916e+00, max_relative = 1e-9);
        assert_relative_eq!(st.fisher[(0, 0)], 2.47027490382808068e+00, max_relative = 1e-10);
        assert_relative_eq!(st.fisher[(0, 1)], 1.00853739522759911e+00, max_relative = 1e-10);
        assert_relative_eq!(st.fisher[(1, 1)], 8.37389387881537850e+00, max_relative = 1e-10);
        assert_relative_eq!(st.nu[0], -1.20574795488125686e+00, max_relative = 1e-10);
        assert_relative_eq!(st.nu[1], -1.39712602255937135e+00, max_relative = 1e-10);

        let beta = wls_beta(&layout, &th).unwrap();
        assert_relative_eq!(beta[0], 1.05835144209400922e+00, max_relative = 1e-11);
        assert_relative_eq!(beta[1], -1.91220104027772675e-01, max_relative = 1e-11);
    }

    #[test]
    fn hessian_matches_finite_differences_of_score() {
        let layout = fixture::layout3();
        for th in [fixture::theta0(), Theta::new(0.7, 0.3).unwrap()] {
            let st = score_hessian_fisher(&layout, &th).unwrap();
            let spec = crate::fd::FdSpec::with_lower(vec![None, None]);
            for h in 0..2 {
                let g = crate::fd::gradient(
                    |t| {
                        let th = Theta::new(t[0], t[1]).unwrap();
                        score_hessian_fisher(&layout, &th).unwrap().score[h]
                    },
                    &th.as_vec(),
                    &spec,
                );
                for l in 0..2 {
                    assert_relative_eq!(st.hessian[(h, l)], g[l], max_relative = 1e-5);
                }
            }
        }
    }

    #[test]
    fn fisher_is_negative_expected_hessian_and_score_mean_is_nu() {
        // Monte Carlo check of E(H) = -F and E(s) = nu at the true theta.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layout = fixture::uniform_layout(30, 3, 1, &mut rng);
        let beta = fixture::beta0();
        let th = Theta::new(0.3, 0.6).unwrap();
        let reps = 4000;
        let mut sum_h = [0.0; 4];
        let mut sumsq_h = [0.0; 4];
        let mut sum_s = [0.0; 2];
        let mut sumsq_s = [0.0; 2];
        for _ in 0..reps {
            let ys = fixture::draw_ys(&layout, &beta, &th, &mut rng);
            let data = fixture::with_ys(&layout, &ys);
            let st = score_hessian_fisher(&data, &th).unwrap();
            for (k, (i, j)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                sum_h[k] += st.hessian[(i, j)];
                sumsq_h[k] += st.hessian[(i, j)] * st.hessian[(i, j)];
            }
            for i in 0..2 {
                sum_s[i] += st.score[i];
                sumsq_s[i] += st.score[i] * st.score[i];
            }
        }
        let st = score_hessian_fisher(&fixture::with_ys(&layout, &vec![0.0; layout.n()]), &th)
            .unwrap();
        let nf = reps as f64;
        for (k, (i, j)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
            let mean = sum_h[k] / nf;
            let se = ((sumsq_h[k] / nf - mean * mean) / nf).sqrt();
            assert!(
                (mean + st.fisher[(i, j)]).abs() <= 3.0 * se,
                "E(H[{i}{j}]) = {mean} vs -F = {} (3 se = {})",
                -st.fisher[(i, j)],
                3.0 * se
            );
        }
        for i in 0..2 {
            let mean = sum_s[i] / nf;
            let se = ((sumsq_s[i] / nf - mean * mean) / nf).sqrt();
            assert!(
                (mean - st.nu[i]).abs() <= 3.0 * se,
                "E(s[{i}]) = {mean} vs nu = {} (3 se = {})",
                st.nu[i],
                3.0 * se
            );
        }
    }

    #[test]
    fn ml_fit_matches_dense_oracle() {
        let layout = fixture::layout3();
        let fit = fit_ml(&layout, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(!fit.boundary_hit);
        assert!(fit.iterations < 100);
        assert_relative_eq!(
            fit.theta_hat.sigma_u2(),
            4.22648803542613194e-01,
            epsilon = 5e-8
        );
        assert_relative_eq!(
            fit.theta_hat.sigma_e2(),
            1.90617505011021593e-01,
            epsilon = 5e-8
        );
        assert_relative_eq!(fit.beta_hat[0], 1.11603178768330502e+00, epsilon = 1e-8);
        assert_relative_eq!(fit.beta_hat[1], -2.67191846128177590e-01, epsilon = 1e-8);
        assert_relative_eq!(fit.loglik, -4.98677323173968290e-02, epsilon = 1e-12);
        // Interior stationarity at the returned fit.
        let st = score_hessian_fisher(&layout, &fit.theta_hat).unwrap();
        let step = solve2(&st.fisher, &st.score).unwrap();
        assert!(step.norm() <= 1e-6);
        assert!(fit.fisher_at_hat.cholesky().is_some(), "F not PD at the fit");
    }

    #[test]
    fn ml_fit_is_start_independent() {
        let layout = fixture::layout3();
        let base = fit_ml(&layout, &FitOptions::default()).unwrap();
        for start in [(1.0, 1.0), (0.01, 2.0)] {
            let opts = FitOptions {
                theta_init: Some(Theta::new(start.0, start.1).unwrap()),
                ..FitOptions::default()
            };
            let fit = fit_ml(&layout, &opts).unwrap();
            assert_relative_eq!(
                fit.theta_hat.sigma_u2(),
                base.theta_hat.sigma_u2(),
                epsilon = 1e-8
            );
            assert_relative_eq!(
                fit.theta_hat.sigma_e2(),
                base.theta_hat.sigma_e2(),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn flat_response_hits_boundary_closed_form() {
        let layout = fixture::layout3_flat();
        let fit = fit_ml(&layout, &FitOptions::default()).unwrap();
        assert!(fit.boundary_hit);
        assert_eq!(fit.theta_hat.sigma_u2(), 0.0);
        assert_relative_eq!(
            fit.theta_hat.sigma_e2(),
            1.26640878721037325e-01,
            max_relative = 1e-12
        );
        // KKT at the face: the inward derivative must not be positive.
        let st = score_hessian_fisher(&layout, &fit.theta_hat).unwrap();
        assert!(st.score[0] <= 0.0);
    }

    #[test]
    fn wls_reduces_to_ols_without_area_variance() {
        let layout = fixture::layout3();
        let beta = wls_beta(&layout, &Theta::new(0.0, 0.7).unwrap()).unwrap();
        let (ols, _) = ols_fit(&layout).unwrap();
        assert_relative_eq!(beta[0], ols[0], max_relative = 1e-12);
        assert_relative_eq!(beta[1], ols[1], max_relative = 1e-12);
    }

    #[test]
    fn balanced_intercept_only_wls_is_mean_of_area_means() {
        // Equal n_d makes every area weight equal, so beta_tilde collapses
        // to the unweighted mean of the area means for any theta.
        let ys = [
            DVector::from_column_slice(&[1.0, 2.0, 3.0]),
            DVector::from_column_slice(&[0.0, 1.0, -1.0]),
            DVector::from_column_slice(&[4.0, 5.0, 6.0]),
            DVector::from_column_slice(&[2.0, 2.0, 2.0]),
        ];
        let areas = ys
            .into_iter()
            .enumerate()
            .map(|(d, y)| {
                AreaFrame::new(
                    format!("a{d}"),
                    nalgebra::DMatrix::from_element(3, 1, 1.0),
                    y,
                    nalgebra::DMatrix::zeros(0, 1),
                )
                .unwrap()
            })
            .collect();
        let layout = PopulationLayout::new(areas).unwrap();
        let mean_of_means = (2.0 + 0.0 + 5.0 + 2.0) / 4.0;
        for th in [Theta::new(0.4, 0.9).unwrap(), Theta::new(2.0, 0.1).unwrap()] {
            let beta = wls_beta(&layout, &th).unwrap();
            assert_relative_eq!(beta[0], mean_of_means, max_relative = 1e-12);
        }
    }

    #[test]
    fn nu_vanishes_without_covariates() {
        // p = 0 makes P_s = V_s^-1 exactly, so the score bias is zero.
        let base = fixture::layout3();
        let areas = base
            .areas()
            .iter()
            .map(|a| {
                AreaFrame::new(
                    a.id(),
                    nalgebra::DMatrix::zeros(a.n(), 0),
                    a.ys().clone(),
                    nalgebra::DMatrix::zeros(a.r(), 0),
                )
                .unwrap()
            })
            .collect();
        let layout = PopulationLayout::new(areas).unwrap();
        let st = score_hessian_fisher(&layout, &fixture::theta0()).unwrap();
        assert_eq!(st.nu[0], 0.0);
        assert_eq!(st.nu[1], 0.0);
    }

    #[test]
    fn fit_is_a_local_maximum_on_random_instances() {
        // Ascent plus local optimality, over a bag of random designs.
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let d = 3 + (seed as usize % 4);
            let layout = fixture::uniform_layout(d, 2 + (seed as usize % 3), 1, &mut rng);
            let beta = fixture::beta0();
            let th = Theta::new(0.2 + 0.1 * (seed % 3) as f64, 0.5).unwrap();
            let ys = fixture::draw_ys(&layout, &beta, &th, &mut rng);
            let data = fixture::with_ys(&layout, &ys);
            let fit = match fit_ml(&data, &FitOptions::default()) {
                Ok(f) => f,
                // Tiny designs may legitimately fail; skip those seeds.
                Err(Error::NotConverged { .. }) => continue,
                Err(e) => panic!("seed {seed}: {e}"),
            };
            let start = initial_theta(&data).unwrap();
            let ll_start = penalized_loglik(&data, &start).unwrap();
            assert!(
                fit.loglik >= ll_start - 1e-10,
                "seed {seed}: descent from start"
            );
            let (u, e) = (fit.theta_hat.sigma_u2(), fit.theta_hat.sigma_e2());
            let slack = 1e-10 * (1.0 + fit.loglik.abs());
            for (du, de) in [
                (1e-3, 0.0),
                (-1e-3, 0.0),
                (0.0, 1e-3),
                (0.0, -1e-3),
                (1e-3, 1e-3),
                (-1e-3, -1e-3),
            ] {
                let pu = u + du * (1.0 + u);
                let pe = e + de * (1.0 + e);
                if pu < 0.0 || pe <= 1e-6 {
                    continue;
                }
                let probe = Theta::new(pu, pe).unwrap();
                let ll = penalized_loglik(&data, &probe).unwrap();
                assert!(
                    ll <= fit.loglik + slack,
                    "seed {seed}: probe ({pu}, {pe}) beats the fit by {}",
                    ll - fit.loglik
                );
            }
        }
    }
}

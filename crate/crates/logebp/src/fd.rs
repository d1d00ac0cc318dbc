//! Finite-difference derivatives with boundary-aware stencils.
//!
//! The second-order MSE estimators need first and second derivatives of the
//! exact first-stage MCPE with respect to the variance components. Those are
//! taken numerically here: central differences with one level of Richardson
//! extrapolation in the interior, switching to second-order one-sided
//! stencils (no extrapolation) for any coordinate sitting close enough to a
//! lower bound that a centered stencil would leave the parameter space.

use nalgebra::DMatrix;

/// Step control and box constraints for numeric differentiation.
#[derive(Debug, Clone)]
pub struct FdSpec {
    /// Base relative step; the per-coordinate step is
    /// `rel_step * (1 + |x_i|)`.
    pub rel_step: f64,
    /// Optional lower bound per coordinate. A coordinate uses one-sided
    /// (forward) stencils when `x_i - 2 h_i` would cross its bound.
    pub lower: Vec<Option<f64>>,
}

impl FdSpec {
    /// Spec with the default step `1e-4 * (1 + |x_i|)` and the given bounds.
    pub fn with_lower(lower: Vec<Option<f64>>) -> Self {
        Self {
            rel_step: 1e-4,
            lower,
        }
    }

    fn step(&self, xi: f64) -> f64 {
        self.rel_step * (1.0 + xi.abs())
    }

    fn one_sided(&self, i: usize, xi: f64, h: f64) -> bool {
        match self.lower.get(i).copied().flatten() {
            Some(lo) => xi - 2.0 * h < lo,
            None => false,
        }
    }
}

/// First-derivative stencil at step `h`: offsets in units of `h` and weights
/// already divided by `h`.
fn d1_stencil(one_sided: bool, h: f64) -> Vec<(f64, f64)> {
    if one_sided {
        // (-3 f0 + 4 f1 - f2) / (2h), O(h^2).
        vec![(0.0, -1.5 / h), (1.0, 2.0 / h), (2.0, -0.5 / h)]
    } else {
        vec![(-1.0, -0.5 / h), (1.0, 0.5 / h)]
    }
}

/// Pure second-derivative stencil at step `h`.
fn d2_stencil(one_sided: bool, h: f64) -> Vec<(f64, f64)> {
    let h2 = h * h;
    if one_sided {
        // (2 f0 - 5 f1 + 4 f2 - f3) / h^2, O(h^2).
        vec![
            (0.0, 2.0 / h2),
            (1.0, -5.0 / h2),
            (2.0, 4.0 / h2),
            (3.0, -1.0 / h2),
        ]
    } else {
        vec![(-1.0, 1.0 / h2), (0.0, -2.0 / h2), (1.0, 1.0 / h2)]
    }
}

fn apply_1d<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], i: usize, st: &[(f64, f64)], h: f64) -> f64 {
    let mut xt = x.to_vec();
    let mut acc = 0.0;
    for &(off, w) in st {
        xt[i] = x[i] + off * h;
        acc += w * f(&xt);
    }
    acc
}

fn apply_2d<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: &[f64],
    i: usize,
    sti: &[(f64, f64)],
    hi: f64,
    j: usize,
    stj: &[(f64, f64)],
    hj: f64,
) -> f64 {
    let mut xt = x.to_vec();
    let mut acc = 0.0;
    for &(oi, wi) in sti {
        for &(oj, wj) in stj {
            xt[i] = x[i] + oi * hi;
            xt[j] = x[j] + oj * hj;
            acc += wi * wj * f(&xt);
        }
    }
    acc
}

/// Richardson combination of approximations at steps `h` and `h/2`, both of
/// leading error `O(h^2)`.
fn richardson(d_h: f64, d_h2: f64) -> f64 {
    (4.0 * d_h2 - d_h) / 3.0
}

/// Gradient of `f` at `x`.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], spec: &FdSpec) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let h = spec.step(x[i]);
            if spec.one_sided(i, x[i], h) {
                apply_1d(&f, x, i, &d1_stencil(true, h), h)
            } else {
                let d1 = apply_1d(&f, x, i, &d1_stencil(false, h), h);
                let d2 = apply_1d(&f, x, i, &d1_stencil(false, h / 2.0), h / 2.0);
                richardson(d1, d2)
            }
        })
        .collect()
}

/// Hessian of `f` at `x`, symmetrized.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], spec: &FdSpec) -> DMatrix<f64> {
    let k = x.len();
    let mut hmat = DMatrix::zeros(k, k);
    for i in 0..k {
        let hi = spec.step(x[i]);
        let osi = spec.one_sided(i, x[i], hi);
        // Diagonal entry.
        let dii = if osi {
            apply_1d(&f, x, i, &d2_stencil(true, hi), hi)
        } else {
            let a = apply_1d(&f, x, i, &d2_stencil(false, hi), hi);
            let b = apply_1d(&f, x, i, &d2_stencil(false, hi / 2.0), hi / 2.0);
            richardson(a, b)
        };
        hmat[(i, i)] = dii;
        for j in (i + 1)..k {
            let hj = spec.step(x[j]);
            let osj = spec.one_sided(j, x[j], hj);
            let dij = if osi || osj {
                apply_2d(
                    &f,
                    x,
                    i,
                    &d1_stencil(osi, hi),
                    hi,
                    j,
                    &d1_stencil(osj, hj),
                    hj,
                )
            } else {
                let a = apply_2d(
                    &f,
                    x,
                    i,
                    &d1_stencil(false, hi),
                    hi,
                    j,
                    &d1_stencil(false, hj),
                    hj,
                );
                let b = apply_2d(
                    &f,
                    x,
                    i,
                    &d1_stencil(false, hi / 2.0),
                    hi / 2.0,
                    j,
                    &d1_stencil(false, hj / 2.0),
                    hj / 2.0,
                );
                richardson(a, b)
            };
            hmat[(i, j)] = dij;
            hmat[(j, i)] = dij;
        }
    }
    hmat
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Smooth test function with known derivatives: f = exp(a) sin(b) + a^2 b.
    fn f(x: &[f64]) -> f64 {
        x[0].exp() * x[1].sin() + x[0] * x[0] * x[1]
    }

    #[test]
    fn gradient_matches_analytic_interior() {
        let x = [0.4, 0.9];
        let spec = FdSpec::with_lower(vec![None, None]);
        let g = gradient(f, &x, &spec);
        let ga = x[0].exp() * x[1].sin() + 2.0 * x[0] * x[1];
        let gb = x[0].exp() * x[1].cos() + x[0] * x[0];
        assert_relative_eq!(g[0], ga, max_relative = 1e-9);
        assert_relative_eq!(g[1], gb, max_relative = 1e-9);
    }

    #[test]
    fn hessian_matches_analytic_interior() {
        let x = [0.4, 0.9];
        let spec = FdSpec::with_lower(vec![None, None]);
        let h = hessian(f, &x, &spec);
        assert_relative_eq!(h[(0, 0)], x[0].exp() * x[1].sin() + 2.0 * x[1], max_relative = 1e-6);
        assert_relative_eq!(h[(1, 1)], -x[0].exp() * x[1].sin(), max_relative = 1e-6);
        assert_relative_eq!(
            h[(0, 1)],
            x[0].exp() * x[1].cos() + 2.0 * x[0],
            max_relative = 1e-7
        );
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn boundary_coordinate_never_evaluates_below_bound() {
        // Track the minimum first coordinate ever passed to f.
        use std::cell::Cell;
        let min_seen = Cell::new(f64::INFINITY);
        let g = |x: &[f64]| {
            min_seen.set(min_seen.get().min(x[0]));
            f(x)
        };
        let x = [0.0, 0.9];
        let spec = FdSpec::with_lower(vec![Some(0.0), None]);
        let grad = gradient(g, &x, &spec);
        let hess = hessian(g, &x, &spec);
        assert!(min_seen.get() >= 0.0);
        // One-sided results still track the analytic values, just less tightly.
        assert_relative_eq!(grad[0], x[1].sin(), max_relative = 1e-6);
        assert_relative_eq!(hess[(0, 1)], x[1].cos(), max_relative = 1e-4);
    }
}

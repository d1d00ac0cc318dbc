//! Shared test fixture mirroring `tools/oracle/oracle.py`.
//!
//! The literals here must stay bit-identical to the constants at the top of
//! that script; every frozen value asserted in the unit tests was produced
//! by running it (`tools/oracle/oracle_out.txt`).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{AreaFrame, PopulationLayout, Theta};

pub(crate) const BETA0: [f64; 2] = [0.5, 0.2];

pub(crate) fn theta0() -> Theta {
    Theta::new(0.25, 0.5).unwrap()
}

/// Short literal near the ML fit of the fixture. Downstream oracle values
/// "at the fit" are all evaluated at this rounded point so that both sides
/// freeze on exactly the same parameter.
pub(crate) fn theta_lit() -> Theta {
    Theta::new(0.422649, 0.190618).unwrap()
}

pub(crate) fn beta0() -> DVector<f64> {
    DVector::from_column_slice(&BETA0)
}

/// The D = 3 fixture: n = (2, 3, 4), N = (4, 5, 7), p = 2.
pub(crate) fn layout3() -> PopulationLayout {
    let xs = [
        DMatrix::from_row_slice(2, 2, &[1.0, 0.31, 1.0, 0.74]),
        DMatrix::from_row_slice(3, 2, &[1.0, 0.12, 1.0, 0.48, 1.0, 0.85]),
        DMatrix::from_row_slice(4, 2, &[1.0, 0.22, 1.0, 0.51, 1.0, 0.66, 1.0, 0.93]),
    ];
    let xr = [
        DMatrix::from_row_slice(2, 2, &[1.0, 0.55, 1.0, 0.90]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.40, 1.0, 0.63]),
        DMatrix::from_row_slice(3, 2, &[1.0, 0.18, 1.0, 0.37, 1.0, 0.72]),
    ];
    let ys = [
        DVector::from_column_slice(&[2.02, 1.33]),
        DVector::from_column_slice(&[0.11, 0.52, -0.55]),
        DVector::from_column_slice(&[1.04, 1.35, 0.92, 1.71]),
    ];
    let areas = xs
        .into_iter()
        .zip(ys)
        .zip(xr)
        .enumerate()
        .map(|(d, ((xs, ys), xr))| AreaFrame::new(format!("a{d}"), xs, ys, xr).unwrap())
        .collect();
    PopulationLayout::new(areas).unwrap()
}

/// The same sample with area means equalized (each response shifted by the
/// grand mean minus its area mean), which pushes maximum likelihood exactly
/// onto the `sigma_u^2 = 0` face.
pub(crate) fn layout3_flat() -> PopulationLayout {
    let base = layout3();
    let grand = base
        .areas()
        .iter()
        .map(|a| a.ys().sum())
        .sum::<f64>()
        / base.n() as f64;
    let areas = base
        .areas()
        .iter()
        .map(|a| {
            let shift = grand - a.ybar();
            AreaFrame::new(
                a.id(),
                a.xs().clone(),
                a.ys().add_scalar(shift),
                a.xr().clone(),
            )
            .unwrap()
        })
        .collect();
    PopulationLayout::new(areas).unwrap()
}

/// Draws one stacked sample response at a fixed design, for the Monte Carlo
/// checks in unit tests. Not a production path; see `crate::sim` for that.
pub(crate) fn draw_ys(
    layout: &PopulationLayout,
    beta: &DVector<f64>,
    theta: &Theta,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let su = theta.sigma_u2().sqrt();
    let se = theta.sigma_e2().sqrt();
    let mut out = Vec::with_capacity(layout.n());
    for area in layout.areas() {
        let u = su * rng.sample::<f64, _>(StandardNormal);
        let fixed = area.xs() * beta;
        for i in 0..area.n() {
            out.push(fixed[i] + u + se * rng.sample::<f64, _>(StandardNormal));
        }
    }
    out
}

/// A synthetic layout with an intercept and one uniform covariate, for
/// property and Monte Carlo tests that need more areas than the frozen
/// fixture.
pub(crate) fn uniform_layout(
    d: usize,
    n_d: usize,
    r_d: usize,
    rng: &mut impl Rng,
) -> PopulationLayout {
    let design = |rows: usize, rng: &mut dyn rand::RngCore| {
        DMatrix::from_fn(rows, 2, |_, c| {
            if c == 0 {
                1.0
            } else {
                rng.gen_range(0.0..1.0)
            }
        })
    };
    let areas = (0..d)
        .map(|k| {
            let xs = design(n_d, rng);
            let xr = design(r_d, rng);
            let ys = DVector::zeros(n_d);
            AreaFrame::new(format!("a{k}"), xs, ys, xr).unwrap()
        })
        .collect();
    PopulationLayout::new(areas).unwrap()
}

/// Replaces the sampled responses of `layout` with a fresh draw.
pub(crate) fn with_ys(layout: &PopulationLayout, ys: &[f64]) -> PopulationLayout {
    layout.with_responses(ys).unwrap()
}

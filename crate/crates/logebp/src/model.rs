//! Model parameters, population layout and structured covariance algebra.
//!
//! Everything in this crate works with the nested-error covariance structure
//! `V = sigma_u^2 ZZ' + sigma_e^2 I`, which is block diagonal with area
//! blocks `V_d = sigma_u^2 11' + sigma_e^2 I` of size `n_d`. All linear
//! algebra against `V` therefore reduces to closed-form block operations:
//! each block and each product of blocks with the derivative matrices
//! `Delta_u = ZZ'` and `Delta_e = I` stays inside the two-parameter family
//! `a I + b 11'`, and sandwiches with the hat-matrix part of the residual
//! projection collapse to `p x p` cross-products. The routines here exploit
//! that so every trace and quadratic form costs `O(n p)` or `O(D p^3)`
//! instead of `O(n^3)`. The dense counterparts used to validate them are in
//! [`crate::reference`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance components `(sigma_u^2, sigma_e^2)` of the nested-error model.
///
/// The parameter space is `sigma_u^2 >= 0`, `sigma_e^2 > 0`; the boundary
/// `sigma_u^2 = 0` is a valid interior point of every formula in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    sigma_u2: f64,
    sigma_e2: f64,
}

impl Theta {
    /// Validates and constructs the pair of variance components.
    pub fn new(sigma_u2: f64, sigma_e2: f64) -> Result<Self> {
        if !sigma_u2.is_finite() || !sigma_e2.is_finite() || sigma_u2 < 0.0 || sigma_e2 <= 0.0 {
            return Err(Error::InvalidTheta { sigma_u2, sigma_e2 });
        }
        Ok(Self { sigma_u2, sigma_e2 })
    }

    /// Area-level variance `sigma_u^2`.
    pub fn sigma_u2(&self) -> f64 {
        self.sigma_u2
    }

    /// Unit-level variance `sigma_e^2`.
    pub fn sigma_e2(&self) -> f64 {
        self.sigma_e2
    }

    /// Total variance `t_d = n_d sigma_u^2 + sigma_e^2` of an area mean
    /// scaled by `n_d`, the single non-unit eigenvalue of `V_d`.
    pub fn t(&self, n_d: usize) -> f64 {
        n_d as f64 * self.sigma_u2 + self.sigma_e2
    }

    /// Components as the vector `(sigma_u^2, sigma_e^2)` in the order used
    /// by all gradients and information matrices.
    pub fn as_vec(&self) -> [f64; 2] {
        [self.sigma_u2, self.sigma_e2]
    }
}

/// Per-area shrinkage and lognormal bias correction at a given `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockGamma {
    /// Shrinkage factor `gamma_d = n_d sigma_u^2 / t_d` applied to the area
    /// residual mean.
    pub gamma: f64,
    /// Half conditional variance `alpha_d = (sigma_u^2 (1 - gamma_d) +
    /// sigma_e^2) / 2` entering the exp-scale predictor.
    pub alpha: f64,
    /// Scaled total variance `t_d = n_d sigma_u^2 + sigma_e^2`.
    pub t: f64,
}

/// Computes shrinkage `gamma_d` and correction `alpha_d` for an area with
/// `n_d` sampled units.
pub fn gamma_alpha(theta: &Theta, n_d: usize) -> Result<BlockGamma> {
    if n_d == 0 {
        return Err(Error::Layout("area with zero sampled units".into()));
    }
    let t = theta.t(n_d);
    let gamma = n_d as f64 * theta.sigma_u2 / t;
    let alpha = 0.5 * (theta.sigma_u2 * (1.0 - gamma) + theta.sigma_e2);
    Ok(BlockGamma { gamma, alpha, t })
}

/// Applies the exact block inverse `V_d^-1 v = sigma_e^-2 (v - (gamma_d /
/// n_d) 1 1' v)` to a within-area vector without forming the matrix.
pub fn block_inverse_apply(theta: &Theta, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let gamma = n as f64 * theta.sigma_u2 / theta.t(n);
    let mean = v.iter().sum::<f64>() / n as f64;
    let shift = gamma * mean;
    v.iter()
        .map(|vi| (vi - shift) / theta.sigma_e2)
        .collect()
}

/// One area of the population: sampled responses and covariates plus the
/// covariates of every out-of-sample unit.
#[derive(Debug, Clone)]
pub struct AreaFrame {
    id: String,
    xs: DMatrix<f64>,
    ys: DVector<f64>,
    xr: DMatrix<f64>,
}

impl AreaFrame {
    /// Builds an area from its sampled design `xs` (`n_d x p`), sampled
    /// responses `ys` and out-of-sample design `xr` (`(N_d - n_d) x p`,
    /// possibly zero rows when the whole area is observed).
    pub fn new(
        id: impl Into<String>,
        xs: DMatrix<f64>,
        ys: DVector<f64>,
        xr: DMatrix<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if xs.nrows() == 0 {
            return Err(Error::Layout(format!("area {id}: no sampled units")));
        }
        if ys.len() != xs.nrows() {
            return Err(Error::Dimension {
                what: "sampled responses per area",
                expected: xs.nrows(),
                got: ys.len(),
            });
        }
        if xr.nrows() > 0 && xr.ncols() != xs.ncols() {
            return Err(Error::Dimension {
                what: "out-of-sample covariate columns",
                expected: xs.ncols(),
                got: xr.ncols(),
            });
        }
        let finite = xs.iter().all(|v| v.is_finite())
            && ys.iter().all(|v| v.is_finite())
            && xr.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite { what: "area frame" });
        }
        // Normalize an empty out-of-sample block to the right column count so
        // downstream splits never see a 0 x 0 shape.
        let xr = if xr.nrows() == 0 {
            DMatrix::zeros(0, xs.ncols())
        } else {
            xr
        };
        Ok(Self { id, xs, ys, xr })
    }

    /// Area identifier as given on input.
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Sampled design matrix, `n_d x p`.
    pub fn xs(&self) -> &DMatrix<f64> {
        &self.xs
    }

    /// Sampled responses on the transformed (log) scale.
    pub fn ys(&self) -> &DVector<f64> {
        &self.ys
    }

    /// Out-of-sample design matrix, `(N_d - n_d) x p`.
    pub fn xr(&self) -> &DMatrix<f64> {
        &self.xr
    }

    /// Number of sampled units `n_d`.
    pub fn n(&self) -> usize {
        self.xs.nrows()
    }

    /// Number of out-of-sample units `N_d - n_d`.
    pub fn r(&self) -> usize {
        self.xr.nrows()
    }

    /// Population size `N_d`.
    pub fn pop_size(&self) -> usize {
        self.n() + self.r()
    }

    /// Covariate dimension `p`.
    pub fn p(&self) -> usize {
        self.xs.ncols()
    }

    /// Mean of the sampled covariate rows, `x_bar_ds`.
    pub fn xbar(&self) -> DVector<f64> {
        let n = self.n() as f64;
        DVector::from_iterator(self.p(), self.xs.column_iter().map(|c| c.sum() / n))
    }

    /// Mean of the sampled responses, `y_bar_ds`.
    pub fn ybar(&self) -> f64 {
        self.ys.mean()
    }
}

/// The full two-level population: a vector of areas sharing one covariate
/// dimension. Sampled units are stacked area by area, so a flat vector of
/// length `n = sum_d n_d` together with [`PopulationLayout::offsets`]
/// addresses every sampled unit.
#[derive(Debug, Clone)]
pub struct PopulationLayout {
    areas: Vec<AreaFrame>,
    offsets: Vec<usize>,
    p: usize,
}

impl PopulationLayout {
    /// Validates and assembles a layout. Requires at least two areas (the
    /// area-level variance is not identified from one) and a common `p`.
    pub fn new(areas: Vec<AreaFrame>) -> Result<Self> {
        if areas.len() < 2 {
            return Err(Error::Layout(format!(
                "need at least 2 areas, got {}",
                areas.len()
            )));
        }
        let p = areas[0].p();
        for a in &areas {
            if a.p() != p {
                return Err(Error::Dimension {
                    what: "covariate columns across areas",
                    expected: p,
                    got: a.p(),
                });
            }
        }
        let mut offsets = Vec::with_capacity(areas.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for a in &areas {
            acc += a.n();
            offsets.push(acc);
        }
        Ok(Self { areas, offsets, p })
    }

    /// A copy of this layout with the stacked sample responses replaced,
    /// area-major as in [`Self::flat_ys`]. Resampling schemes regenerate
    /// responses on a fixed design; this is the swap they use.
    pub fn with_responses(&self, ys: &[f64]) -> Result<Self> {
        if ys.len() != self.n() {
            return Err(Error::Dimension {
                what: "stacked responses",
                expected: self.n(),
                got: ys.len(),
            });
        }
        let mut frames = Vec::with_capacity(self.areas.len());
        for (d, area) in self.areas.iter().enumerate() {
            frames.push(AreaFrame::new(
                area.id(),
                area.xs().clone(),
                DVector::from_column_slice(self.area_slice(ys, d)),
                area.xr().clone(),
            )?);
        }
        Self::new(frames)
    }

    /// The areas, in layout order.
    pub fn areas(&self) -> &[AreaFrame] {
        &self.areas
    }

    /// Number of areas `D`.
    pub fn d(&self) -> usize {
        self.areas.len()
    }

    /// Covariate dimension `p`.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Total sample size `n = sum_d n_d`.
    pub fn n(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Total population size `N = sum_d N_d`.
    pub fn pop_size(&self) -> usize {
        self.areas.iter().map(|a| a.pop_size()).sum()
    }

    /// Start offsets of each area inside a stacked sample vector; has length
    /// `D + 1` with the total sample size last.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Slice of a stacked sample vector belonging to area `d`.
    pub fn area_slice<'v>(&self, v: &'v [f64], d: usize) -> &'v [f64] {
        &v[self.offsets[d]..self.offsets[d + 1]]
    }

    /// The stacked sampled responses owned by the areas.
    pub fn flat_ys(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n());
        for a in &self.areas {
            out.extend(a.ys().iter().copied());
        }
        out
    }
}

/// Which derivative of `V` with respect to the variance components a trace
/// or quadratic form involves: `Delta::U = ZZ'` (block `11'`) for
/// `sigma_u^2`, `Delta::E = I` for `sigma_e^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delta {
    U,
    E,
}

impl Delta {
    /// Both derivatives in the `(sigma_u^2, sigma_e^2)` component order.
    pub const ALL: [Delta; 2] = [Delta::U, Delta::E];

    /// Position in the component order.
    pub fn idx(self) -> usize {
        match self {
            Delta::U => 0,
            Delta::E => 1,
        }
    }

    fn coef(self) -> BlockCoef {
        match self {
            Delta::U => BlockCoef { a: 0.0, b: 1.0 },
            Delta::E => BlockCoef { a: 1.0, b: 0.0 },
        }
    }
}

/// Applies the block-diagonal derivative matrix `Delta_h` to a stacked
/// sample vector.
pub fn delta_apply(layout: &PopulationLayout, h: Delta, v: &[f64]) -> Vec<f64> {
    match h {
        Delta::E => v.to_vec(),
        Delta::U => {
            let mut out = vec![0.0; v.len()];
            for d in 0..layout.d() {
                let lo = layout.offsets[d];
                let hi = layout.offsets[d + 1];
                let s: f64 = v[lo..hi].iter().sum();
                out[lo..hi].fill(s);
            }
            out
        }
    }
}

/// Dot product of two stacked sample vectors.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coefficients of a within-area matrix `a I + b 11'`. The family is closed
/// under products (`J^2 = n J`), which is what keeps every covariance trace
/// in this crate linear in `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BlockCoef {
    pub a: f64,
    pub b: f64,
}

impl BlockCoef {
    pub(crate) fn mul(self, o: BlockCoef, n: usize) -> BlockCoef {
        BlockCoef {
            a: self.a * o.a,
            b: self.a * o.b + self.b * o.a + self.b * o.b * n as f64,
        }
    }

    pub(crate) fn trace(self, n: usize) -> f64 {
        n as f64 * (self.a + self.b)
    }
}

/// Per-area covariance block quantities at a fixed `theta`, plus the
/// cross-products that let hat-matrix sandwiches collapse to `p x p`.
#[derive(Debug, Clone)]
pub struct AreaCov {
    /// Sampled units `n_d`.
    pub n: usize,
    /// Shrinkage, correction and total variance for this block.
    pub bg: BlockGamma,
    /// Sample covariate mean `x_bar_ds`.
    pub xbar: DVector<f64>,
    /// Raw cross-product `X_ds' X_ds`.
    pub sxx: DMatrix<f64>,
    /// `X_ds' V_ds^-2 X_ds`.
    pub m2: DMatrix<f64>,
    /// `X_ds' V_ds^-1 1 = (n_d / t_d) x_bar_ds`.
    pub w1: DVector<f64>,
}

impl AreaCov {
    fn vinv_coef(&self, theta: &Theta) -> BlockCoef {
        BlockCoef {
            a: 1.0 / theta.sigma_e2(),
            b: -self.bg.gamma / (self.n as f64 * theta.sigma_e2()),
        }
    }

    /// Collapses the sandwich `W_d' (a I + b 11') W_d` with `W_d = V_d^-1
    /// X_ds` to a `p x p` matrix.
    fn sandwich(&self, c: BlockCoef) -> DMatrix<f64> {
        let mut m = &self.m2 * c.a;
        m.ger(c.b, &self.w1, &self.w1, 1.0);
        m
    }
}

/// Structured covariance operations for one layout at one `theta`: the WLS
/// cross-product inverse `Q_s`, applications of `V_s^-1` and of the residual
/// projection `P_s`, the log-determinant, and closed-form traces of products
/// of `V_s^-1`, `P_s` and the `Delta_h`.
#[derive(Debug, Clone)]
pub struct CovOps<'a> {
    layout: &'a PopulationLayout,
    theta: Theta,
    blocks: Vec<AreaCov>,
    xtvix: DMatrix<f64>,
    qs: DMatrix<f64>,
}

impl<'a> CovOps<'a> {
    /// Precomputes per-area block quantities and `Q_s = (X_s' V_s^-1
    /// X_s)^-1`. Fails if the weighted cross-product is not positive
    /// definite.
    pub fn new(layout: &'a PopulationLayout, theta: Theta) -> Result<Self> {
        let p = layout.p();
        let mut xtvix = DMatrix::zeros(p, p);
        let mut blocks = Vec::with_capacity(layout.d());
        for area in layout.areas() {
            let n = area.n();
            let nf = n as f64;
            let bg = gamma_alpha(&theta, n)?;
            let xbar = area.xbar();
            let sxx = area.xs().transpose() * area.xs();
            // X' V^-1 X = e^-1 (Sxx - gamma n xbar xbar')
            let mut xv1x = &sxx / theta.sigma_e2();
            xv1x.ger(-bg.gamma * nf / theta.sigma_e2(), &xbar, &xbar, 1.0);
            xtvix += &xv1x;
            // X' V^-2 X = e^-2 (Sxx - gamma (2 - gamma) n xbar xbar')
            let g2 = bg.gamma * (2.0 - bg.gamma);
            let e2 = theta.sigma_e2() * theta.sigma_e2();
            let mut m2 = &sxx / e2;
            m2.ger(-g2 * nf / e2, &xbar, &xbar, 1.0);
            let w1 = &xbar * (nf / bg.t);
            blocks.push(AreaCov {
                n,
                bg,
                xbar,
                sxx,
                m2,
                w1,
            });
        }
        // p = 0 (no covariates) degenerates the hat part to zero; the
        // projection P_s is then exactly V_s^-1.
        let qs = if p == 0 {
            DMatrix::zeros(0, 0)
        } else {
            xtvix
                .clone()
                .cholesky()
                .ok_or(Error::RankDeficient {
                    what: "X' V^-1 X is not positive definite",
                })?
                .inverse()
        };
        Ok(Self {
            layout,
            theta,
            blocks,
            xtvix,
            qs,
        })
    }

    /// The layout these operations are bound to.
    pub fn layout(&self) -> &'a PopulationLayout {
        self.layout
    }

    /// The variance components these operations are evaluated at.
    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    /// Per-area block quantities, in layout order.
    pub fn blocks(&self) -> &[AreaCov] {
        &self.blocks
    }

    /// The WLS cross-product inverse `Q_s = (X_s' V_s^-1 X_s)^-1`.
    pub fn qs(&self) -> &DMatrix<f64> {
        &self.qs
    }

    /// The weighted cross-product `X_s' V_s^-1 X_s`.
    pub fn xtvix(&self) -> &DMatrix<f64> {
        &self.xtvix
    }

    /// `log |V_s| = sum_d {(n_d - 1) log sigma_e^2 + log t_d}`.
    pub fn logdet_v(&self) -> f64 {
        let le = self.theta.sigma_e2().ln();
        self.blocks
            .iter()
            .map(|b| (b.n as f64 - 1.0) * le + b.bg.t.ln())
            .sum()
    }

    /// Applies `V_s^-1` block by block to a stacked sample vector.
    pub fn apply_vinv(&self, v: &[f64]) -> Vec<f64> {
        self.check_len(v.len());
        let mut out = vec![0.0; v.len()];
        for (d, b) in self.blocks.iter().enumerate() {
            let lo = self.layout.offsets[d];
            let hi = self.layout.offsets[d + 1];
            let mean = v[lo..hi].iter().sum::<f64>() / b.n as f64;
            let shift = b.bg.gamma * mean;
            for (o, vi) in out[lo..hi].iter_mut().zip(&v[lo..hi]) {
                *o = (vi - shift) / self.theta.sigma_e2();
            }
        }
        out
    }

    /// `X_s' v` for a stacked sample vector.
    pub fn xt(&self, v: &[f64]) -> DVector<f64> {
        self.check_len(v.len());
        let mut out = DVector::zeros(self.layout.p());
        for (d, area) in self.layout.areas().iter().enumerate() {
            let lo = self.layout.offsets[d];
            let hi = self.layout.offsets[d + 1];
            let vd = DVector::from_column_slice(&v[lo..hi]);
            out.gemv_tr(1.0, area.xs(), &vd, 1.0);
        }
        out
    }

    /// `X_s' V_s^-1 v` for a stacked sample vector.
    pub fn xt_vinv(&self, v: &[f64]) -> DVector<f64> {
        self.xt(&self.apply_vinv(v))
    }

    /// Weighted least squares coefficients `beta_tilde(theta) = Q_s X_s'
    /// V_s^-1 y_s`.
    pub fn wls_beta(&self, ys: &[f64]) -> DVector<f64> {
        &self.qs * self.xt_vinv(ys)
    }

    /// Applies the residual projection `P_s = V_s^-1 - V_s^-1 X_s Q_s X_s'
    /// V_s^-1` to a stacked sample vector.
    pub fn apply_p(&self, v: &[f64]) -> Vec<f64> {
        let vinv_v = self.apply_vinv(v);
        let q_xtv = &self.qs * self.xt(&vinv_v);
        // X q per area, then one more block inverse.
        let mut xq = vec![0.0; v.len()];
        for (d, area) in self.layout.areas().iter().enumerate() {
            let lo = self.layout.offsets[d];
            let hi = self.layout.offsets[d + 1];
            let prod = area.xs() * &q_xtv;
            xq[lo..hi].copy_from_slice(prod.as_slice());
        }
        let vinv_xq = self.apply_vinv(&xq);
        vinv_v
            .iter()
            .zip(vinv_xq.iter())
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Closed-form `tr(V_s^-1 Delta_h1 V_s^-1 Delta_h2 ...)` for up to a few
    /// factors; every block product stays inside the `a I + b 11'` family.
    pub fn tr_vinv_chain(&self, hs: &[Delta]) -> f64 {
        assert!(!hs.is_empty());
        self.blocks
            .iter()
            .map(|b| {
                let vinv = b.vinv_coef(&self.theta);
                let mut c = vinv.mul(hs[0].coef(), b.n);
                for h in &hs[1..] {
                    c = c.mul(vinv, b.n).mul(h.coef(), b.n);
                }
                c.trace(b.n)
            })
            .sum()
    }

    /// Closed-form `tr(P_s Delta_h1 P_s Delta_h2 ...)`. Expands each `P_s`
    /// into `V_s^-1 - V_s^-1 X Q X' V_s^-1` and collapses every term that
    /// touches the hat part into a cyclic product of `p x p` sandwiches.
    pub fn tr_p_chain(&self, hs: &[Delta]) -> f64 {
        let m = hs.len();
        assert!((1..=3).contains(&m), "chains of length 1 to 3 supported");
        let mut total = 0.0;
        for mask in 0u32..(1 << m) {
            if mask == 0 {
                total += self.tr_vinv_chain(hs);
                continue;
            }
            let rs: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let k = rs.len();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            // Between consecutive hat factors the block operator is
            // Delta_{h[start]} (V^-1 Delta)*, cyclically.
            let mut prod: Option<DMatrix<f64>> = None;
            for j in 0..k {
                let start = rs[j];
                let end = rs[(j + 1) % k];
                let u = self.segment_sandwich(hs, start, end);
                let qu = &self.qs * u;
                prod = Some(match prod {
                    None => qu,
                    Some(pm) => pm * qu,
                });
            }
            total += sign * prod.unwrap().trace();
        }
        total
    }

    /// Sum over areas of `W_d' B_d W_d` where `B_d` is the cyclic segment
    /// `Delta_{h[start]} V^-1 Delta ... ` running from `start` (inclusive)
    /// to `end` (exclusive) through the chain `hs`.
    fn segment_sandwich(&self, hs: &[Delta], start: usize, end: usize) -> DMatrix<f64> {
        let m = hs.len();
        let p = self.layout.p();
        let mut out = DMatrix::zeros(p, p);
        for b in &self.blocks {
            let vinv = b.vinv_coef(&self.theta);
            let mut c = hs[start].coef();
            let mut pos = (start + 1) % m;
            while pos != end {
                c = c.mul(vinv, b.n).mul(hs[pos].coef(), b.n);
                pos = (pos + 1) % m;
            }
            out += b.sandwich(c);
        }
        out
    }

    fn check_len(&self, got: usize) {
        assert_eq!(
            got,
            self.layout.n(),
            "stacked sample vector has wrong length"
        );
    }
}

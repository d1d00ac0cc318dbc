//! Monte Carlo ground truth: population generation, empirical error
//! measurement and a survey-style comparison study.
//!
//! Populations are regenerated from the model on a fixed covariate
//! skeleton; the sampled positions are always the first `n_d` units of an
//! area, so the only randomness across replicates is the model noise. The
//! empirical error of a predictor over many replicates is the reference
//! every analytical and bootstrap estimate in this crate is compared to.
//!
//! Stream discipline: covariates draw from the population stream at index
//! 0 and the study census at index 1; replicate `b` of an error study
//! draws from the simulation stream at index `b` (see [`crate::rng`]).
//! Results land in per-replicate slots reduced in index order, so every
//! report is reproducible for a fixed seed, whatever the worker count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use nalgebra::{DMatrix, DVector};

use crate::bootstrap::{bootstrap_mse, BootstrapConfig, BootstrapTarget};
use crate::error::{Error, Result};
use crate::fit::{fit_ml, FitOptions, FitResult};
use crate::model::{AreaFrame, PopulationLayout, Theta};
use crate::predict::{best_predict, eb1_predict, eb2_predict, PredictionSet};
use crate::rng::{replicate_rng, STREAM_POPULATION, STREAM_SIMULATION};

/// A fully specified generating process: covariate skeleton, true
/// parameters, replicate budget and seed.
#[derive(Debug, Clone)]
pub struct SimDesign {
    /// Covariates and the sample/out-of-sample split; responses ignored.
    pub layout: PopulationLayout,
    /// True regression coefficients.
    pub beta: DVector<f64>,
    /// True variance components.
    pub theta: Theta,
    /// Replicate count `R`.
    pub replicates: usize,
    /// Master seed for all streams derived from this design.
    pub seed: u64,
    /// Worker threads for replicate loops; `0` uses one per core.
    pub parallelism: usize,
}

impl SimDesign {
    /// Design on an explicit covariate layout.
    pub fn from_layout(
        layout: PopulationLayout,
        beta: DVector<f64>,
        theta: Theta,
        replicates: usize,
        seed: u64,
    ) -> Result<Self> {
        if beta.len() != layout.p() {
            return Err(Error::Dimension {
                what: "coefficient vector",
                expected: layout.p(),
                got: beta.len(),
            });
        }
        if replicates == 0 {
            return Err(Error::Config("replicate count must be positive".into()));
        }
        Ok(Self {
            layout,
            beta,
            theta,
            replicates,
            seed,
            parallelism: 0,
        })
    }

    /// Design with the default covariate recipe: an intercept and one
    /// uniform(0,1) column per unit, drawn once from the population stream
    /// of `seed` and then held fixed across replicates. `sizes` gives
    /// `(N_d, n_d)` per area, population rows sample-first.
    pub fn uniform_recipe(
        sizes: &[(usize, usize)],
        beta: DVector<f64>,
        theta: Theta,
        replicates: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = replicate_rng(seed, STREAM_POPULATION, 0);
        let mut frames = Vec::with_capacity(sizes.len());
        for (d, &(pop, sample)) in sizes.iter().enumerate() {
            if sample == 0 || sample > pop {
                return Err(Error::Layout(format!(
                    "area {d}: sample size {sample} outside 1..={pop}"
                )));
            }
            let column: Vec<f64> = (0..pop).map(|_| rng.gen::<f64>()).collect();
            let rows = |range: std::ops::Range<usize>| {
                DMatrix::from_fn(range.len(), 2, |r, c| {
                    if c == 0 {
                        1.0
                    } else {
                        column[range.start + r]
                    }
                })
            };
            frames.push(AreaFrame::new(
                format!("a{d}"),
                rows(0..sample),
                DVector::zeros(sample),
                rows(sample..pop),
            )?);
        }
        Self::from_layout(PopulationLayout::new(frames)?, beta, theta, replicates, seed)
    }
}

/// One generated population.
#[derive(Debug, Clone)]
pub struct PopulationDraw {
    /// Log-scale responses per area, sample rows first; length `N_d`.
    pub ys: Vec<Vec<f64>>,
    /// Exp-scale values, same shape.
    pub ws: Vec<Vec<f64>>,
    /// True area means of the exp-scale values.
    pub tau: Vec<f64>,
    /// The drawn area effects, for diagnostics.
    pub u: Vec<f64>,
}

fn draw_population(design: &SimDesign, rng: &mut ChaCha8Rng) -> PopulationDraw {
    let su = design.theta.sigma_u2().sqrt();
    let se = design.theta.sigma_e2().sqrt();
    let mut ys = Vec::with_capacity(design.layout.d());
    let mut ws = Vec::with_capacity(design.layout.d());
    let mut tau = Vec::with_capacity(design.layout.d());
    let mut us = Vec::with_capacity(design.layout.d());
    for area in design.layout.areas() {
        // The area effect first, then one error per unit, sample rows
        // before out-of-sample rows; the order is part of the seed
        // contract.
        let u = su * rng.sample::<f64, _>(StandardNormal);
        let xs_beta = area.xs() * &design.beta;
        let xr_beta = area.xr() * &design.beta;
        let mut y_area = Vec::with_capacity(area.pop_size());
        for i in 0..area.n() {
            y_area.push(xs_beta[i] + u + se * rng.sample::<f64, _>(StandardNormal));
        }
        for i in 0..area.r() {
            y_area.push(xr_beta[i] + u + se * rng.sample::<f64, _>(StandardNormal));
        }
        let w_area: Vec<f64> = y_area.iter().map(|y| y.exp()).collect();
        tau.push(w_area.iter().sum::<f64>() / area.pop_size() as f64);
        ys.push(y_area);
        ws.push(w_area);
        us.push(u);
    }
    PopulationDraw { ys, ws, tau, u: us }
}

/// Generates replicate `replicate` of the design's population.
pub fn simulate_population(design: &SimDesign, replicate: u64) -> PopulationDraw {
    let mut rng = replicate_rng(design.seed, STREAM_SIMULATION, replicate);
    draw_population(design, &mut rng)
}

/// Design-based direct estimate of one area mean from its sample.
#[derive(Debug, Clone, Copy)]
pub struct DirectEstimate {
    /// Sample mean.
    pub tau_dir: f64,
    /// Variance estimate with the finite-population correction,
    /// `(1 - n/N) S^2 / n`. NaN for a single-unit sample, whose spread is
    /// not estimable; zero for a fully observed area.
    pub var_dir: f64,
    /// Coefficient of variation in percent, `100 sqrt(var) / |tau|`.
    pub cv_pct: f64,
}

/// Computes the direct estimate from one area's sampled values.
pub fn direct_estimate(sample: &[f64], pop_size: usize) -> Result<DirectEstimate> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::Config(
            "direct estimate needs at least one sampled value".into(),
        ));
    }
    if pop_size < n {
        return Err(Error::Dimension {
            what: "population size under the sample size",
            expected: n,
            got: pop_size,
        });
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let var_dir = if n == pop_size {
        // Full enumeration: nothing left to sample.
        0.0
    } else if n == 1 {
        f64::NAN
    } else {
        let s2 = sample.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
        (1.0 - nf / pop_size as f64) * s2 / nf
    };
    Ok(DirectEstimate {
        tau_dir: mean,
        var_dir,
        cv_pct: 100.0 * var_dir.sqrt() / mean.abs(),
    })
}

/// Which predictor an error study evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    /// Area sample means; area targets only.
    Direct,
    /// Best predictor at the true parameters.
    Bp,
    /// WLS coefficients at the true variance components.
    Eb1,
    /// Full ML refit per replicate.
    Eb2,
}

/// What the empirical errors are measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// Squared error of each area mean; one value per area.
    AreaMse,
    /// Squared error of each out-of-sample unit prediction, area-major.
    UnitMse,
    /// Cross-product error of one out-of-sample pair.
    PairMcpe { area: usize, i: usize, j: usize },
}

/// Empirical error report.
#[derive(Debug, Clone)]
pub struct EmpiricalReport {
    /// Evaluated predictor.
    pub predictor: PredictorKind,
    /// Evaluated target.
    pub target: TargetKind,
    /// Empirical mean error per target element.
    pub values: Vec<f64>,
    /// Delete-one jackknife standard error of each mean; for a plain mean
    /// this reduces exactly to the replicate spread over `sqrt(R)`.
    pub mc_se: Vec<f64>,
    /// Replicates requested.
    pub replicates: usize,
    /// Replicates dropped because the predictor failed (refits).
    pub failures: usize,
    /// Set when at least 5% of the replicates were dropped.
    pub unreliable: bool,
    /// Master seed of the run.
    pub seed: u64,
}

fn prediction_errors(
    layout: &PopulationLayout,
    preds: &PredictionSet,
    pop: &PopulationDraw,
    target: TargetKind,
) -> Vec<f64> {
    match target {
        TargetKind::AreaMse => preds
            .areas
            .iter()
            .zip(pop.tau.iter())
            .map(|(a, t)| (a.tau_hat - t) * (a.tau_hat - t))
            .collect(),
        TargetKind::UnitMse => {
            let mut out = Vec::with_capacity(preds.units.len());
            let mut k = 0;
            for (d, area) in layout.areas().iter().enumerate() {
                for i in 0..area.r() {
                    let truth = pop.ws[d][area.n() + i];
                    let err = preds.units[k].w_tilde - truth;
                    out.push(err * err);
                    k += 1;
                }
            }
            out
        }
        TargetKind::PairMcpe { area, i, j } => {
            let off: usize = layout.areas()[..area].iter().map(|a| a.r()).sum();
            let n = layout.areas()[area].n();
            let ei = preds.units[off + i].w_tilde - pop.ws[area][n + i];
            let ej = preds.units[off + j].w_tilde - pop.ws[area][n + j];
            vec![ei * ej]
        }
    }
}

fn empirical_replicate(
    design: &SimDesign,
    predictor: PredictorKind,
    target: TargetKind,
    b: usize,
) -> Option<Vec<f64>> {
    let pop = simulate_population(design, b as u64);
    let layout = &design.layout;
    if predictor == PredictorKind::Direct {
        // Sample means against the regenerated truth; no model involved.
        return Some(
            layout
                .areas()
                .iter()
                .enumerate()
                .map(|(d, area)| {
                    let mean =
                        pop.ws[d][..area.n()].iter().sum::<f64>() / area.n() as f64;
                    let err = mean - pop.tau[d];
                    err * err
                })
                .collect(),
        );
    }

    let ys_sample: Vec<f64> = layout
        .areas()
        .iter()
        .enumerate()
        .flat_map(|(d, area)| pop.ys[d][..area.n()].iter().copied().collect::<Vec<_>>())
        .collect();
    let w_sample: Vec<f64> = ys_sample.iter().map(|y| y.exp()).collect();
    let trial = layout.with_responses(&ys_sample).ok()?;
    let preds = match predictor {
        PredictorKind::Direct => unreachable!("handled above"),
        PredictorKind::Bp => best_predict(&trial, &design.beta, &design.theta, &w_sample).ok()?,
        PredictorKind::Eb1 => eb1_predict(&trial, &design.theta, &w_sample).ok()?,
        PredictorKind::Eb2 => {
            let fit = fit_ml(&trial, &FitOptions::default()).ok()?;
            eb2_predict(&trial, &fit, &w_sample).ok()?
        }
    };
    Some(prediction_errors(layout, &preds, &pop, target))
}

/// Empirical MSE (or MCPE) of a predictor over the design's replicates,
/// with a Monte Carlo standard error per value.
pub fn empirical_mse(
    design: &SimDesign,
    predictor: PredictorKind,
    target: TargetKind,
) -> Result<EmpiricalReport> {
    if design.replicates < 100 {
        return Err(Error::Config(format!(
            "empirical error studies need at least 100 replicates, got {}",
            design.replicates
        )));
    }
    let layout = &design.layout;
    let width = match target {
        TargetKind::AreaMse => layout.d(),
        TargetKind::UnitMse => layout.areas().iter().map(|a| a.r()).sum(),
        TargetKind::PairMcpe { area, i, j } => {
            let frame = layout.areas().get(area).ok_or(Error::Index { what: "area" })?;
            if i >= frame.r() || j >= frame.r() {
                return Err(Error::Index {
                    what: "out-of-sample unit",
                });
            }
            1
        }
    };
    if predictor == PredictorKind::Direct && !matches!(target, TargetKind::AreaMse) {
        return Err(Error::Config(
            "the direct estimator only targets area means".into(),
        ));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(design.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let slots: Vec<Option<Vec<f64>>> = pool.install(|| {
        (0..design.replicates)
            .into_par_iter()
            .map(|b| empirical_replicate(design, predictor, target, b))
            .collect()
    });

    let mut acc = vec![0.0; width];
    let mut acc2 = vec![0.0; width];
    let mut kept = 0usize;
    for slot in slots.iter().flatten() {
        kept += 1;
        for (k, v) in slot.iter().enumerate() {
            acc[k] += v;
            acc2[k] += v * v;
        }
    }
    let failures = design.replicates - kept;
    if kept == 0 {
        return Err(Error::AllReplicatesFailed {
            attempted: design.replicates,
        });
    }
    let kf = kept as f64;
    let values: Vec<f64> = acc.iter().map(|a| a / kf).collect();
    let mc_se: Vec<f64> = values
        .iter()
        .zip(acc2.iter())
        .map(|(m, s2)| {
            if kept > 1 {
                ((s2 - kf * m * m) / (kf - 1.0) / kf).max(0.0).sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(EmpiricalReport {
        predictor,
        target,
        values,
        mc_se,
        replicates: design.replicates,
        failures,
        unreliable: failures * 20 >= design.replicates,
        seed: design.seed,
    })
}

/// One area row of the survey-style comparison.
#[derive(Debug, Clone)]
pub struct StudyRow {
    /// Area identifier.
    pub area_id: String,
    /// Population size `N_d`.
    pub pop_size: usize,
    /// Sample size after the one-tenth rounding.
    pub sample_size: usize,
    /// Census mean of the reported variable.
    pub tau_true: f64,
    /// Direct estimate of that mean.
    pub direct: DirectEstimate,
    /// Relative error of the direct estimate.
    pub direct_rel_err: f64,
    /// Final-predictor estimate of that mean.
    pub eb2: f64,
    /// Bootstrap coefficient of variation of the final predictor, percent.
    pub eb2_cv_pct: f64,
    /// Relative error of the final predictor.
    pub eb2_rel_err: f64,
}

/// The survey-style comparison: census truth, direct and final estimates,
/// CVs and relative errors per area.
#[derive(Debug, Clone)]
pub struct StudyReport {
    /// One row per area.
    pub rows: Vec<StudyRow>,
    /// The model fit on the study sample.
    pub fit: FitResult,
    /// Shift constant applied before taking logarithms.
    pub shift: f64,
    /// Bootstrap refits that failed.
    pub bootstrap_failures: usize,
    /// Set when the bootstrap flagged itself unreliable.
    pub bootstrap_unreliable: bool,
    /// Master seed of the study.
    pub seed: u64,
}

/// Synthetic census study in the style of a small-area income survey.
///
/// Draws one census from the design, defines the reported variable as
/// `exp(y) - k_shift` (so the shifted-log workflow `y = log(value + k)`
/// reproduces the generating model exactly, and negative values are
/// possible like real incomes), samples one tenth of each area (rounded
/// to the closest integer, floored at one unit), fits the model on the
/// sample, and compares direct and final estimates per area. The final
/// predictor's CV comes from the parametric bootstrap on the study fit.
pub fn silc_style_study(
    design: &SimDesign,
    k_shift: f64,
    bootstrap: &BootstrapConfig,
) -> Result<StudyReport> {
    let mut rng = replicate_rng(design.seed, STREAM_POPULATION, 1);
    let census = draw_population(design, &mut rng);

    // Re-split every area at one tenth of its population, sample-first in
    // the stacked covariate order of the design layout.
    let mut frames = Vec::with_capacity(design.layout.d());
    let mut samples_m: Vec<Vec<f64>> = Vec::with_capacity(design.layout.d());
    for (d, area) in design.layout.areas().iter().enumerate() {
        let pop = area.pop_size();
        let take = ((pop as f64 / 10.0).round() as usize).clamp(1, pop);
        let stacked = DMatrix::from_fn(pop, area.p(), |r, c| {
            if r < area.n() {
                area.xs()[(r, c)]
            } else {
                area.xr()[(r - area.n(), c)]
            }
        });
        let ys_take = DVector::from_fn(take, |r, _| census.ys[d][r]);
        frames.push(AreaFrame::new(
            area.id(),
            stacked.rows(0, take).into_owned(),
            ys_take,
            stacked.rows(take, pop - take).into_owned(),
        )?);
        samples_m.push(
            census.ws[d][..take]
                .iter()
                .map(|w| w - k_shift)
                .collect(),
        );
    }
    let study = PopulationLayout::new(frames)?;

    let fit = fit_ml(&study, &FitOptions::default())?;
    let w_sample: Vec<f64> = study.flat_ys().iter().map(|y| y.exp()).collect();
    let preds = eb2_predict(&study, &fit, &w_sample)?;

    let mut boot_cfg = bootstrap.clone();
    boot_cfg.target = BootstrapTarget::AreaMse;
    let boot = bootstrap_mse(&study, &fit, &boot_cfg)?;

    let mut rows = Vec::with_capacity(study.d());
    for (d, area) in study.areas().iter().enumerate() {
        let tau_true = census.tau[d] - k_shift;
        let direct = direct_estimate(&samples_m[d], area.pop_size())?;
        let eb2 = preds.areas[d].tau_hat - k_shift;
        rows.push(StudyRow {
            area_id: area.id().to_string(),
            pop_size: area.pop_size(),
            sample_size: area.n(),
            tau_true,
            direct,
            direct_rel_err: (direct.tau_dir - tau_true) / tau_true,
            eb2,
            eb2_cv_pct: 100.0 * boot.estimates[d].sqrt() / eb2.abs(),
            eb2_rel_err: (eb2 - tau_true) / tau_true,
        });
    }
    Ok(StudyReport {
        rows,
        fit,
        shift: k_shift,
        bootstrap_failures: boot.failures,
        bootstrap_unreliable: boot.unreliable,
        seed: design.seed,
    })
}

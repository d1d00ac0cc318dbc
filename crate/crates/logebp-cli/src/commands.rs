//! The five workflows behind the subcommands. Each one writes its report
//! files plus `provenance.json` into the configured output directory and
//! prints the paths it wrote.

use std::path::{Path, PathBuf};

use nalgebra::DVector;

use logebp::bootstrap::bootstrap_mse;
use logebp::fit::fit_ml;
use logebp::mse_estimation::MseEstimator;
use logebp::predict::eb2_predict;
use logebp::sim::{empirical_mse, silc_style_study, PredictorKind, SimDesign, TargetKind};
use logebp::Theta;

use crate::config::RunConfig;
use crate::ingest::{ingest, Ingested};
use crate::report;
use crate::CliError;

fn announce(paths: &[&PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn sample_path(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.sample
        .as_deref()
        .ok_or_else(|| CliError::User("no sample file: pass --sample or set it in the config".into()))
}

fn load(cfg: &RunConfig) -> Result<(Ingested, Vec<PathBuf>), CliError> {
    let sample = sample_path(cfg)?;
    let ingested = ingest(sample, cfg.oos.as_deref(), cfg.shift, cfg.intercept)?;
    let mut inputs = vec![sample.to_path_buf()];
    if let Some(oos) = &cfg.oos {
        inputs.push(oos.clone());
    }
    Ok((ingested, inputs))
}

fn provenance(cfg: &RunConfig, command: &str, inputs: &[PathBuf]) -> Result<PathBuf, CliError> {
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    report::write_provenance(&cfg.out_dir, command, cfg, &refs)
}

pub fn run_fit(cfg: &RunConfig) -> Result<(), CliError> {
    let (ing, inputs) = load(cfg)?;
    let fit = fit_ml(&ing.layout, &cfg.ml.to_options())?;
    let f = report::write_fit(&cfg.out_dir, &fit, &ing.covariates, cfg.shift)?;
    let p = provenance(cfg, "fit", &inputs)?;
    announce(&[&f, &p]);
    Ok(())
}

pub fn run_predict(cfg: &RunConfig) -> Result<(), CliError> {
    let (ing, inputs) = load(cfg)?;
    let fit = fit_ml(&ing.layout, &cfg.ml.to_options())?;
    let preds = eb2_predict(&ing.layout, &fit, &ing.w_shifted)?;
    let f = report::write_fit(&cfg.out_dir, &fit, &ing.covariates, cfg.shift)?;
    let pr = report::write_predictions(&cfg.out_dir, &preds, cfg.shift)?;
    let p = provenance(cfg, "predict", &inputs)?;
    announce(&[&f, &pr, &p]);
    Ok(())
}

/// Which MSE estimates `mse` computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MseMethod {
    /// Second-order corrected analytical estimator.
    Analytic,
    /// Parametric bootstrap.
    Bootstrap,
    /// Both, side by side.
    Both,
}

pub fn run_mse(cfg: &RunConfig, method: MseMethod) -> Result<(), CliError> {
    let (ing, inputs) = load(cfg)?;
    let fit = fit_ml(&ing.layout, &cfg.ml.to_options())?;
    let preds = eb2_predict(&ing.layout, &fit, &ing.w_shifted)?;

    let analytic = if method != MseMethod::Bootstrap {
        let est = MseEstimator::from_fit(&ing.layout, &fit)?;
        let mut values = Vec::with_capacity(ing.layout.d());
        for d in 0..ing.layout.d() {
            values.push(est.mse_estimate_eb2_area(d)?);
        }
        Some(values)
    } else {
        None
    };
    let boot = if method != MseMethod::Analytic {
        Some(bootstrap_mse(&ing.layout, &fit, &cfg.bootstrap_config())?)
    } else {
        None
    };

    let rows: Vec<report::MseRow> = ing
        .layout
        .areas()
        .iter()
        .enumerate()
        .map(|(d, area)| report::MseRow {
            area_id: area.id().to_string(),
            sample_size: area.n(),
            pop_size: area.pop_size(),
            prediction: preds.areas[d].tau_hat - cfg.shift,
            analytic_raw: analytic.as_ref().map(|v| v[d]),
            bootstrap: boot.as_ref().map(|b| b.estimates[d]),
            bootstrap_se: boot.as_ref().map(|b| b.standard_errors[d]),
        })
        .collect();

    let f = report::write_fit(&cfg.out_dir, &fit, &ing.covariates, cfg.shift)?;
    let m = report::write_mse(&cfg.out_dir, &rows)?;
    let p = provenance(cfg, "mse", &inputs)?;
    announce(&[&f, &m, &p]);
    if let Some(b) = &boot {
        if b.unreliable {
            eprintln!(
                "warning: {} of {} bootstrap replicates failed; bootstrap column unreliable",
                b.failures, b.replicates
            );
        }
    }
    Ok(())
}

/// What `simulate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum SimMode {
    /// One synthetic census, direct vs model estimates with CVs.
    #[default]
    Study,
    /// Empirical error of a predictor over many replicates.
    Empirical,
}

/// Predictor choice for empirical runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum PredictorArg {
    Direct,
    Bp,
    Eb1,
    #[default]
    Eb2,
}

/// Target choice for empirical runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum TargetArg {
    #[default]
    Area,
    Unit,
}

fn sim_design(cfg: &RunConfig) -> Result<SimDesign, CliError> {
    let theta = Theta::new(cfg.sim.sigma_u2, cfg.sim.sigma_e2)?;
    let mut design = SimDesign::uniform_recipe(
        &cfg.sim.sizes(),
        DVector::from_vec(cfg.sim.beta.clone()),
        theta,
        cfg.sim.replicates,
        cfg.sim_seed(),
    )?;
    design.parallelism = cfg.workers;
    Ok(design)
}

pub fn run_simulate(
    cfg: &RunConfig,
    mode: SimMode,
    predictor: PredictorArg,
    target: TargetArg,
) -> Result<(), CliError> {
    let design = sim_design(cfg)?;
    match mode {
        SimMode::Study => {
            let study = silc_style_study(&design, cfg.shift, &cfg.bootstrap_config())?;
            let s = report::write_study(&cfg.out_dir, &study)?;
            let sum = report::write_study_summary(&cfg.out_dir, &study)?;
            let p = provenance(cfg, "simulate", &[])?;
            announce(&[&s, &sum, &p]);
        }
        SimMode::Empirical => {
            let kind = match predictor {
                PredictorArg::Direct => PredictorKind::Direct,
                PredictorArg::Bp => PredictorKind::Bp,
                PredictorArg::Eb1 => PredictorKind::Eb1,
                PredictorArg::Eb2 => PredictorKind::Eb2,
            };
            let target = match target {
                TargetArg::Area => TargetKind::AreaMse,
                TargetArg::Unit => TargetKind::UnitMse,
            };
            let rep = empirical_mse(&design, kind, target)?;
            let mut rows = Vec::with_capacity(rep.values.len());
            let mut element = 0usize;
            match target {
                TargetKind::AreaMse => {
                    for (d, area) in design.layout.areas().iter().enumerate() {
                        rows.push(report::EmpiricalRow {
                            element: d,
                            area_id: area.id().to_string(),
                            unit_index: None,
                            value: rep.values[d],
                            mc_se: rep.mc_se[d],
                        });
                    }
                }
                TargetKind::UnitMse => {
                    for area in design.layout.areas() {
                        for i in 0..area.r() {
                            rows.push(report::EmpiricalRow {
                                element,
                                area_id: area.id().to_string(),
                                unit_index: Some(i),
                                value: rep.values[element],
                                mc_se: rep.mc_se[element],
                            });
                            element += 1;
                        }
                    }
                }
                TargetKind::PairMcpe { .. } => unreachable!("not reachable from the CLI"),
            }
            let e = report::write_empirical(&cfg.out_dir, &rows)?;
            let p = provenance(cfg, "simulate", &[])?;
            announce(&[&e, &p]);
            if rep.unreliable {
                eprintln!(
                    "warning: {} of {} replicates failed; estimates unreliable",
                    rep.failures, rep.replicates
                );
            }
        }
    }
    Ok(())
}

/// Plain moment coefficient of skewness, `m3 / m2^(3/2)`.
fn skewness(values: &[f64]) -> Option<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    (m2 > 0.0).then(|| m3 / m2.powf(1.5))
}

pub fn run_suggest_shift(cfg: &RunConfig, grid: &[f64]) -> Result<(), CliError> {
    let sample = sample_path(cfg)?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(sample)
        .map_err(|e| CliError::User(format!("cannot open {}: {e}", sample.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::User(format!("{}: {e}", sample.display())))?;
    if headers.len() < 2 || &headers[1] != "w" {
        return Err(CliError::User(format!(
            "{}: expected header area_id, w, <covariates...>",
            sample.display()
        )));
    }
    let mut ws = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::User(format!("{}: {e}", sample.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(k as u64 + 2);
        let w: f64 = record[1].trim().parse().map_err(|_| {
            CliError::User(format!(
                "{} line {line}: column w is not a number: {:?}",
                sample.display(),
                &record[1]
            ))
        })?;
        ws.push(w);
    }
    if ws.len() < 3 {
        return Err(CliError::User(
            "shift scan needs at least three observations".into(),
        ));
    }

    let grid: Vec<f64> = if grid.is_empty() {
        vec![0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0]
    } else {
        grid.to_vec()
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &k in &grid {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(CliError::User(format!(
                "shift candidates must be finite and nonnegative, got {k}"
            )));
        }
        let feasible = ws.iter().all(|w| w + k > 0.0);
        let skew = feasible
            .then(|| {
                let ys: Vec<f64> = ws.iter().map(|w| (w + k).ln()).collect();
                skewness(&ys)
            })
            .flatten();
        rows.push((k, skew));
    }
    let s = report::write_shift_scan(&cfg.out_dir, &rows)?;
    let p = provenance(cfg, "suggest-shift", &[sample.to_path_buf()])?;
    announce(&[&s, &p]);
    Ok(())
}

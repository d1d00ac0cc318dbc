//! Report emission: JSON and CSV artifacts with stable columns.
//!
//! Every floating point value is written with 17 significant digits
//! (`{:.16e}`), enough for an exact `f64` round trip, so reports diff
//! cleanly across runs and machines. Each run also writes a
//! `provenance.json` holding the command, the effective configuration
//! serialized verbatim, and a fingerprint of every input file; a report
//! directory is therefore self-describing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use logebp::fit::FitResult;
use logebp::predict::PredictionSet;
use logebp::sim::StudyReport;

use crate::config::RunConfig;
use crate::CliError;

/// 17-significant-digit rendering; round-trips `f64` exactly.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// FNV-1a 64-bit fingerprint of a byte stream. A content fingerprint for
/// provenance records, not a cryptographic hash.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn write_out(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::User(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, text)
        .map_err(|e| CliError::User(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Writes `provenance.json` for this run.
pub fn write_provenance(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    inputs: &[&Path],
) -> Result<PathBuf, CliError> {
    let mut entries = String::new();
    for (k, path) in inputs.iter().enumerate() {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::User(format!("cannot read {}: {e}", path.display())))?;
        if k > 0 {
            entries.push(',');
        }
        let _ = write!(
            entries,
            "\n    {}: \"fnv64:{:016x}\"",
            serde_json::to_string(&path.display().to_string()).unwrap(),
            fnv64(&bytes)
        );
    }
    let text = format!(
        "{{\n  \"version\": \"{}\",\n  \"command\": {},\n  \"inputs\": {{{}\n  }},\n  \"config_toml\": {}\n}}\n",
        env!("CARGO_PKG_VERSION"),
        serde_json::to_string(command).unwrap(),
        entries,
        serde_json::to_string(&config.to_toml()).unwrap(),
    );
    write_out(dir, "provenance.json", &text)
}

/// Writes `fit.json`.
pub fn write_fit(
    dir: &Path,
    fit: &FitResult,
    covariates: &[String],
    shift: f64,
) -> Result<PathBuf, CliError> {
    let beta: Vec<String> = fit.beta_hat.iter().map(|b| fmt17(*b)).collect();
    let names: Vec<String> = covariates
        .iter()
        .map(|c| serde_json::to_string(c).unwrap())
        .collect();
    let f = &fit.fisher_at_hat;
    let text = format!(
        concat!(
            "{{\n",
            "  \"covariates\": [{}],\n",
            "  \"beta_hat\": [{}],\n",
            "  \"theta_hat\": {{ \"sigma_u2\": {}, \"sigma_e2\": {} }},\n",
            "  \"fisher\": [[{}, {}], [{}, {}]],\n",
            "  \"loglik\": {},\n",
            "  \"iterations\": {},\n",
            "  \"converged\": {},\n",
            "  \"boundary_hit\": {},\n",
            "  \"shift\": {}\n",
            "}}\n"
        ),
        names.join(", "),
        beta.join(", "),
        fmt17(fit.theta_hat.sigma_u2()),
        fmt17(fit.theta_hat.sigma_e2()),
        fmt17(f[(0, 0)]),
        fmt17(f[(0, 1)]),
        fmt17(f[(1, 0)]),
        fmt17(f[(1, 1)]),
        fmt17(fit.loglik),
        fit.iterations,
        fit.converged,
        fit.boundary_hit,
        fmt17(shift),
    );
    write_out(dir, "fit.json", &text)
}

/// Writes `predictions.csv`: unit rows carry the shifted-log-scale
/// prediction and the back-shifted original-scale prediction; area rows
/// carry the back-shifted area mean.
pub fn write_predictions(
    dir: &Path,
    preds: &PredictionSet,
    shift: f64,
) -> Result<PathBuf, CliError> {
    let mut text = String::from("level,area_id,unit_index,log_prediction,prediction\n");
    for u in &preds.units {
        let _ = writeln!(
            text,
            "unit,{},{},{},{}",
            u.area_id,
            u.unit_index,
            fmt17(u.y_tilde),
            fmt17(u.w_tilde - shift)
        );
    }
    for a in &preds.areas {
        let _ = writeln!(text, "area,{},,,{}", a.area_id, fmt17(a.tau_hat - shift));
    }
    write_out(dir, "predictions.csv", &text)
}

/// One area row of `mse.csv`; estimates for methods that did not run stay
/// `None` and serialize as empty cells.
pub struct MseRow {
    pub area_id: String,
    pub sample_size: usize,
    pub pop_size: usize,
    /// Back-shifted area mean prediction.
    pub prediction: f64,
    pub analytic_raw: Option<f64>,
    pub bootstrap: Option<f64>,
    pub bootstrap_se: Option<f64>,
}

/// Writes `mse.csv`. The analytic estimator is second-order corrected and
/// can be negative in unlucky samples; the raw value is preserved, the
/// `analytic` column clamps at zero, and `negative_correction` flags the
/// rows where clamping acted. CVs use the clamped values against the
/// back-shifted prediction.
pub fn write_mse(dir: &Path, rows: &[MseRow]) -> Result<PathBuf, CliError> {
    let mut text = String::from(
        "area_id,sample_size,pop_size,prediction,analytic_raw,analytic,\
         negative_correction,bootstrap,bootstrap_se,cv_analytic_pct,cv_bootstrap_pct\n",
    );
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for row in rows {
        let clamped = row.analytic_raw.map(|v| v.max(0.0));
        let cv = |mse: Option<f64>| {
            opt(mse.map(|m| 100.0 * m.max(0.0).sqrt() / row.prediction.abs()))
        };
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.area_id,
            row.sample_size,
            row.pop_size,
            fmt17(row.prediction),
            opt(row.analytic_raw),
            opt(clamped),
            row.analytic_raw
                .map(|v| (v < 0.0).to_string())
                .unwrap_or_default(),
            opt(row.bootstrap),
            opt(row.bootstrap_se),
            cv(row.analytic_raw),
            cv(row.bootstrap),
        );
    }
    write_out(dir, "mse.csv", &text)
}

/// Writes `study.csv` from a survey-style comparison.
pub fn write_study(dir: &Path, study: &StudyReport) -> Result<PathBuf, CliError> {
    let mut text = String::from(
        "area_id,pop_size,sample_size,true_mean,direct,direct_cv_pct,\
         direct_rel_err,model,model_cv_pct,model_rel_err\n",
    );
    for r in &study.rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{}",
            r.area_id,
            r.pop_size,
            r.sample_size,
            fmt17(r.tau_true),
            fmt17(r.direct.tau_dir),
            fmt17(r.direct.cv_pct),
            fmt17(r.direct_rel_err),
            fmt17(r.eb2),
            fmt17(r.eb2_cv_pct),
            fmt17(r.eb2_rel_err),
        );
    }
    write_out(dir, "study.csv", &text)
}

/// Writes `study_summary.json` next to `study.csv`.
pub fn write_study_summary(dir: &Path, study: &StudyReport) -> Result<PathBuf, CliError> {
    let text = format!(
        concat!(
            "{{\n",
            "  \"areas\": {},\n",
            "  \"shift\": {},\n",
            "  \"seed\": {},\n",
            "  \"theta_hat\": {{ \"sigma_u2\": {}, \"sigma_e2\": {} }},\n",
            "  \"bootstrap_failures\": {},\n",
            "  \"bootstrap_unreliable\": {}\n",
            "}}\n"
        ),
        study.rows.len(),
        fmt17(study.shift),
        study.seed,
        fmt17(study.fit.theta_hat.sigma_u2()),
        fmt17(study.fit.theta_hat.sigma_e2()),
        study.bootstrap_failures,
        study.bootstrap_unreliable,
    );
    write_out(dir, "study_summary.json", &text)
}

/// One row of `empirical.csv`.
pub struct EmpiricalRow {
    pub element: usize,
    pub area_id: String,
    /// Out-of-sample unit index within the area; `None` for area rows.
    pub unit_index: Option<usize>,
    pub value: f64,
    pub mc_se: f64,
}

/// Writes `empirical.csv` from an empirical error run.
pub fn write_empirical(dir: &Path, rows: &[EmpiricalRow]) -> Result<PathBuf, CliError> {
    let mut text = String::from("element,area_id,unit_index,value,mc_se\n");
    for r in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            r.element,
            r.area_id,
            r.unit_index.map(|i| i.to_string()).unwrap_or_default(),
            fmt17(r.value),
            fmt17(r.mc_se),
        );
    }
    write_out(dir, "empirical.csv", &text)
}

/// Writes `shift_scan.csv`: log-scale sample skewness per candidate shift.
/// Candidates that leave some `w + k` nonpositive are marked infeasible
/// with an empty skewness cell. The scan reports; it never chooses.
pub fn write_shift_scan(dir: &Path, rows: &[(f64, Option<f64>)]) -> Result<PathBuf, CliError> {
    let mut text = String::from("k,feasible,skewness\n");
    for (k, skew) in rows {
        let _ = writeln!(
            text,
            "{},{},{}",
            fmt17(*k),
            skew.is_some(),
            skew.map(fmt17).unwrap_or_default(),
        );
    }
    write_out(dir, "shift_scan.csv", &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [
            0.1,
            -3.0,
            2.0f64.sqrt(),
            1.0 / 3.0,
            6.02e23,
            5.391e-44,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt17(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn fingerprint_is_stable() {
        // Fixed reference values for the FNV-1a 64 vector set.
        assert_eq!(fnv64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn mse_rows_clamp_and_flag() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            MseRow {
                area_id: "a".into(),
                sample_size: 3,
                pop_size: 10,
                prediction: 2.0,
                analytic_raw: Some(-0.5),
                bootstrap: None,
                bootstrap_se: None,
            },
            MseRow {
                area_id: "b".into(),
                sample_size: 3,
                pop_size: 10,
                prediction: 2.0,
                analytic_raw: Some(0.25),
                bootstrap: Some(0.3),
                bootstrap_se: Some(0.01),
            },
        ];
        let path = write_mse(dir.path(), &rows).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let a: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(a[5], fmt17(0.0));
        assert_eq!(a[6], "true");
        assert_eq!(a[7], "");
        assert_eq!(a[9], fmt17(0.0));
        let b: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(b[6], "false");
        // CV of 0.25 against a prediction of 2: 25 percent.
        assert_eq!(b[9], fmt17(25.0));
    }
}

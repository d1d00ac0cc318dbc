//! CSV ingestion: sampled data and out-of-sample covariates into a
//! population layout on the shifted log scale.
//!
//! The sampled file has columns `area_id, w, <covariates...>`; the
//! out-of-sample file has `area_id, <covariates...>` with the same
//! covariate names. Responses are `y = log(w + k)`. Areas appear in file
//! order, units in row order, and the population size of an area is its
//! sampled rows plus its out-of-sample rows; predicting a whole area mean
//! therefore requires one out-of-sample row per unsampled unit, since
//! every prediction needs that unit's covariates.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use logebp::PopulationLayout;

use crate::CliError;

/// Ingested data: the layout on the shifted log scale plus the exp-scale
/// sampled values (`w + k`) in stacked layout order.
#[derive(Debug)]
pub struct Ingested {
    pub layout: PopulationLayout,
    /// `exp(y) = w + k` per sampled unit, areas in layout order.
    pub w_shifted: Vec<f64>,
    /// Covariate column names, intercept first when one was added.
    pub covariates: Vec<String>,
}

struct AreaRows {
    id: String,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    ws: Vec<f64>,
    xr: Vec<Vec<f64>>,
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::User(format!("cannot open {}: {e}", path.display())))
}

fn parse_cell(path: &Path, line: u64, name: &str, raw: &str) -> Result<f64, CliError> {
    let v: f64 = raw.trim().parse().map_err(|_| {
        CliError::User(format!(
            "{} line {line}: column {name} is not a number: {raw:?}",
            path.display()
        ))
    })?;
    if !v.is_finite() {
        return Err(CliError::User(format!(
            "{} line {line}: column {name} is not finite",
            path.display()
        )));
    }
    Ok(v)
}

fn line_of(record: &csv::StringRecord, fallback: u64) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(fallback)
}

/// Reads the data files into a layout, applying the shift and the
/// optional intercept column.
pub fn ingest(
    sample_path: &Path,
    oos_path: Option<&Path>,
    shift: f64,
    intercept: bool,
) -> Result<Ingested, CliError> {
    let mut reader = open(sample_path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::User(format!("{}: {e}", sample_path.display())))?
        .clone();
    if headers.len() < 3 || &headers[0] != "area_id" || &headers[1] != "w" {
        return Err(CliError::User(format!(
            "{}: expected header area_id, w, <covariates...>, got {:?}",
            sample_path.display(),
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let file_covs: Vec<String> = headers.iter().skip(2).map(|s| s.to_string()).collect();

    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut areas: Vec<AreaRows> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::User(format!("{}: {e}", sample_path.display())))?;
        let line = line_of(&record, k as u64 + 2);
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(CliError::User(format!(
                "{} line {line}: empty area_id",
                sample_path.display()
            )));
        }
        let w = parse_cell(sample_path, line, "w", &record[1])?;
        if w + shift <= 0.0 {
            return Err(CliError::User(format!(
                "{} line {line}: w + shift = {} is not positive; \
                 the log transform needs a larger shift constant",
                sample_path.display(),
                w + shift
            )));
        }
        let mut row = Vec::with_capacity(file_covs.len() + usize::from(intercept));
        if intercept {
            row.push(1.0);
        }
        for (c, name) in file_covs.iter().enumerate() {
            row.push(parse_cell(sample_path, line, name, &record[c + 2])?);
        }
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            areas.push(AreaRows {
                id,
                xs: Vec::new(),
                ys: Vec::new(),
                ws: Vec::new(),
                xr: Vec::new(),
            });
            areas.len() - 1
        });
        areas[slot].xs.push(row);
        areas[slot].ys.push((w + shift).ln());
        areas[slot].ws.push(w + shift);
    }
    if areas.is_empty() {
        return Err(CliError::User(format!(
            "{}: no data rows",
            sample_path.display()
        )));
    }

    if let Some(oos_path) = oos_path {
        let mut reader = open(oos_path)?;
        let headers = reader
            .headers()
            .map_err(|e| CliError::User(format!("{}: {e}", oos_path.display())))?
            .clone();
        let oos_covs: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
        if headers.is_empty() || &headers[0] != "area_id" || oos_covs != file_covs {
            return Err(CliError::User(format!(
                "{}: header must be area_id followed by the sampled file's \
                 covariate columns {:?}",
                oos_path.display(),
                file_covs
            )));
        }
        for (k, record) in reader.records().enumerate() {
            let record =
                record.map_err(|e| CliError::User(format!("{}: {e}", oos_path.display())))?;
            let line = line_of(&record, k as u64 + 2);
            let id = record[0].trim();
            let slot = *index.get(id).ok_or_else(|| {
                CliError::User(format!(
                    "{} line {line}: area {id:?} has no sampled rows",
                    oos_path.display()
                ))
            })?;
            let mut row = Vec::with_capacity(file_covs.len() + usize::from(intercept));
            if intercept {
                row.push(1.0);
            }
            for (c, name) in file_covs.iter().enumerate() {
                row.push(parse_cell(oos_path, line, name, &record[c + 1])?);
            }
            areas[slot].xr.push(row);
        }
    }

    let p = file_covs.len() + usize::from(intercept);
    // The parsed values themselves, not exp(log(w + k)): the sample sums
    // downstream should see the data exactly as written.
    let w_shifted = areas.iter().flat_map(|a| a.ws.iter().copied()).collect();
    let frames = areas
        .into_iter()
        .map(|a| {
            let xs = DMatrix::from_fn(a.xs.len(), p, |r, c| a.xs[r][c]);
            let xr = DMatrix::from_fn(a.xr.len(), p, |r, c| a.xr[r][c]);
            logebp::AreaFrame::new(a.id, xs, DVector::from_vec(a.ys), xr)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let layout = PopulationLayout::new(frames)?;

    let mut covariates = Vec::with_capacity(p);
    if intercept {
        covariates.push("intercept".to_string());
    }
    covariates.extend(file_covs);

    Ok(Ingested {
        layout,
        w_shifted,
        covariates,
    })
}

//! CSV and JSON formats for paths, fits, forecasts and tables.
//!
//! Numbers are written with 17 significant digits. Lines starting with `#`
//! carry a JSON object describing the run and are skipped by readers, apart
//! from the grid keys `coarse_ratio` / `coarse_idx` on path files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::benchmark::StudyTable;
use crate::error::{GrouError, Result};
use crate::estimate::{Diagnostics, DriftStructure, EstimationResult};
use crate::forecast::RollingForecast;
use crate::model::{CompanionSystem, GrouParams, ModelShape};
use crate::mrc::RollingMrc;
use crate::noise::{matrix_from_rows, matrix_to_rows, LevySpec};
use crate::pipeline::ForecastRow;
use crate::simulate::{JumpEvent, PathTruth, SampledPath, TwoScaleGrid};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| GrouError::io(path, e))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| GrouError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| GrouError::Format(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| GrouError::Format(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| GrouError::io(path, e))
}

fn wio(e: std::io::Error) -> GrouError {
    GrouError::io("<output>", e)
}

pub fn write_header<W: Write>(w: &mut W, header: &Value) -> Result<()> {
    if !header.is_null() {
        writeln!(
            w,
            "# {}",
            serde_json::to_string(header).map_err(|e| GrouError::Format(e.to_string()))?
        )
        .map_err(wio)?;
    }
    Ok(())
}

/// Splits `#` lines (merged as JSON objects) from the CSV body.
fn split_comments<R: Read>(reader: R) -> Result<(Map<String, Value>, String)> {
    let mut meta = Map::new();
    let mut body = String::new();
    for line in BufReader::new(reader).lines() {
        let line = line.map_err(wio)?;
        if let Some(rest) = line.trim_start().strip_prefix('#') {
            if let Ok(Value::Object(m)) = serde_json::from_str::<Value>(rest.trim()) {
                meta.extend(m);
            }
        } else if !line.trim().is_empty() {
            body.push_str(&line);
            body.push('\n');
        }
    }
    Ok((meta, body))
}

fn regular_ratio(grid: &TwoScaleGrid) -> Option<usize> {
    let idx = grid.coarse_idx();
    let r = *idx.get(1)?;
    (r > 0 && idx.iter().enumerate().all(|(m, &i)| i == m * r) && idx.len() == (grid.len() - 1) / r + 1).then_some(r)
}

/// `time,<labels>` with the grid in the header line.
pub fn write_path_csv<W: Write>(w: &mut W, path: &SampledPath, header: &Value) -> Result<()> {
    let mut meta = match header {
        Value::Object(m) => m.clone(),
        Value::Null => Map::new(),
        other => {
            let mut m = Map::new();
            m.insert("config".into(), other.clone());
            m
        }
    };
    match regular_ratio(&path.grid) {
        Some(r) => meta.insert("coarse_ratio".into(), r.into()),
        None => meta.insert("coarse_idx".into(), path.grid.coarse_idx().to_vec().into()),
    };
    write_header(w, &Value::Object(meta))?;
    writeln!(w, "time,{}", path.labels.join(",")).map_err(wio)?;
    for (n, t) in path.grid.fine().iter().enumerate() {
        let row: Vec<String> = path.values.row(n).iter().map(|&x| fmt_f64(x)).collect();
        writeln!(w, "{},{}", fmt_f64(*t), row.join(",")).map_err(wio)?;
    }
    Ok(())
}

/// Reads a path CSV. `coarse_ratio` overrides the grid recorded in the header;
/// with neither, the coarse grid equals the fine grid.
pub fn read_path_csv<R: Read>(reader: R, coarse_ratio: Option<usize>) -> Result<SampledPath> {
    let (meta, body) = split_comments(reader)?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| GrouError::Format(format!("path CSV header: {e}")))?
        .clone();
    if header.len() < 2 || header[0].trim() != "time" {
        return Err(GrouError::Format(
            "path CSV must start with a `time` column and at least one edge column".into(),
        ));
    }
    let labels: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let k = labels.len();
    let mut times = Vec::new();
    let mut vals = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| GrouError::Format(format!("path CSV row {}: {e}", i + 1)))?;
        if rec.len() != k + 1 {
            return Err(GrouError::Format(format!(
                "path CSV row {} has {} fields, expected {}",
                i + 1,
                rec.len(),
                k + 1
            )));
        }
        for (j, f) in rec.iter().enumerate() {
            let x: f64 = f.trim().parse().map_err(|_| {
                GrouError::Format(format!(
                    "path CSV row {} column {}: `{f}` is not a number",
                    i + 1,
                    j + 1
                ))
            })?;
            if j == 0 {
                times.push(x);
            } else {
                vals.push(x);
            }
        }
    }
    let grid = match (coarse_ratio, meta.get("coarse_idx"), meta.get("coarse_ratio")) {
        (Some(r), _, _) => TwoScaleGrid::with_ratio(times.clone(), r)?,
        (None, Some(idx), _) => {
            let idx: Vec<usize> = serde_json::from_value(idx.clone())
                .map_err(|e| GrouError::Format(format!("coarse_idx header: {e}")))?;
            TwoScaleGrid::new(times.clone(), idx)?
        }
        (None, None, Some(r)) => {
            let r = r
                .as_u64()
                .ok_or_else(|| GrouError::Format("coarse_ratio header is not an integer".into()))?;
            TwoScaleGrid::with_ratio(times.clone(), r as usize)?
        }
        (None, None, None) => TwoScaleGrid::with_ratio(times.clone(), 1)?,
    };
    SampledPath::new(grid, DMatrix::from_row_slice(times.len(), k, &vals), labels)
}

pub fn read_path_file(path: &Path, coarse_ratio: Option<usize>) -> Result<SampledPath> {
    read_path_csv(open(path)?, coarse_ratio).map_err(|e| match e {
        GrouError::Format(m) => GrouError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub params: Option<GrouParams>,
    pub lag_matrices: Vec<Vec<Vec<f64>>>,
    pub noise: LevySpec,
    pub seed: u64,
    pub stream: u64,
    pub jumps: Vec<JumpEvent>,
    pub initial_state: Vec<f64>,
}

impl From<&PathTruth> for TruthSidecar {
    fn from(t: &PathTruth) -> Self {
        TruthSidecar {
            params: t.params.clone(),
            lag_matrices: t.lag_matrices.iter().map(matrix_to_rows).collect(),
            noise: t.noise.clone(),
            seed: t.seed,
            stream: t.stream,
            jumps: t.jumps.clone(),
            initial_state: t.initial_state.iter().copied().collect(),
        }
    }
}

/// Fitted model in a form the forecaster can rebuild without the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub k: usize,
    pub labels: Vec<String>,
    /// Present for graph-structured fits.
    pub shape: Option<ModelShape>,
    pub params: Option<GrouParams>,
    pub theta_hat: Vec<f64>,
    pub lag_matrices: Vec<Vec<Vec<f64>>>,
    pub loglik: f64,
    pub bic: f64,
    pub n_coarse: usize,
    pub ridge: f64,
    pub diagnostics: Diagnostics,
    pub triplet: LevySpec,
}

impl EstimationReport {
    pub fn new(result: &EstimationResult, labels: &[String]) -> Result<Self> {
        let shape = match &result.structure {
            DriftStructure::Graph { shape, .. } => Some(shape.clone()),
            DriftStructure::Unstructured { .. } => None,
        };
        let lags = result.structure.lag_matrices(result.k, &result.theta_hat)?;
        Ok(EstimationReport {
            k: result.k,
            labels: labels.to_vec(),
            shape,
            params: result.params(),
            theta_hat: result.theta_hat.iter().copied().collect(),
            lag_matrices: lags.iter().map(matrix_to_rows).collect(),
            loglik: result.loglik,
            bic: result.bic,
            n_coarse: result.n_coarse,
            ridge: result.ridge_used,
            diagnostics: result.diagnostics.clone(),
            triplet: result.triplet_used.clone(),
        })
    }

    pub fn system(&self) -> Result<CompanionSystem> {
        let lags = self
            .lag_matrices
            .iter()
            .map(|m| matrix_from_rows(m, "lag_matrices"))
            .collect::<Result<Vec<_>>>()?;
        CompanionSystem::from_lag_matrices(lags)
    }
}

/// `time,edge,forecast_mean,forecast_var`, where `time` is the forecast
/// target time and `forecast_var` the marginal conditional variance.
pub fn write_forecast_csv<W: Write>(
    w: &mut W,
    path: &SampledPath,
    forecast: &RollingForecast,
    header: &Value,
) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "time,edge,forecast_mean,forecast_var").map_err(wio)?;
    let t = path.grid.fine();
    for (row, (&n, &h)) in forecast.origins.iter().zip(&forecast.horizons).enumerate() {
        for (e, label) in path.labels.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(t[n] + h),
                label,
                fmt_f64(forecast.mean[(row, e)]),
                fmt_f64(forecast.variance[row][(e, e)])
            )
            .map_err(wio)?;
        }
    }
    Ok(())
}

/// Columns mirror the study tables; `time` columns are wall-clock seconds.
pub fn write_study_csv<W: Write>(w: &mut W, table: &StudyTable, header: &Value) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "model,rmse_mean,rmse_sd,dir_acc_mean,dir_acc_sd,time_mean,time_sd").map_err(wio)?;
    for r in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.model.name(),
            fmt_f64(r.rmse_mean),
            fmt_f64(r.rmse_sd),
            fmt_f64(r.dir_acc_mean),
            fmt_f64(r.dir_acc_sd),
            fmt_f64(r.time_mean),
            fmt_f64(r.time_sd)
        )
        .map_err(wio)?;
    }
    Ok(())
}

/// `window_start,pair,value`
pub fn write_mrc_csv<W: Write>(w: &mut W, series: &RollingMrc, header: &Value) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "window_start,pair,value").map_err(wio)?;
    for (i, s) in series.starts.iter().enumerate() {
        for (j, p) in series.pairs.iter().enumerate() {
            writeln!(w, "{},{},{}", fmt_f64(*s), p, fmt_f64(series.values[(i, j)])).map_err(wio)?;
        }
    }
    Ok(())
}

/// `model,rmse,dir_acc`
pub fn write_forecast_table_csv<W: Write>(w: &mut W, rows: &[ForecastRow], header: &Value) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "model,rmse,dir_acc").map_err(wio)?;
    for r in rows {
        writeln!(w, "{},{},{}", r.model, fmt_f64(r.rmse), fmt_f64(r.dir_acc)).map_err(wio)?;
    }
    Ok(())
}

/// Long-format MRC output back to a pair series in window order.
pub fn read_mrc_csv<R: Read>(reader: R) -> Result<RollingMrc> {
    let (_, body) = split_comments(reader)?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let mut starts: Vec<f64> = Vec::new();
    let mut pairs: Vec<String> = Vec::new();
    let mut cells: Vec<f64> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| GrouError::Format(format!("MRC CSV row {}: {e}", i + 1)))?;
        if rec.len() != 3 {
            return Err(GrouError::Format(format!(
                "MRC CSV row {} needs window_start,pair,value",
                i + 1
            )));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| GrouError::Format(format!("MRC CSV row {}: `{s}`", i + 1)))
        };
        let s = parse(&rec[0])?;
        if starts.last() != Some(&s) {
            starts.push(s);
        }
        if starts.len() == 1 {
            pairs.push(rec[1].trim().to_string());
        } else if pairs.get(cells.len() % pairs.len()).map(String::as_str) != Some(rec[1].trim()) {
            return Err(GrouError::Format(format!(
                "MRC CSV row {}: pair order differs between windows",
                i + 1
            )));
        }
        cells.push(parse(&rec[2])?);
    }
    if starts.is_empty() || cells.len() != starts.len() * pairs.len() {
        return Err(GrouError::Format("MRC CSV is empty or has incomplete windows".into()));
    }
    Ok(RollingMrc {
        values: DMatrix::from_row_slice(starts.len(), pairs.len(), &cells),
        starts,
        pairs,
    })
}

//! Prices to pair series to a selected network and order, with a one-step
//! forecast comparison on the held-out tail.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::benchmark::{evaluate, fit_benchmark, ContinuousFitConfig, ModelKind};
use crate::error::{GrouError, Result};
use crate::graph::weight_matrices;
use crate::mrc::{rolling_mrc, MrcConfig, PriceMatrix, RollingMrc};
use crate::selection::{edge_columns, joint_network_model_search, Candidate, SearchConfig, SearchOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mrc: MrcConfig,
    /// Window length and step in seconds.
    pub window: f64,
    pub step: f64,
    pub min_obs: usize,
    /// Series time between consecutive windows; `None` means `step` in hours.
    pub mesh: Option<f64>,
    pub coarse_ratio: usize,
    pub test_fraction: f64,
    pub search: SearchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mrc: MrcConfig::default(),
            window: 3600.0,
            step: 3600.0,
            min_obs: 10,
            mesh: None,
            coarse_ratio: 1,
            test_fraction: 0.2,
            search: SearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub model: String,
    pub rmse: f64,
    pub dir_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_windows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub pairs: Vec<String>,
    pub search: SearchOutcome,
    /// Pair labels of the selected graph's edges.
    pub selected_pairs: Vec<String>,
    pub selected: Candidate,
    pub table: Vec<ForecastRow>,
    pub seconds: f64,
}

impl PipelineReport {
    pub fn row(&self, model: &str) -> Option<&ForecastRow> {
        self.table.iter().find(|r| r.model == model)
    }
}

/// Rolling MRC series, joint graph and order search on the training part,
/// then every benchmark and every candidate order refitted on the selected
/// graph and scored on the test part.
pub fn run_pipeline(prices: &PriceMatrix, cfg: &PipelineConfig) -> Result<(RollingMrc, PipelineReport)> {
    let start = Instant::now();
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(GrouError::Config(format!(
            "test fraction {} not in (0, 1)",
            cfg.test_fraction
        )));
    }
    let series = rolling_mrc(prices, &cfg.mrc, cfg.window, cfg.step, cfg.min_obs)?;
    let mesh = cfg.mesh.unwrap_or(cfg.step / 3600.0);
    let universe = series.to_path(mesh, cfg.coarse_ratio)?;
    let n = universe.len();
    let n_test = ((n as f64) * cfg.test_fraction).ceil() as usize;
    if n_test + 10 > n {
        return Err(GrouError::Length(format!(
            "{n} windows are too few for a {} test split",
            cfg.test_fraction
        )));
    }
    let n_train = n - n_test;
    let train_universe = universe.head(n_train)?;
    let search = joint_network_model_search(&train_universe, prices.d(), &cfg.search)?;
    let selected = search.outcome.chosen.clone();
    let graph = &selected.graph;
    let cols = edge_columns(graph)?;
    let path = universe.select_columns(&cols)?;
    let train = path.head(n_train)?;

    let mut rows = Vec::new();
    let base_fit = ContinuousFitConfig {
        grou_shape: selected.shape.clone(),
        ..cfg.search.selection.fit.clone()
    };
    let max_stage = cfg
        .search
        .shapes
        .iter()
        .map(|s| s.max_stage())
        .max()
        .unwrap_or(1)
        .max(1);
    let weights = weight_matrices(graph, max_stage)?;
    let mut fitted = Vec::new();
    for kind in [
        ModelKind::Na,
        ModelKind::Ar,
        ModelKind::Var,
        ModelKind::Gnar,
        ModelKind::Ou,
        ModelKind::Mcar,
    ] {
        let t = Instant::now();
        fitted.push((
            kind.name().to_string(),
            fit_benchmark(kind, &train, &weights, &base_fit)?,
            t.elapsed().as_secs_f64(),
        ));
    }
    for shape in &cfg.search.shapes {
        let fit_cfg = ContinuousFitConfig {
            grou_shape: shape.clone(),
            ..base_fit.clone()
        };
        let t = Instant::now();
        match fit_benchmark(ModelKind::Grou, &train, &weights, &fit_cfg) {
            Ok(m) => fitted.push((shape.to_string(), m, t.elapsed().as_secs_f64())),
            Err(e) => log::warn!("pipeline: {shape} could not be fitted: {e}"),
        }
    }
    let models: Vec<_> = fitted.iter().map(|(_, m, s)| (m.clone(), *s)).collect();
    let reports = evaluate(&models, &path, n_train..n)?;
    for ((name, _, _), r) in fitted.iter().zip(reports) {
        rows.push(ForecastRow {
            model: name.clone(),
            rmse: r.rmse,
            dir_acc: r.dir_acc,
        });
    }
    let selected_pairs = cols.iter().map(|&c| series.pairs[c].clone()).collect();
    let report = PipelineReport {
        n_windows: n,
        n_train,
        n_test,
        pairs: series.pairs.clone(),
        search,
        selected_pairs,
        selected,
        table: rows,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((series, report))
}

//! Comparison models, out-of-sample metrics and Monte Carlo studies.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GrouError, Result};
use crate::estimate::{
    estimate_drift_structured, estimate_triplet, solve_ridge, Activity, DriftStructure, RidgePolicy, ThresholdPolicy,
};
use crate::forecast::{rolling_forecast_with, Horizon};
use crate::graph::{weight_matrices, EdgeGraph, WeightMatrices};
use crate::model::{build_companion, CompanionSystem, GrouParams, ModelShape};
use crate::noise::LevySpec;
use crate::simulate::{default_labels, simulate_path, InitState, SampledPath, TwoScaleGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    Na,
    Ar,
    Var,
    Gnar,
    Ou,
    Mcar,
    Grou,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Na,
        ModelKind::Ar,
        ModelKind::Var,
        ModelKind::Gnar,
        ModelKind::Ou,
        ModelKind::Mcar,
        ModelKind::Grou,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Na => "NA",
            ModelKind::Ar => "AR",
            ModelKind::Var => "VAR",
            ModelKind::Gnar => "GNAR",
            ModelKind::Ou => "OU",
            ModelKind::Mcar => "MCAR",
            ModelKind::Grou => "grOU",
        }
    }
}

/// Where continuous-time models take their noise triplet from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TripletSource {
    Estimated,
    Known { spec: LevySpec },
}

/// Settings shared by the continuous-time fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuousFitConfig {
    pub threshold: ThresholdPolicy,
    pub ridge: RidgePolicy,
    pub triplet: TripletSource,
    pub horizon: Horizon,
    /// Shape used by the GROU model.
    pub grou_shape: ModelShape,
}

impl Default for ContinuousFitConfig {
    fn default() -> Self {
        ContinuousFitConfig {
            threshold: ThresholdPolicy::default_for(Activity::Finite),
            ridge: RidgePolicy::Auto,
            triplet: TripletSource::Estimated,
            horizon: Horizon::FineStep,
            grou_shape: ModelShape { l: 1, r: vec![1] },
        }
    }
}

#[derive(Debug, Clone)]
pub enum BenchmarkModel {
    Naive,
    Ar {
        intercept: DVector<f64>,
        coef: DVector<f64>,
    },
    Var {
        intercept: DVector<f64>,
        coef: DMatrix<f64>,
    },
    Gnar {
        alpha: DVector<f64>,
        beta: f64,
        w: DMatrix<f64>,
    },
    Continuous {
        kind: ModelKind,
        system: CompanionSystem,
        noise: LevySpec,
        horizon: Horizon,
    },
}

impl BenchmarkModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            BenchmarkModel::Naive => ModelKind::Na,
            BenchmarkModel::Ar { .. } => ModelKind::Ar,
            BenchmarkModel::Var { .. } => ModelKind::Var,
            BenchmarkModel::Gnar { .. } => ModelKind::Gnar,
            BenchmarkModel::Continuous { kind, .. } => *kind,
        }
    }

    /// Forecasts of `Y_{n+1}` for each origin `n` in `origins`.
    pub fn predict(&self, path: &SampledPath, origins: std::ops::Range<usize>) -> Result<DMatrix<f64>> {
        let k = path.k();
        let rows = origins.len();
        let y = |n: usize| path.values.row(n).transpose();
        let out = match self {
            BenchmarkModel::Naive => DMatrix::from_fn(rows, k, |r, e| path.values[(origins.start + r, e)]),
            BenchmarkModel::Ar { intercept, coef } => DMatrix::from_fn(rows, k, |r, e| {
                intercept[e] + coef[e] * path.values[(origins.start + r, e)]
            }),
            BenchmarkModel::Var { intercept, coef } => {
                let mut m = DMatrix::zeros(rows, k);
                for (r, n) in origins.clone().enumerate() {
                    m.row_mut(r).copy_from(&(intercept + coef * y(n)).transpose());
                }
                m
            }
            BenchmarkModel::Gnar { alpha, beta, w } => {
                let mut m = DMatrix::zeros(rows, k);
                for (r, n) in origins.clone().enumerate() {
                    let yn = y(n);
                    let pred = alpha.component_mul(&yn) + w * &yn * *beta;
                    m.row_mut(r).copy_from(&pred.transpose());
                }
                m
            }
            BenchmarkModel::Continuous {
                system, noise, horizon, ..
            } => rolling_forecast_with(path, system, noise, *horizon, origins)?.mean,
        };
        Ok(out)
    }
}

fn ols(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let mut coef = DMatrix::zeros(x.ncols(), y.ncols());
    for c in 0..y.ncols() {
        let rhs = xty.column(c).into_owned();
        let sol = match solve_ridge(&xtx, &rhs, RidgePolicy::Fixed(0.0)) {
            Ok((s, _)) => s,
            Err(GrouError::Singular(_)) => solve_ridge(&xtx, &rhs, RidgePolicy::Auto)?.0,
            Err(e) => return Err(e),
        };
        coef.set_column(c, &sol);
    }
    Ok(coef)
}

/// `weights` come from the fitting graph and feed GNAR, OU and grOU.
pub fn fit_benchmark(
    kind: ModelKind,
    train: &SampledPath,
    weights: &WeightMatrices,
    cfg: &ContinuousFitConfig,
) -> Result<BenchmarkModel> {
    let k = train.k();
    let n = train.len();
    if n < 3 {
        return Err(GrouError::Length(format!("{n} training observations")));
    }
    let lagged = train.values.rows(0, n - 1);
    let target = train.values.rows(1, n - 1).into_owned();
    Ok(match kind {
        ModelKind::Na => BenchmarkModel::Naive,
        ModelKind::Ar => {
            let mut intercept = DVector::zeros(k);
            let mut coef = DVector::zeros(k);
            for e in 0..k {
                let x = DMatrix::from_fn(n - 1, 2, |i, j| if j == 0 { 1.0 } else { lagged[(i, e)] });
                let b = ols(&x, &target.columns(e, 1).into_owned())?;
                intercept[e] = b[(0, 0)];
                coef[e] = b[(1, 0)];
            }
            BenchmarkModel::Ar { intercept, coef }
        }
        ModelKind::Var => {
            let x = DMatrix::from_fn(n - 1, k + 1, |i, j| if j == 0 { 1.0 } else { lagged[(i, j - 1)] });
            let b = ols(&x, &target)?;
            BenchmarkModel::Var {
                intercept: b.row(0).transpose(),
                coef: b.rows(1, k).transpose(),
            }
        }
        ModelKind::Gnar => {
            if weights.max_stage() < 1 || weights.k() != k {
                return Err(GrouError::Config(
                    "GNAR needs first-stage weights for the path's edges".into(),
                ));
            }
            let w = weights.stage(1).clone();
            let agg = &lagged * w.transpose();
            let rows = (n - 1) * k;
            let mut x = DMatrix::zeros(rows, k + 1);
            let mut y = DMatrix::zeros(rows, 1);
            for i in 0..n - 1 {
                for e in 0..k {
                    let r = i * k + e;
                    x[(r, e)] = lagged[(i, e)];
                    x[(r, k)] = agg[(i, e)];
                    y[(r, 0)] = target[(i, e)];
                }
            }
            let b = ols(&x, &y)?;
            BenchmarkModel::Gnar {
                alpha: b.rows(0, k).column(0).into_owned(),
                beta: b[(k, 0)],
                w,
            }
        }
        ModelKind::Ou | ModelKind::Mcar | ModelKind::Grou => {
            let structure = match kind {
                ModelKind::Ou => DriftStructure::graph(weights.clone(), ModelShape { l: 1, r: vec![0] }),
                ModelKind::Mcar => DriftStructure::Unstructured { lags: 1 },
                _ => DriftStructure::graph(weights.clone(), cfg.grou_shape.clone()),
            };
            let triplet = match &cfg.triplet {
                TripletSource::Known { spec } => spec.clone(),
                TripletSource::Estimated => estimate_triplet(train, &cfg.threshold, structure.lags())?,
            };
            let fit = estimate_drift_structured(train, &structure, &triplet, &cfg.threshold, cfg.ridge)?;
            BenchmarkModel::Continuous {
                kind,
                system: fit.system()?,
                noise: triplet,
                horizon: cfg.horizon,
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: ModelKind,
    pub rmse: f64,
    pub dir_acc: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
}

/// `√(1/(TK) ΣΣ (Y − Ŷ)²)` over the target rows `start..end` with forecasts
/// made from the rows before them.
pub fn rmse(actual: &DMatrix<f64>, forecast: &DMatrix<f64>) -> f64 {
    let n = actual.len() as f64;
    ((actual - forecast).norm_squared() / n).sqrt()
}

/// Fraction of (t, k) with `sgn(Y_t − Y_{t−1}) = sgn(Ŷ_t − Y_{t−1})`.
/// Signs compare as three-valued, so a zero predicted move scores only
/// against an exactly zero realised move.
pub fn directional_accuracy(previous: &DMatrix<f64>, actual: &DMatrix<f64>, forecast: &DMatrix<f64>) -> f64 {
    let sgn = |x: f64| {
        if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            0
        }
    };
    let hits = previous
        .iter()
        .zip(actual.iter())
        .zip(forecast.iter())
        .filter(|((p, a), f)| sgn(*a - *p) == sgn(*f - *p))
        .count();
    hits as f64 / previous.len() as f64
}

/// Scores models on targets `test_range` (fine indices); the forecast for
/// target `t` is made from origin `t − 1`.
pub fn evaluate(
    models: &[(BenchmarkModel, f64)],
    path: &SampledPath,
    test_range: std::ops::Range<usize>,
) -> Result<Vec<MetricReport>> {
    if test_range.start == 0 || test_range.end > path.len() || test_range.is_empty() {
        return Err(GrouError::Index(format!(
            "test range {test_range:?} invalid for {} points",
            path.len()
        )));
    }
    let actual = path.values.rows(test_range.start, test_range.len()).into_owned();
    let previous = path.values.rows(test_range.start - 1, test_range.len()).into_owned();
    models
        .iter()
        .map(|(m, fit_seconds)| {
            let start = Instant::now();
            let f = m.predict(path, test_range.start - 1..test_range.end - 1)?;
            let predict_seconds = start.elapsed().as_secs_f64();
            let dir_acc = if m.kind() == ModelKind::Na {
                0.5
            } else {
                directional_accuracy(&previous, &actual, &f)
            };
            Ok(MetricReport {
                model: m.kind(),
                rmse: rmse(&actual, &f),
                dir_acc,
                fit_seconds: *fit_seconds,
                predict_seconds,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scenario {
    Correct,
    /// Simulate on the full graph, fit without edge `edge` (and its series).
    MissingEdge {
        edge: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub graph: EdgeGraph,
    pub params: GrouParams,
    pub noise: LevySpec,
    pub n_obs: usize,
    pub n_test: usize,
    pub mesh_fine: f64,
    pub coarse_ratio: usize,
    pub n_paths: usize,
    pub scenario: Scenario,
    pub seed: u64,
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub fit: ContinuousFitConfig,
}

impl StudyConfig {
    /// K5 with α = 5 on the first edge and 1 elsewhere, β = 2, compound
    /// Poisson jumps N(0, σ²I) at rate 1 over Brownian noise; 2187 points
    /// with the last 400 held out and a coarse mesh of three fine steps.
    pub fn predictive(jump_variance: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let graph = crate::graph::complete_graph(5)?;
        let k = graph.k();
        let mut alpha = DMatrix::from_element(1, k, 1.0);
        alpha[(0, 0)] = 5.0;
        let params = GrouParams::new(ModelShape { l: 1, r: vec![1] }, alpha, vec![vec![2.0]])?;
        let noise = LevySpec::new(
            DVector::zeros(k),
            DMatrix::identity(k, k),
            crate::noise::JumpSpec::CompoundPoisson {
                rate: 1.0,
                jump_cov: DMatrix::identity(k, k) * jump_variance,
            },
        )?;
        Ok(StudyConfig {
            graph,
            params,
            noise,
            n_obs: 2187,
            n_test: 400,
            mesh_fine: 3f64.powi(-6),
            coarse_ratio: 3,
            n_paths,
            scenario: Scenario::Correct,
            seed,
            models: ModelKind::ALL.to_vec(),
            fit: ContinuousFitConfig::default(),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.n_test == 0 || self.n_test + 3 > self.n_obs {
            return Err(GrouError::Config(format!(
                "n_test = {} leaves no training data out of {}",
                self.n_test, self.n_obs
            )));
        }
        if self.params.k() != self.graph.k() || self.noise.k() != self.graph.k() {
            return Err(GrouError::Config("graph, parameters and noise disagree on K".into()));
        }
        if let Scenario::MissingEdge { edge } = self.scenario {
            if edge >= self.graph.k() {
                return Err(GrouError::Config(format!("missing edge {edge} out of range")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub model: ModelKind,
    pub rmse_mean: f64,
    pub rmse_sd: f64,
    pub dir_acc_mean: f64,
    pub dir_acc_sd: f64,
    pub time_mean: f64,
    pub time_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    /// Per path, one report per model in `rows` order.
    pub per_path: Vec<Vec<MetricReport>>,
}

impl StudyTable {
    pub fn row(&self, kind: ModelKind) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.model == kind)
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Simulates, fits and scores one path of a study.
pub fn run_study_path(cfg: &StudyConfig, stream: u64) -> Result<Vec<MetricReport>> {
    let full_weights = weight_matrices(&cfg.graph, cfg.params.shape().max_stage().max(1))?;
    let system = build_companion(&cfg.params, &full_weights)?;
    let times: Vec<f64> = (0..cfg.n_obs).map(|i| i as f64 * cfg.mesh_fine).collect();
    let grid = TwoScaleGrid::with_ratio(times, cfg.coarse_ratio)?;
    let mut path = simulate_path(&system, &cfg.noise, &grid, &InitState::Stationary, cfg.seed, stream)?;
    path.truth = None;

    let (path, fit_graph, fit_cfg) = match cfg.scenario {
        Scenario::Correct => (path, cfg.graph.clone(), cfg.fit.clone()),
        Scenario::MissingEdge { edge } => {
            let keep: Vec<usize> = (0..cfg.graph.k()).filter(|&e| e != edge).collect();
            let mut fit = cfg.fit.clone();
            if let TripletSource::Known { spec } = &fit.triplet {
                fit.triplet = TripletSource::Known {
                    spec: spec.select(&keep)?,
                };
            }
            let mut p = path.select_columns(&keep)?;
            p.labels = default_labels(keep.len());
            (p, cfg.graph.without_edge(edge)?, fit)
        }
    };
    let max_stage = fit_cfg.grou_shape.max_stage().max(1);
    let weights = weight_matrices(&fit_graph, max_stage)?;
    let train_len = cfg.n_obs - cfg.n_test;
    let train = path.head(train_len)?;

    let mut fitted = Vec::with_capacity(cfg.models.len());
    for &kind in &cfg.models {
        let start = Instant::now();
        let model = fit_benchmark(kind, &train, &weights, &fit_cfg)?;
        fitted.push((model, start.elapsed().as_secs_f64()));
    }
    evaluate(&fitted, &path, train_len..cfg.n_obs)
}

pub fn monte_carlo_study(cfg: &StudyConfig) -> Result<StudyTable> {
    cfg.validate()?;
    let per_path: Vec<Vec<MetricReport>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| run_study_path(cfg, i))
        .collect::<Result<_>>()?;
    let rows = cfg
        .models
        .iter()
        .enumerate()
        .map(|(j, &model)| {
            let pick = |f: &dyn Fn(&MetricReport) -> f64| per_path.iter().map(|r| f(&r[j])).collect::<Vec<_>>();
            let (rmse_mean, rmse_sd) = mean_sd(&pick(&|r| r.rmse));
            let (dir_acc_mean, dir_acc_sd) = mean_sd(&pick(&|r| r.dir_acc));
            let (time_mean, time_sd) = mean_sd(&pick(&|r| r.fit_seconds + r.predict_seconds));
            StudyRow {
                model,
                rmse_mean,
                rmse_sd,
                dir_acc_mean,
                dir_acc_sd,
                time_mean,
                time_sd,
            }
        })
        .collect();
    Ok(StudyTable { rows, per_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn series_path(values: DMatrix<f64>) -> SampledPath {
        let n = values.nrows();
        let k = values.ncols();
        let grid = TwoScaleGrid::with_ratio((0..n).map(|i| i as f64).collect(), 1).unwrap();
        SampledPath::new(grid, values, default_labels(k)).unwrap()
    }

    fn dummy_weights(k: usize) -> WeightMatrices {
        let g = EdgeGraph::new(k + 1, false, (0..k).map(|i| (i, i + 1)).collect()).unwrap();
        weight_matrices(&g, 1).unwrap()
    }

    #[test]
    fn naive_predicts_previous_value() {
        let p = series_path(DMatrix::from_fn(10, 2, |i, j| (i * 3 + j) as f64));
        let m = fit_benchmark(ModelKind::Na, &p, &dummy_weights(2), &ContinuousFitConfig::default()).unwrap();
        let f = m.predict(&p, 3..6).unwrap();
        assert_eq!(f, p.values.rows(3, 3).into_owned());
    }

    #[test]
    fn ar_recovers_coefficient() {
        let mut rng = crate::rng::stream_rng(3, 0);
        let n = 20_000;
        let mut y = DMatrix::zeros(n, 1);
        for i in 1..n {
            let e: f64 = rng.sample(StandardNormal);
            y[(i, 0)] = 0.5 * y[(i - 1, 0)] + e;
        }
        let p = series_path(y);
        let BenchmarkModel::Ar { coef, .. } =
            fit_benchmark(ModelKind::Ar, &p, &dummy_weights(1), &ContinuousFitConfig::default()).unwrap()
        else {
            panic!()
        };
        // OLS standard error ≈ √((1 − φ²)/n)
        let se = ((1.0 - 0.25) / n as f64).sqrt();
        assert!((coef[0] - 0.5).abs() < 4.0 * se, "{}", coef[0]);
    }

    #[test]
    fn var_and_gnar_recover_generating_model() {
        let w = dummy_weights(3);
        let w1 = w.stage(1).clone();
        let alpha = DVector::from_vec(vec![0.3, 0.5, -0.2]);
        let beta = 0.25;
        let mut rng = crate::rng::stream_rng(5, 0);
        let n = 40_000;
        let mut y = DMatrix::zeros(n, 3);
        for i in 1..n {
            let prev = y.row(i - 1).transpose();
            let next = alpha.component_mul(&prev)
                + &w1 * &prev * beta
                + DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            y.row_mut(i).copy_from(&next.transpose());
        }
        let p = series_path(y);
        let cfg = ContinuousFitConfig::default();
        let BenchmarkModel::Gnar { alpha: a, beta: b, .. } = fit_benchmark(ModelKind::Gnar, &p, &w, &cfg).unwrap()
        else {
            panic!()
        };
        assert!((a - &alpha).abs().max() < 0.03);
        assert!((b - beta).abs() < 0.03);
        let BenchmarkModel::Var { coef, intercept } = fit_benchmark(ModelKind::Var, &p, &w, &cfg).unwrap() else {
            panic!()
        };
        let truth = DMatrix::from_diagonal(&alpha) + w1 * beta;
        assert!((coef - truth).abs().max() < 0.03);
        assert!(intercept.abs().max() < 0.03);
    }

    #[test]
    fn metric_fixtures() {
        let prev = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let actual = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 2.0]);
        assert_eq!(rmse(&actual, &actual), 0.0);
        assert_eq!(directional_accuracy(&prev, &actual, &actual), 1.0);
        // zero predicted move only scores against a zero realised move
        let flat = prev.clone();
        assert_eq!(directional_accuracy(&prev, &actual, &flat), 0.25);
        let f = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 0.0]);
        assert_eq!(directional_accuracy(&prev, &actual, &f), 0.5);
        assert!((rmse(&actual, &f) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn evaluate_conventions_and_purity() {
        let p = series_path(DMatrix::from_fn(50, 2, |i, j| ((i * 7 + j * 3) % 11) as f64));
        let w = dummy_weights(2);
        let cfg = ContinuousFitConfig::default();
        let train = p.head(40).unwrap();
        let models: Vec<(BenchmarkModel, f64)> = [ModelKind::Na, ModelKind::Ar, ModelKind::Var]
            .iter()
            .map(|&k| (fit_benchmark(k, &train, &w, &cfg).unwrap(), 0.0))
            .collect();
        let a = evaluate(&models, &p, 40..50).unwrap();
        let b = evaluate(&models, &p, 40..50).unwrap();
        assert_eq!(a[0].dir_acc, 0.5);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.rmse.to_bits(), y.rmse.to_bits());
            assert_eq!(x.dir_acc.to_bits(), y.dir_acc.to_bits());
        }
    }

    #[test]
    fn single_path_study_has_zero_sd() {
        let mut cfg = StudyConfig::predictive(1.0, 1, 7).unwrap();
        cfg.n_obs = 400;
        cfg.n_test = 100;
        let table = monte_carlo_study(&cfg).unwrap();
        assert_eq!(table.rows.len(), 7);
        assert!(table.rows.iter().all(|r| r.rmse_sd == 0.0 && r.dir_acc_sd == 0.0));
        assert_eq!(table.row(ModelKind::Na).unwrap().dir_acc_mean, 0.5);

        cfg.scenario = Scenario::MissingEdge { edge: 0 };
        let missing = monte_carlo_study(&cfg).unwrap();
        assert_eq!(missing.rows.len(), 7);
    }
}

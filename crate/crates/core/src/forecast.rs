//! Conditional-mean forecasts from a fitted companion system, with the
//! zero-initialisation rule for unobserved derivative states.

use std::collections::HashMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GrouError, Result};
use crate::estimate::EstimationResult;
use crate::model::{CompanionSystem, ConditionalPropagator};
use crate::noise::LevySpec;
use crate::simulate::SampledPath;

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastState {
    pub x: DVector<f64>,
    pub origin_time: f64,
}

/// State at fine index `n`: block 1 holds `Y_n`, higher blocks are zero.
pub fn init_state_at(path: &SampledPath, n: usize, lags: usize) -> Result<ForecastState> {
    if path.is_empty() {
        return Err(GrouError::Length("cannot initialise from an empty path".into()));
    }
    if n >= path.len() {
        return Err(GrouError::Index(format!(
            "origin {n} beyond path of length {}",
            path.len()
        )));
    }
    let k = path.k();
    let mut x = DVector::zeros(lags * k);
    x.rows_mut(0, k).copy_from(&path.row(n));
    Ok(ForecastState {
        x,
        origin_time: path.grid.fine()[n],
    })
}

pub fn init_state(path: &SampledPath, lags: usize) -> Result<ForecastState> {
    if path.is_empty() {
        return Err(GrouError::Length("cannot initialise from an empty path".into()));
    }
    init_state_at(path, path.len() - 1, lags)
}

pub fn forecast(
    system: &CompanionSystem,
    noise: &LevySpec,
    state: &ForecastState,
    h: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    crate::model::conditional_moments(system, noise, &state.x, h)
}

/// Step used for one-step-ahead forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// The next fine-grid observation.
    FineStep,
    /// One coarse mesh `Δ_𝒬` ahead.
    CoarseStep,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingForecast {
    /// Fine index of each forecast origin.
    pub origins: Vec<usize>,
    /// Forecast horizon used for each origin.
    pub horizons: Vec<f64>,
    /// One row per origin.
    pub mean: DMatrix<f64>,
    /// Conditional variance per origin, `K×K` each.
    pub variance: Vec<DMatrix<f64>>,
}

/// One-step forecasts from every origin in `eval_range`, each using only the
/// observation at its origin.
///
/// Non-Hurwitz fits are forecast with the transient law, which is what the
/// stationary formula reduces to whenever it is defined.
pub fn rolling_forecast(
    path: &SampledPath,
    fitted: &EstimationResult,
    horizon: Horizon,
    eval_range: Range<usize>,
) -> Result<RollingForecast> {
    let system = fitted.system()?;
    rolling_forecast_with(path, &system, &fitted.triplet_used, horizon, eval_range)
}

pub fn rolling_forecast_with(
    path: &SampledPath,
    system: &CompanionSystem,
    noise: &LevySpec,
    horizon: Horizon,
    eval_range: Range<usize>,
) -> Result<RollingForecast> {
    if eval_range.end > path.len() || eval_range.start > eval_range.end {
        return Err(GrouError::Index(format!(
            "evaluation range {eval_range:?} outside path of length {}",
            path.len()
        )));
    }
    if system.k() != path.k() {
        return Err(GrouError::Config(format!(
            "fitted model has K = {}, path has {} edges",
            system.k(),
            path.k()
        )));
    }
    let times = path.grid.fine();
    let coarse = path.grid.mesh_coarse();
    let mut cache: HashMap<u64, ConditionalPropagator> = HashMap::new();
    let k = path.k();
    let mut mean = DMatrix::zeros(eval_range.len(), k);
    let mut variance = Vec::with_capacity(eval_range.len());
    let mut horizons = Vec::with_capacity(eval_range.len());
    for (row, n) in eval_range.clone().enumerate() {
        let h = match horizon {
            Horizon::FineStep => {
                if n + 1 < times.len() {
                    times[n + 1] - times[n]
                } else {
                    times[n] - times[n - 1]
                }
            }
            Horizon::CoarseStep => coarse,
            Horizon::Fixed(h) => h,
        };
        let prop = match cache.entry(h.to_bits()) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(ConditionalPropagator::transient(system, noise, h)?)
            }
        };
        let state = init_state_at(path, n, system.lags())?;
        mean.row_mut(row).copy_from(&prop.mean(&state.x).transpose());
        variance.push(prop.variance());
        horizons.push(h);
    }
    Ok(RollingForecast {
        origins: eval_range.collect(),
        horizons,
        mean,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{DriftStructure, RidgePolicy, ThresholdPolicy};
    use crate::model::stationary_moments;
    use crate::simulate::{make_uniform_grids, simulate_path, InitState};

    fn scalar_path() -> SampledPath {
        let sys = CompanionSystem::from_lag_matrices(vec![DMatrix::from_element(1, 1, 2.0)]).unwrap();
        let noise = LevySpec::brownian(DMatrix::identity(1, 1)).unwrap();
        let grid = make_uniform_grids(4.0, 1.0 / 64.0, 4).unwrap();
        simulate_path(&sys, &noise, &grid, &InitState::Stationary, 1, 0).unwrap()
    }

    #[test]
    fn init_state_rule() {
        let p = scalar_path();
        let s = init_state(&p, 1).unwrap();
        assert_eq!(s.x, p.row(p.len() - 1));

        let grid = crate::simulate::TwoScaleGrid::with_ratio(vec![0.0, 1.0], 1).unwrap();
        let two = SampledPath::new(
            grid,
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 2.0]),
            crate::simulate::default_labels(2),
        )
        .unwrap();
        let s = init_state(&two, 3).unwrap();
        assert_eq!(s.x.as_slice(), &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.origin_time, 1.0);
    }

    #[test]
    fn stationary_mean_is_fixed_point() {
        let sys = CompanionSystem::from_lag_matrices(vec![
            DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.2, 2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.5]),
        ])
        .unwrap();
        let noise = LevySpec::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::identity(2, 2),
            crate::noise::JumpSpec::None,
        )
        .unwrap();
        let m = stationary_moments(&sys, &noise).unwrap();
        let state = ForecastState {
            x: m.state_mean.clone(),
            origin_time: 0.0,
        };
        for h in [0.01, 1.0, 10.0] {
            let (mean, _) = forecast(&sys, &noise, &state, h).unwrap();
            assert!((mean - &m.mean).abs().max() < 1e-10);
        }
    }

    #[test]
    fn scalar_forecast_decays() {
        let sys = CompanionSystem::from_lag_matrices(vec![DMatrix::from_element(1, 1, 2.0)]).unwrap();
        let noise = LevySpec::brownian(DMatrix::identity(1, 1)).unwrap();
        let state = ForecastState {
            x: DVector::from_vec(vec![0.8]),
            origin_time: 0.0,
        };
        for h in [1e-9, 0.3, 2.0] {
            let (mean, _) = forecast(&sys, &noise, &state, h).unwrap();
            assert!((mean[0] - 0.8 * (-2.0 * h).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_path_one_step_error_is_second_order() {
        // zero-noise L = 1 flow: the model forecast is the flow itself, so the
        // error is at rounding level; an Euler step would be O(Δ²)
        let q = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 1.0]);
        let sys = CompanionSystem::from_lag_matrices(vec![q]).unwrap();
        let zero = LevySpec::brownian(DMatrix::zeros(2, 2)).unwrap();
        let grid = make_uniform_grids(2.0, 0.01, 1).unwrap();
        let p = simulate_path(
            &sys,
            &zero,
            &grid,
            &InitState::Explicit(DVector::from_vec(vec![1.0, -1.0])),
            0,
            0,
        )
        .unwrap();
        let f = rolling_forecast_with(&p, &sys, &zero, Horizon::FineStep, 0..p.len() - 1).unwrap();
        for (row, &n) in f.origins.iter().enumerate() {
            let err = (f.mean.row(row).transpose() - p.row(n + 1)).abs().max();
            assert!(err < 1e-4 * 1e-2, "{err}");
        }
    }

    #[test]
    fn rolling_matches_fitted_system() {
        let p = scalar_path();
        let noise = LevySpec::brownian(DMatrix::identity(1, 1)).unwrap();
        let fit = crate::estimate::estimate_drift_structured(
            &p,
            &DriftStructure::Unstructured { lags: 1 },
            &noise,
            &ThresholdPolicy::for_noise(&noise),
            RidgePolicy::Auto,
        )
        .unwrap();
        let q = fit.theta_hat[0];
        let f = rolling_forecast(&p, &fit, Horizon::CoarseStep, 10..20).unwrap();
        for (row, &n) in f.origins.iter().enumerate() {
            let want = p.values[(n, 0)] * (-q * p.grid.mesh_coarse()).exp();
            assert!((f.mean[(row, 0)] - want).abs() < 1e-12);
        }
        assert!(rolling_forecast(&p, &fit, Horizon::FineStep, 0..p.len() + 1).is_err());
    }
}

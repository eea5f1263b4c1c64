use std::path::Path;

use grou::benchmark::{ContinuousFitConfig, StudyConfig};
use grou::graph::EdgeGraph;
use grou::model::{GrouParams, ModelShape};
use grou::mrc::{IngestConfig, MrcConfig};
use grou::noise::LevySpec;
use grou::pipeline::PipelineConfig;
use grou::selection::SearchConfig;
use grou::{GrouError, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub t_end: f64,
    pub mesh_fine: f64,
    pub coarse_ratio: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            t_end: 32.0,
            mesh_fine: 2f64.powi(-10),
            coarse_ratio: 16,
        }
    }
}

/// Rolling-window settings of the price pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingConfig {
    pub window: f64,
    pub step: f64,
    pub min_obs: usize,
    pub mesh: Option<f64>,
    pub coarse_ratio: usize,
    pub test_fraction: f64,
}

impl Default for RollingConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        RollingConfig {
            window: p.window,
            step: p.step,
            min_obs: p.min_obs,
            mesh: p.mesh,
            coarse_ratio: p.coarse_ratio,
            test_fraction: p.test_fraction,
        }
    }
}

/// Everything a run can be configured with. Each subcommand reads the
/// blocks it needs; the resolved copy is written into every output header.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub graph: Option<EdgeGraph>,
    pub params: Option<GrouParams>,
    pub noise: Option<LevySpec>,
    pub grid: GridConfig,
    pub stream: u64,
    pub shape: Option<ModelShape>,
    pub fit: ContinuousFitConfig,
    pub study: Option<StudyConfig>,
    pub ingest: IngestConfig,
    pub mrc: MrcConfig,
    pub rolling: RollingConfig,
    pub search: SearchConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GrouError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GrouError::Config(format!("{}: {e}", path.display())))
    }

    /// Three-vertex path graph, the default network.
    pub fn graph_or_default(&self) -> Result<EdgeGraph> {
        match &self.graph {
            Some(g) => Ok(g.clone()),
            None => EdgeGraph::new(3, false, vec![(0, 1), (1, 2)]),
        }
    }

    /// grOU(2,[1,1]) with α = [[4, 3], [2, 1]], β = 1 at both lags.
    pub fn params_or_default(&self) -> Result<GrouParams> {
        match &self.params {
            Some(p) => Ok(p.clone()),
            None => GrouParams::new(
                ModelShape::new(vec![1, 1])?,
                DMatrix::from_row_slice(2, 2, &[4.0, 3.0, 2.0, 1.0]),
                vec![vec![1.0], vec![1.0]],
            ),
        }
    }

    /// Standard Brownian noise on `k` edges.
    pub fn noise_or_default(&self, k: usize) -> Result<LevySpec> {
        match &self.noise {
            Some(n) => Ok(n.clone()),
            None => LevySpec::brownian(DMatrix::identity(k, k)),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            mrc: self.mrc,
            window: self.rolling.window,
            step: self.rolling.step,
            min_obs: self.rolling.min_obs,
            mesh: self.rolling.mesh,
            coarse_ratio: self.rolling.coarse_ratio,
            test_fraction: self.rolling.test_fraction,
            search: self.search.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn partial_blocks_keep_other_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"search": {"n_candidates": 7}, "grid": {"t_end": 2}}"#).unwrap();
        assert_eq!(c.search.n_candidates, 7);
        assert_eq!(c.search.retain, SearchConfig::default().retain);
        assert_eq!(c.grid.t_end, 2.0);
        assert_eq!(c.grid.coarse_ratio, GridConfig::default().coarse_ratio);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 3}"#).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = RunConfig::default();
        c.graph = Some(c.graph_or_default().unwrap());
        c.params = Some(c.params_or_default().unwrap());
        c.noise = Some(c.noise_or_default(2).unwrap());
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}

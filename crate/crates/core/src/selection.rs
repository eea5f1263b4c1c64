//! BIC, order selection by validation directional accuracy, and the joint
//! graph and order search over random candidate networks.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmark::{directional_accuracy, ContinuousFitConfig, TripletSource};
use crate::error::{GrouError, Result};
use crate::estimate::{estimate_drift_structured, estimate_triplet, DriftStructure, EstimationResult};
use crate::forecast::rolling_forecast_with;
use crate::graph::{complete_graph, random_er_graph, weight_matrices, EdgeGraph};
use crate::model::ModelShape;
use crate::rng::child_seed;
use crate::simulate::SampledPath;

/// `−θᵀ[𝐊]θ + p·ln N`.
pub fn bic_from(theta: &DVector<f64>, info: &DMatrix<f64>, n_coarse: usize) -> Result<f64> {
    if n_coarse <= 1 {
        return Err(GrouError::Domain(format!(
            "BIC needs N > 1 coarse increments, got {n_coarse}"
        )));
    }
    let quad = theta.dot(&(info * theta));
    Ok(-quad + theta.len() as f64 * (n_coarse as f64).ln())
}

pub fn bic(result: &EstimationResult) -> Result<f64> {
    bic_from(&result.theta_hat, &result.info_k, result.n_coarse)
}

/// (1,[1]), (1,[2]), (2,[1,1]), (2,[2,2]), (3,[1,1,1]), (3,[2,2,2]).
pub fn default_shapes() -> Vec<ModelShape> {
    [1usize, 2, 3]
        .iter()
        .flat_map(|&l| [1usize, 2].map(|r| ModelShape { l, r: vec![r; l] }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub tolerance: f64,
    /// Trailing share of the supplied path used to score forecasts.
    pub validation_fraction: f64,
    pub fit: ContinuousFitConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            tolerance: 1e-2,
            validation_fraction: 0.2,
            fit: ContinuousFitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub graph_id: usize,
    pub graph_seed: Option<u64>,
    pub graph: EdgeGraph,
    pub shape: ModelShape,
    pub dir_acc: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// Best DirAcc first, then lowest BIC.
    pub ranked: Vec<Candidate>,
    pub chosen: Candidate,
}

/// Index chosen by the rule: best DirAcc, then lowest BIC among those within
/// `tolerance` of it, then lowest index.
pub fn choose(scores: &[(f64, f64)], tolerance: f64) -> Option<usize> {
    let best = scores.iter().map(|s| s.0).filter(|d| !d.is_nan()).reduce(f64::max)?;
    let mut chosen: Option<usize> = None;
    for (i, &(d, b)) in scores.iter().enumerate() {
        if d.is_nan() || best - d > tolerance {
            continue;
        }
        match chosen {
            Some(c) if scores[c].1 <= b => {}
            _ => chosen = Some(i),
        }
    }
    chosen
}

fn split_point(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(GrouError::Config(format!(
            "validation fraction {fraction} not in (0, 1)"
        )));
    }
    let n_val = ((n as f64) * fraction).ceil() as usize;
    if n_val == 0 || n_val + 3 > n {
        return Err(GrouError::Length(format!(
            "{n} points too few for a {fraction} validation split"
        )));
    }
    Ok(n - n_val)
}

/// Fits `shape` on the leading part of `path` and scores one-step forecasts
/// on the trailing validation part.
pub fn validation_fit(
    path: &SampledPath,
    graph: &EdgeGraph,
    shape: &ModelShape,
    cfg: &SelectionConfig,
) -> Result<(f64, EstimationResult)> {
    if graph.k() != path.k() {
        return Err(GrouError::Config(format!(
            "graph has {} edges, path {} series",
            graph.k(),
            path.k()
        )));
    }
    let n = path.len();
    let split = split_point(n, cfg.validation_fraction)?;
    let train = path.head(split)?;
    let weights = weight_matrices(graph, shape.max_stage().max(1))?;
    let structure = DriftStructure::graph(weights, shape.clone());
    let triplet = match &cfg.fit.triplet {
        TripletSource::Known { spec } => spec.clone(),
        TripletSource::Estimated => estimate_triplet(&train, &cfg.fit.threshold, shape.l)?,
    };
    let fit = estimate_drift_structured(&train, &structure, &triplet, &cfg.fit.threshold, cfg.fit.ridge)?;
    let rf = rolling_forecast_with(path, &fit.system()?, &triplet, cfg.fit.horizon, split - 1..n - 1)?;
    let actual = path.values.rows(split, n - split).into_owned();
    let previous = path.values.rows(split - 1, n - split).into_owned();
    Ok((directional_accuracy(&previous, &actual, &rf.mean), fit))
}

fn rank(mut cands: Vec<Candidate>) -> Vec<Candidate> {
    cands.sort_by(|a, b| b.dir_acc.total_cmp(&a.dir_acc).then(a.bic.total_cmp(&b.bic)));
    cands
}

pub fn select_model(
    path: &SampledPath,
    graph: &EdgeGraph,
    shapes: &[ModelShape],
    cfg: &SelectionConfig,
) -> Result<SelectionOutcome> {
    select_model_for(path, graph, 0, None, shapes, cfg)
}

fn select_model_for(
    path: &SampledPath,
    graph: &EdgeGraph,
    graph_id: usize,
    graph_seed: Option<u64>,
    shapes: &[ModelShape],
    cfg: &SelectionConfig,
) -> Result<SelectionOutcome> {
    if shapes.is_empty() {
        return Err(GrouError::Config("no candidate shapes".into()));
    }
    let mut cands = Vec::with_capacity(shapes.len());
    for shape in shapes {
        match validation_fit(path, graph, shape, cfg).and_then(|(d, fit)| Ok((d, bic(&fit)?))) {
            Ok((dir_acc, bic)) => cands.push(Candidate {
                graph_id,
                graph_seed,
                graph: graph.clone(),
                shape: shape.clone(),
                dir_acc,
                bic,
            }),
            Err(e) => warn!("selection: skipping {shape} on graph {graph_id}: {e}"),
        }
    }
    let scores: Vec<(f64, f64)> = cands.iter().map(|c| (c.dir_acc, c.bic)).collect();
    let idx = choose(&scores, cfg.tolerance)
        .ok_or_else(|| GrouError::Estimation(format!("every candidate shape failed on graph {graph_id}")))?;
    let chosen = cands[idx].clone();
    Ok(SelectionOutcome {
        ranked: rank(cands),
        chosen,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub n_candidates: usize,
    pub edge_prob: f64,
    pub screen_shape: ModelShape,
    pub retain: usize,
    pub shapes: Vec<ModelShape>,
    pub seed: u64,
    pub selection: SelectionConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_candidates: 1000,
            edge_prob: 0.4,
            screen_shape: ModelShape { l: 1, r: vec![1] },
            retain: 50,
            shapes: default_shapes(),
            seed: 0,
            selection: SelectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenEntry {
    pub graph_id: usize,
    pub graph_seed: u64,
    pub n_edges: usize,
    pub dir_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Screened graphs, best first; graphs that could not be screened are left out.
    pub screening: Vec<ScreenEntry>,
    /// One chosen pair per retained graph, best first.
    pub outcome: SelectionOutcome,
}

/// Columns of `universe` (every vertex pair in lexicographic order) that
/// carry the edges of `graph`.
pub fn edge_columns(graph: &EdgeGraph) -> Result<Vec<usize>> {
    let full = complete_graph(graph.n_vertices())?;
    graph
        .edges()
        .iter()
        .map(|&(i, j)| {
            full.edge_index(i, j)
                .ok_or_else(|| GrouError::Index(format!("edge ({i}, {j}) outside the pair universe")))
        })
        .collect()
}

/// Screens random graphs with a simple shape, then selects a shape for each
/// retained graph and returns the pair with the best validation DirAcc.
///
/// `universe` holds one series per vertex pair; a candidate graph uses the
/// series of its own edges.
pub fn joint_network_model_search(
    universe: &SampledPath,
    n_vertices: usize,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    let n_pairs = n_vertices * n_vertices.saturating_sub(1) / 2;
    if universe.k() != n_pairs {
        return Err(GrouError::Config(format!(
            "{n_vertices} vertices need {n_pairs} pair series, path has {}",
            universe.k()
        )));
    }
    if cfg.n_candidates == 0 || cfg.retain == 0 {
        return Err(GrouError::Config("n_candidates and retain must be positive".into()));
    }
    let graphs: Vec<(u64, EdgeGraph)> = (0..cfg.n_candidates as u64)
        .map(|c| {
            let seed = child_seed(cfg.seed, c);
            random_er_graph(n_vertices, cfg.edge_prob, seed).map(|g| (seed, g))
        })
        .collect::<Result<_>>()?;

    let screened: Vec<Option<ScreenEntry>> = graphs
        .par_iter()
        .enumerate()
        .map(|(id, (seed, g))| {
            if g.k() == 0 {
                return Ok(None);
            }
            let sub = universe.select_columns(&edge_columns(g)?)?;
            match validation_fit(&sub, g, &cfg.screen_shape, &cfg.selection) {
                Ok((dir_acc, _)) => Ok(Some(ScreenEntry {
                    graph_id: id,
                    graph_seed: *seed,
                    n_edges: g.k(),
                    dir_acc,
                })),
                Err(e) => {
                    warn!("screening: skipping graph {id}: {e}");
                    Ok(None)
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut screening: Vec<ScreenEntry> = screened.into_iter().flatten().collect();
    screening.sort_by(|a, b| b.dir_acc.total_cmp(&a.dir_acc).then(a.graph_id.cmp(&b.graph_id)));
    if screening.is_empty() {
        return Err(GrouError::Estimation("no candidate graph could be screened".into()));
    }

    let retained = &screening[..cfg.retain.min(screening.len())];
    let per_graph: Vec<Option<Candidate>> = retained
        .par_iter()
        .map(|entry| {
            let g = &graphs[entry.graph_id].1;
            let sub = universe.select_columns(&edge_columns(g)?)?;
            match select_model_for(
                &sub,
                g,
                entry.graph_id,
                Some(entry.graph_seed),
                &cfg.shapes,
                &cfg.selection,
            ) {
                Ok(out) => Ok(Some(out.chosen)),
                Err(e) => {
                    warn!("search: no shape selected for graph {}: {e}", entry.graph_id);
                    Ok(None)
                }
            }
        })
        .collect::<Result<_>>()?;
    // retained order breaks DirAcc ties
    let pairs: Vec<Candidate> = per_graph.into_iter().flatten().collect();
    let chosen = pairs
        .iter()
        .fold(None::<&Candidate>, |best, c| match best {
            Some(b) if b.dir_acc >= c.dir_acc => Some(b),
            _ => Some(c),
        })
        .cloned()
        .ok_or_else(|| GrouError::Estimation("model selection failed on every retained graph".into()))?;
    let mut ranked = pairs;
    ranked.sort_by(|a, b| b.dir_acc.total_cmp(&a.dir_acc));
    Ok(SearchOutcome {
        screening,
        outcome: SelectionOutcome { ranked, chosen },
    })
}

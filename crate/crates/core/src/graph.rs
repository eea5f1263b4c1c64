//! Edge-indexed network structure.
//!
//! Edges are labelled `e_1..e_K` by their position in [`EdgeGraph::edges`];
//! every K×K matrix in the crate is indexed in that order.

use std::collections::{BTreeSet, HashSet};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GrouError, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct EdgeGraph {
    n_vertices: usize,
    directed: bool,
    edges: Vec<(usize, usize)>,
    incident: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n_vertices: usize,
    #[serde(default)]
    directed: bool,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<RawGraph> for EdgeGraph {
    type Error = GrouError;

    fn try_from(raw: RawGraph) -> Result<Self> {
        EdgeGraph::new(
            raw.n_vertices,
            raw.directed,
            raw.edges.into_iter().map(|[i, j]| (i, j)).collect(),
        )
    }
}

impl From<EdgeGraph> for RawGraph {
    fn from(g: EdgeGraph) -> Self {
        RawGraph {
            n_vertices: g.n_vertices,
            directed: g.directed,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

impl EdgeGraph {
    /// Builds a graph keeping the given edge order. Undirected edges are
    /// stored as `(min, max)`.
    pub fn new(n_vertices: usize, directed: bool, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n_vertices == 0 {
            return Err(GrouError::Config("graph needs at least one vertex".into()));
        }
        let mut seen = HashSet::new();
        let mut stored = Vec::with_capacity(edges.len());
        for (i, j) in edges {
            if i >= n_vertices || j >= n_vertices {
                return Err(GrouError::Config(format!(
                    "edge ({i}, {j}) references a vertex outside 0..{n_vertices}"
                )));
            }
            if i == j {
                return Err(GrouError::Config(format!("self-loop at vertex {i}")));
            }
            let e = if directed { (i, j) } else { (i.min(j), i.max(j)) };
            if !seen.insert(e) {
                return Err(GrouError::Config(format!("duplicate edge ({i}, {j})")));
            }
            stored.push(e);
        }
        let mut incident = vec![Vec::new(); n_vertices];
        for (idx, &(i, j)) in stored.iter().enumerate() {
            incident[i].push(idx);
            incident[j].push(idx);
        }
        Ok(EdgeGraph {
            n_vertices,
            directed,
            edges: stored,
            incident,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Number of edges `K`.
    pub fn k(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let e = if self.directed { (i, j) } else { (i.min(j), i.max(j)) };
        self.edges.iter().position(|&x| x == e)
    }

    /// Copy of the graph with edge `idx` removed; remaining edges keep their
    /// relative order.
    pub fn without_edge(&self, idx: usize) -> Result<Self> {
        if idx >= self.k() {
            return Err(GrouError::Index(format!("edge {idx} of {}", self.k())));
        }
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != idx)
            .map(|(_, &e)| e)
            .collect();
        EdgeGraph::new(self.n_vertices, self.directed, edges)
    }

    /// Edges sharing at least one endpoint with `edge`, excluding itself.
    fn first_stage(&self, edge: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.edges[edge];
        self.incident[i]
            .iter()
            .chain(self.incident[j].iter())
            .copied()
            .filter(move |&e| e != edge)
    }
}

/// Stage sets `N^(0..=max_stage)` of a reference edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborStages {
    pub reference_edge: usize,
    pub stages: Vec<BTreeSet<usize>>,
}

impl NeighborStages {
    pub fn stage(&self, r: usize) -> &BTreeSet<usize> {
        &self.stages[r]
    }
}

pub fn edge_neighbors(graph: &EdgeGraph, edge: usize, max_stage: usize) -> Result<NeighborStages> {
    if edge >= graph.k() {
        return Err(GrouError::Index(format!(
            "edge {edge} out of range for a graph with {} edges",
            graph.k()
        )));
    }
    let mut assigned: HashSet<usize> = HashSet::from([edge]);
    let mut stages = vec![BTreeSet::from([edge])];
    for _ in 1..=max_stage {
        let prev = stages.last().unwrap();
        let next: BTreeSet<usize> = prev
            .iter()
            .flat_map(|&e| graph.first_stage(e))
            .filter(|e| !assigned.contains(e))
            .collect();
        assigned.extend(next.iter().copied());
        stages.push(next);
    }
    Ok(NeighborStages {
        reference_edge: edge,
        stages,
    })
}

/// Weight assigned by a reference edge to its stage-r neighbours before row
/// normalisation.
pub trait EdgeWeighting {
    fn raw_weight(&self, graph: &EdgeGraph, reference: usize, neighbor: usize, stage: usize) -> f64;
}

/// `w = 1 / |N^(r)(e)|` after normalisation.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformWeights;

impl EdgeWeighting for UniformWeights {
    fn raw_weight(&self, _: &EdgeGraph, _: usize, _: usize, _: usize) -> f64 {
        1.0
    }
}

/// `W^(1)..W^(R)`; `stage(r)` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrices {
    k: usize,
    matrices: Vec<DMatrix<f64>>,
}

impl WeightMatrices {
    pub fn max_stage(&self) -> usize {
        self.matrices.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn stage(&self, r: usize) -> &DMatrix<f64> {
        assert!(r >= 1 && r <= self.matrices.len(), "stage {r} not available");
        &self.matrices[r - 1]
    }
}

pub fn weight_matrices(graph: &EdgeGraph, max_stage: usize) -> Result<WeightMatrices> {
    weight_matrices_with(graph, max_stage, &UniformWeights)
}

pub fn weight_matrices_with(graph: &EdgeGraph, max_stage: usize, scheme: &dyn EdgeWeighting) -> Result<WeightMatrices> {
    let k = graph.k();
    let mut matrices = vec![DMatrix::<f64>::zeros(k, k); max_stage];
    for a in 0..k {
        let nb = edge_neighbors(graph, a, max_stage)?;
        for r in 1..=max_stage {
            let members = nb.stage(r);
            if members.is_empty() {
                continue;
            }
            let raw: Vec<f64> = members.iter().map(|&b| scheme.raw_weight(graph, a, b, r)).collect();
            let total: f64 = raw.iter().sum();
            if !(total > 0.0) {
                return Err(GrouError::Config(format!(
                    "weights of edge {a} at stage {r} do not sum to a positive value"
                )));
            }
            for (&b, w) in members.iter().zip(raw) {
                matrices[r - 1][(a, b)] = w / total;
            }
        }
    }
    Ok(WeightMatrices { k, matrices })
}

/// Erdős–Rényi graph on `n_vertices`; undirected pairs are visited in
/// lexicographic order, which also fixes the edge labels.
pub fn random_er_graph(n_vertices: usize, edge_prob: f64, rng_seed: u64) -> Result<EdgeGraph> {
    if n_vertices < 2 {
        return Err(GrouError::Domain(format!(
            "random graph needs at least 2 vertices, got {n_vertices}"
        )));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(GrouError::Domain(format!(
            "edge probability {edge_prob} outside [0, 1]"
        )));
    }
    let mut rng = stream_rng(rng_seed, 0);
    let mut edges = Vec::new();
    for i in 0..n_vertices {
        for j in i + 1..n_vertices {
            if rng.random::<f64>() < edge_prob {
                edges.push((i, j));
            }
        }
    }
    EdgeGraph::new(n_vertices, false, edges)
}

/// Complete undirected graph with lexicographic edge order.
pub fn complete_graph(n_vertices: usize) -> Result<EdgeGraph> {
    let edges = (0..n_vertices)
        .flat_map(|i| (i + 1..n_vertices).map(move |j| (i, j)))
        .collect();
    EdgeGraph::new(n_vertices, false, edges)
}

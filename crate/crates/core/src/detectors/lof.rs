//! Local Outlier Factor and k-th-neighbor distance.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::neighbors::NeighborGraph;
use super::scores::AnomalyScores;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LofParams {
    pub k_neighbors: usize,
    /// Floor on reachability distance so coincident points stay finite.
    pub min_reach: f64,
}

impl Default for LofParams {
    fn default() -> Self {
        Self { k_neighbors: 20, min_reach: 1e-12 }
    }
}

impl LofParams {
    pub fn record(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("k_neighbors".into(), self.k_neighbors.to_string()),
            ("min_reach".into(), self.min_reach.to_string()),
        ])
    }
}

/// LOF per Breunig et al.: ratio of the neighbors' mean local reachability
/// density to the point's own. Around 1 inside uniform regions.
pub fn lof_scores(z: ArrayView2<f64>, params: &LofParams) -> Result<AnomalyScores> {
    if !(params.min_reach >= 0.0) {
        return Err(Error::InvalidParams("min_reach must be non-negative".into()));
    }
    let g = NeighborGraph::build(z, params.k_neighbors)?;
    let n = g.neighbors.len();
    let mut lrd = vec![0.0; n];
    for p in 0..n {
        let nb = &g.neighbors[p];
        let total: f64 = nb
            .iter()
            .map(|&(o, d)| d.max(g.k_distance[o]).max(params.min_reach))
            .sum();
        let mean = total / nb.len() as f64;
        if mean == 0.0 {
            return Err(Error::DuplicateDegeneracy { index: p });
        }
        lrd[p] = 1.0 / mean;
    }
    let scores = (0..n)
        .map(|p| {
            let nb = &g.neighbors[p];
            nb.iter().map(|&(o, _)| lrd[o]).sum::<f64>() / (nb.len() as f64 * lrd[p])
        })
        .collect();
    AnomalyScores::new("lof", scores, params.record())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k_neighbors: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k_neighbors: 5 }
    }
}

/// Distance to the k-th nearest other row.
pub fn knn_scores(z: ArrayView2<f64>, params: &KnnParams) -> Result<AnomalyScores> {
    let g = NeighborGraph::build(z, params.k_neighbors)?;
    let record = BTreeMap::from([("k_neighbors".into(), params.k_neighbors.to_string())]);
    AnomalyScores::new("knn", g.k_distance, record)
}

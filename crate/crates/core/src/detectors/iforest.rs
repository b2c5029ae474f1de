//! Isolation Forest.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scores::AnomalyScores;
use crate::error::{Error, Result};
use crate::rng;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IForestParams {
    pub n_trees: usize,
    pub subsample_size: usize,
    pub seed: u64,
    /// Grow trees on the `subspace_size` features of highest kurtosis.
    pub use_kurtosis_subspace: bool,
    pub subspace_size: usize,
}

impl Default for IForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample_size: 256,
            seed: 0,
            use_kurtosis_subspace: false,
            subspace_size: 10,
        }
    }
}

impl IForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParams("n_trees must be at least 1".into()));
        }
        if self.subsample_size < 2 {
            return Err(Error::InvalidParams("subsample_size must be at least 2".into()));
        }
        if self.use_kurtosis_subspace && self.subspace_size == 0 {
            return Err(Error::InvalidParams("subspace_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn record(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("n_trees".into(), self.n_trees.to_string()),
            ("subsample_size".into(), self.subsample_size.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("use_kurtosis_subspace".into(), self.use_kurtosis_subspace.to_string()),
            ("subspace_size".into(), self.subspace_size.to_string()),
        ])
    }
}

/// Average path length of an unsuccessful BST search among `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

/// `2^(-E[h]/c(psi))`
pub fn score_from_path_length(mean_path: f64, psi: usize) -> f64 {
    2f64.powf(-mean_path / average_path_length(psi))
}

/// Excess kurtosis per column; constant columns get `-inf`.
pub fn column_kurtosis(z: ArrayView2<f64>) -> Vec<f64> {
    z.axis_iter(Axis(1))
        .map(|col| {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let m2 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let m4 = col.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
            if m2 > 0.0 {
                m4 / (m2 * m2) - 3.0
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// Columns with the highest kurtosis, ties to the lower index, in ascending
/// column order.
pub fn kurtosis_subspace(z: ArrayView2<f64>, size: usize) -> Vec<usize> {
    let k = column_kurtosis(z);
    let mut order: Vec<usize> = (0..k.len()).collect();
    order.sort_by(|&a, &b| k[b].total_cmp(&k[a]).then(a.cmp(&b)));
    order.truncate(size.min(k.len()));
    order.sort_unstable();
    order
}

#[derive(Debug, Clone)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn grow(rows: &[Vec<f64>], sample: Vec<usize>, height_limit: usize, rng: &mut rng::Rng) -> Self {
        let mut tree = Tree { nodes: Vec::new() };
        tree.build(rows, sample, 0, height_limit, rng);
        tree
    }

    fn build(&mut self, rows: &[Vec<f64>], idx: Vec<usize>, depth: usize, limit: usize, rng: &mut rng::Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: idx.len() });
        if depth >= limit || idx.len() <= 1 {
            return id;
        }
        let dim = rows[idx[0]].len();
        let ranges: Vec<(usize, f64, f64)> = (0..dim)
            .filter_map(|f| {
                let (lo, hi) = idx
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(rows[i][f]), hi.max(rows[i][f])));
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let threshold = rng.random_range(lo..hi);
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| rows[i][feature] < threshold);
        let left = self.build(rows, l, depth + 1, limit, rng);
        let right = self.build(rows, r, depth + 1, limit, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Split { feature, threshold, left, right } => {
                    node = if x[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    features: Vec<usize>,
    pub psi: usize,
}

impl IsolationForest {
    pub fn fit(z: ArrayView2<f64>, params: &IForestParams) -> Result<Self> {
        params.validate()?;
        let n = z.nrows();
        if n < 2 {
            return Err(Error::TooFewPoints { n, required: 2 });
        }
        let features: Vec<usize> = if params.use_kurtosis_subspace {
            kurtosis_subspace(z, params.subspace_size)
        } else {
            (0..z.ncols()).collect()
        };
        let rows = project(z, &features);
        let psi = params.subsample_size.min(n);
        let limit = (psi as f64).log2().ceil() as usize;
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::stream(params.seed, t as u64);
                let picked = sample(&mut rng, n, psi).into_vec();
                Tree::grow(&rows, picked, limit, &mut rng)
            })
            .collect();
        Ok(Self { trees, features, psi })
    }

    /// Mean path length per row, summed over trees in tree order.
    pub fn mean_path_lengths(&self, z: ArrayView2<f64>) -> Vec<f64> {
        let rows = project(z, &self.features);
        let per_tree: Vec<Vec<f64>> = self
            .trees
            .par_iter()
            .map(|t| rows.iter().map(|x| t.path_length(x)).collect())
            .collect();
        let mut total = vec![0.0; rows.len()];
        for lengths in &per_tree {
            for (acc, h) in total.iter_mut().zip(lengths) {
                *acc += h;
            }
        }
        let count = self.trees.len() as f64;
        total.into_iter().map(|h| h / count).collect()
    }

    pub fn score(&self, z: ArrayView2<f64>) -> Vec<f64> {
        self.mean_path_lengths(z)
            .into_iter()
            .map(|h| score_from_path_length(h, self.psi))
            .collect()
    }
}

fn project(z: ArrayView2<f64>, features: &[usize]) -> Vec<Vec<f64>> {
    let sub: Array2<f64> = z.select(Axis(1), features);
    sub.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn iforest_scores(z: ArrayView2<f64>, params: &IForestParams) -> Result<AnomalyScores> {
    let forest = IsolationForest::fit(z, params)?;
    AnomalyScores::new("iforest", forest.score(z), params.record())
}

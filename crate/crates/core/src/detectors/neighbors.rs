//! Exact k-nearest-neighbor search with tie-inclusive neighborhoods.

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// For each point, every other point within its k-distance, sorted by
/// (distance, index). A neighborhood holds more than `k` members when there
/// are ties at the k-distance.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    pub k: usize,
    pub neighbors: Vec<Vec<(usize, f64)>>,
    pub k_distance: Vec<f64>,
}

pub(crate) fn contiguous_rows(z: ArrayView2<f64>) -> Vec<Vec<f64>> {
    z.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl NeighborGraph {
    pub fn build(z: ArrayView2<f64>, k: usize) -> Result<Self> {
        let n = z.nrows();
        if k == 0 {
            return Err(Error::InvalidParams("k_neighbors must be at least 1".into()));
        }
        if n <= k {
            return Err(Error::TooFewPoints { n, required: k + 1 });
        }
        let rows = contiguous_rows(z);
        let per_point: Vec<(Vec<(usize, f64)>, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut d: Vec<(usize, f64)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (j, euclidean(&rows[i], &rows[j])))
                    .collect();
                let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
                d.select_nth_unstable_by(k - 1, cmp);
                let kd = d[k - 1].1;
                let mut nb: Vec<(usize, f64)> = d.into_iter().filter(|&(_, dist)| dist <= kd).collect();
                nb.sort_by(cmp);
                (nb, kd)
            })
            .collect();
        let (neighbors, k_distance) = per_point.into_iter().unzip();
        Ok(Self { k, neighbors, k_distance })
    }
}

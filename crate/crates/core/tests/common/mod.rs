//! Brute-force reference implementations and fixtures shared by the
//! integration and acceptance targets.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

/// MNIST directory: `PEGASUS_DATA_DIR` or `data/mnist` under the repo root,
/// if the training files are present.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("PEGASUS_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| repo_root().join("data/mnist"));
    dir.join("train-images-idx3-ubyte").exists().then_some(dir)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// LOF straight from the definition: k-distance, tie-inclusive
/// neighbourhoods, reachability distance, local reachability density.
pub fn lof_brute_force(pts: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = pts.len();
    let k_distance = |p: usize| {
        let mut d: Vec<f64> = (0..n).filter(|&o| o != p).map(|o| dist(&pts[p], &pts[o])).collect();
        d.sort_by(f64::total_cmp);
        d[k - 1]
    };
    let kd: Vec<f64> = (0..n).map(k_distance).collect();
    let neighbours = |p: usize| -> Vec<usize> { (0..n).filter(|&o| o != p && dist(&pts[p], &pts[o]) <= kd[p]).collect() };
    let lrd: Vec<f64> = (0..n)
        .map(|p| {
            let nb = neighbours(p);
            nb.len() as f64 / nb.iter().map(|&o| kd[o].max(dist(&pts[p], &pts[o]))).sum::<f64>()
        })
        .collect();
    (0..n)
        .map(|p| {
            let nb = neighbours(p);
            nb.iter().map(|&o| lrd[o]).sum::<f64>() / (nb.len() as f64 * lrd[p])
        })
        .collect()
}

fn subsets(n: usize, r: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == r {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        if n - i < r - cur.len() {
            break;
        }
        cur.push(i);
        subsets(n, r, i + 1, cur, out);
        cur.pop();
    }
}

/// Smallest determinant of the maximum-likelihood covariance over every
/// `h`-subset of the rows.
pub fn mcd_min_determinant(pts: &[Vec<f64>], h: usize) -> f64 {
    let p = pts[0].len();
    let mut all = Vec::new();
    subsets(pts.len(), h, 0, &mut Vec::new(), &mut all);
    all.iter()
        .map(|s| {
            let mean: Vec<f64> = (0..p).map(|j| s.iter().map(|&i| pts[i][j]).sum::<f64>() / h as f64).collect();
            DMatrix::from_fn(p, p, |a, b| {
                s.iter().map(|&i| (pts[i][a] - mean[a]) * (pts[i][b] - mean[b])).sum::<f64>() / h as f64
            })
            .determinant()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Euclidean projection onto `{a : 0 <= a_i <= 1, sum a = s}` by bisection
/// on the shift.
fn project_capped_simplex(y: &[f64], s: f64) -> Vec<f64> {
    let mut lo = y.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if y.iter().map(|v| (v - mid).clamp(0.0, 1.0)).sum::<f64>() > s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    y.iter().map(|v| (v - mid).clamp(0.0, 1.0)).collect()
}

/// One-class SVM dual `min 1/2 a'Ka` over the capped simplex, by projected
/// gradient with a dense RBF kernel.
pub fn ocsvm_dual_projected_gradient(pts: &[Vec<f64>], nu: f64, gamma: f64, iterations: usize) -> Vec<f64> {
    let n = pts.len();
    let k: Vec<Vec<f64>> = pts
        .iter()
        .map(|a| pts.iter().map(|b| (-gamma * dist(a, b).powi(2)).exp()).collect())
        .collect();
    let total = nu * n as f64;
    let mut a = project_capped_simplex(&vec![nu; n], total);
    let step = 1.0 / n as f64;
    for _ in 0..iterations {
        let y: Vec<f64> = (0..n)
            .map(|i| a[i] - step * (0..n).map(|j| k[i][j] * a[j]).sum::<f64>())
            .collect();
        a = project_capped_simplex(&y, total);
    }
    a
}

//! Elliptic envelope: squared Mahalanobis distance to a FastMCD robust
//! location and scatter.
//!
//! FastMCD after Rousseeuw and Van Driessen. Starts are random `(M+1)`-point
//! subsets, or every `h`- or `(M+1)`-subset when there are few enough. Each
//! start gets `n_c_steps` concentration steps; the ten best are iterated to
//! convergence. Above 600 rows the starts run on disjoint subsamples, are
//! pooled on their union, and only then refined on the full data.
//!
//! When `h` rows lie on a lower-dimensional affine subspace the MCD is an
//! exact fit with zero determinant. The search stops there and distances use
//! the pseudo-inverse of the singular scatter. Rank-deficient input as a
//! whole is still an error.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::scores::AnomalyScores;
use crate::error::{Error, Result};
use crate::rng;

const KEEP_BEST: usize = 10;
const MAX_C_STEPS: usize = 500;
const LARGE_N: usize = 600;
const MAX_GROUPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EeParams {
    /// Fraction `h/n` of rows in the MCD support; `None` uses
    /// `floor((n + M + 1) / 2) / n`.
    pub support_fraction: Option<f64>,
    pub n_initial_subsets: usize,
    /// Concentration steps applied to every start before the best are
    /// iterated to convergence.
    pub n_c_steps: usize,
    pub seed: u64,
}

impl Default for EeParams {
    fn default() -> Self {
        Self { support_fraction: None, n_initial_subsets: 500, n_c_steps: 2, seed: 0 }
    }
}

impl EeParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.support_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParams(format!("support_fraction {f} must lie in (0, 1]")));
            }
        }
        if self.n_initial_subsets == 0 || self.n_c_steps == 0 {
            return Err(Error::InvalidParams("n_initial_subsets and n_c_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn support_size(&self, n: usize, dim: usize) -> usize {
        match self.support_fraction {
            None => (n + dim + 1) / 2,
            Some(f) => ((f * n as f64) + 1e-9).floor() as usize,
        }
    }

    pub fn record(&self) -> BTreeMap<String, String> {
        let fraction = self.support_fraction.map_or("auto".to_string(), |f| f.to_string());
        BTreeMap::from([
            ("support_fraction".into(), fraction),
            ("n_initial_subsets".into(), self.n_initial_subsets.to_string()),
            ("n_c_steps".into(), self.n_c_steps.to_string()),
            ("seed".into(), self.seed.to_string()),
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McdFit {
    pub location: Vec<f64>,
    /// Consistency-corrected scatter.
    pub covariance: Array2<f64>,
    pub raw_covariance: Array2<f64>,
    pub raw_log_determinant: f64,
    /// Sorted row indices of the raw MCD support.
    pub support: Vec<usize>,
    /// Rank of the raw scatter; below the dimension for an exact fit, where
    /// the log-determinant is `-inf`.
    pub support_rank: usize,
    pub correction: f64,
}

#[derive(Clone)]
struct Estimate {
    mu: DVector<f64>,
    cov: DMatrix<f64>,
    /// `L^-1` for a regular scatter, `Lambda^-1/2 U^T` over the non-null
    /// eigenvectors for an exact fit.
    whiten: DMatrix<f64>,
    rank: usize,
    logdet: f64,
}

#[derive(Clone)]
struct Candidate {
    support: Vec<usize>,
    est: Estimate,
}

/// Relative eigenvalue (or squared Cholesky pivot) below which a scatter
/// matrix counts as singular.
const RANK_TOLERANCE: f64 = 1e-12;

fn estimate_from(mu: DVector<f64>, cov: DMatrix<f64>) -> Option<Estimate> {
    let scale = cov.diagonal().max();
    if !(scale > 0.0) {
        return None;
    }
    if let Some(chol) = cov.clone().cholesky() {
        let l = chol.l();
        if l.diagonal().iter().all(|&v| v * v > RANK_TOLERANCE * scale) {
            let logdet = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let whiten = l.solve_lower_triangular(&DMatrix::identity(cov.nrows(), cov.nrows()))?;
            let rank = cov.nrows();
            return Some(Estimate { mu, cov, whiten, logdet, rank });
        }
    }
    // Exact fit: the support lies on a lower-dimensional affine subspace.
    // Its determinant is zero, the smallest attainable, and distances are
    // measured with the pseudo-inverse inside that subspace.
    let eig = cov.clone().symmetric_eigen();
    let top = eig.eigenvalues.max();
    let kept: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > RANK_TOLERANCE * top)
        .collect();
    if kept.is_empty() {
        return None;
    }
    let whiten = DMatrix::from_fn(kept.len(), cov.nrows(), |r, c| {
        eig.eigenvectors[(c, kept[r])] / eig.eigenvalues[kept[r]].sqrt()
    });
    Some(Estimate { mu, cov, whiten, logdet: f64::NEG_INFINITY, rank: kept.len() })
}

/// Maximum-likelihood mean and covariance of the columns `idx`.
fn estimate(x: &DMatrix<f64>, idx: &[usize]) -> Option<Estimate> {
    let mut sub = x.select_columns(idx);
    let mu = sub.column_mean();
    for mut c in sub.column_iter_mut() {
        c -= &mu;
    }
    let cov = (&sub * sub.transpose()) / idx.len() as f64;
    estimate_from(mu, cov)
}

fn mahalanobis_sq(x: &DMatrix<f64>, est: &Estimate) -> Vec<f64> {
    let mut xc = x.clone();
    for mut c in xc.column_iter_mut() {
        c -= &est.mu;
    }
    let y = &est.whiten * xc;
    y.column_iter().map(|c| c.norm_squared()).collect()
}

fn smallest(d: &[f64], h: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    order.truncate(h);
    order.sort_unstable();
    order
}

/// Concentration steps from `start` until the support stops changing, the
/// determinant stops falling, or `max_steps` is reached.
fn concentrate(x: &DMatrix<f64>, start: &Estimate, h: usize, max_steps: usize) -> Option<Candidate> {
    let mut support = smallest(&mahalanobis_sq(x, start), h);
    let mut est = estimate(x, &support)?;
    for _ in 1..max_steps {
        let next = smallest(&mahalanobis_sq(x, &est), h);
        if next == support {
            break;
        }
        match estimate(x, &next) {
            Some(e) if e.logdet < est.logdet => {
                support = next;
                est = e;
            }
            _ => break,
        }
    }
    Some(Candidate { support, est })
}

fn best(mut cands: Vec<Candidate>, keep: usize) -> Vec<Candidate> {
    // Stable sort keeps generation order among equal determinants.
    cands.sort_by(|a, b| a.est.logdet.total_cmp(&b.est.logdet));
    cands.truncate(keep);
    cands
}

fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r.min(n));
    (0..r).fold(1u128, |acc, i| (acc * (n - i) as u128 / (i + 1) as u128).min(u128::MAX / 1024))
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut c: Vec<usize> = (0..r).collect();
    loop {
        out.push(c.clone());
        let mut i = r;
        while i > 0 && c[i - 1] == n - r + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        c[i - 1] += 1;
        for j in i..r {
            c[j] = c[j - 1] + 1;
        }
    }
}

/// Starting subsets: all `h`-subsets if few enough, else all `(p+1)`-subsets
/// if few enough, else seeded random `(p+1)`-subsets.
fn starts(n: usize, p: usize, h: usize, count: usize, seed: u64, group: u64) -> Vec<Vec<usize>> {
    if binomial(n, h) <= count as u128 {
        return combinations(n, h);
    }
    if binomial(n, p + 1) <= count as u128 {
        return combinations(n, p + 1);
    }
    (0..count)
        .map(|s| {
            let mut r = rng::stream(seed, (group << 32) | s as u64);
            let mut v = rand::seq::index::sample(&mut r, n, p + 1).into_vec();
            v.sort_unstable();
            v
        })
        .collect()
}

fn search(x: &DMatrix<f64>, h: usize, count: usize, steps: usize, seed: u64, group: u64) -> Vec<Candidate> {
    let (p, n) = x.shape();
    let cands: Vec<Option<Candidate>> = starts(n, p, h, count, seed, group)
        .par_iter()
        .map(|s| estimate(x, s).and_then(|e| concentrate(x, &e, h, steps)))
        .collect();
    log::debug!("group {group}: {} exact fits among {} starts", exact_fits(&cands), cands.len());
    best(cands.into_iter().flatten().collect(), KEEP_BEST)
}

fn exact_fits(cands: &[Option<Candidate>]) -> usize {
    cands.iter().flatten().filter(|c| c.est.logdet == f64::NEG_INFINITY).count()
}

fn refine(x: &DMatrix<f64>, from: &[Candidate], h: usize, steps: usize) -> Vec<Candidate> {
    let cands: Vec<Option<Candidate>> = from.par_iter().map(|c| concentrate(x, &c.est, h, steps)).collect();
    log::debug!("refine: {} exact fits among {} candidates", exact_fits(&cands), cands.len());
    best(cands.into_iter().flatten().collect(), KEEP_BEST)
}

fn columns(z: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(z.ncols(), z.nrows(), |r, c| z[[c, r]])
}

fn to_array(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn(m.shape(), |(i, j)| m[(i, j)])
}

pub fn fast_mcd(z: ArrayView2<f64>, params: &EeParams) -> Result<(McdFit, Vec<f64>)> {
    params.validate()?;
    let (n, p) = z.dim();
    if n <= p {
        return Err(Error::TooFewPoints { n, required: p + 1 });
    }
    let h = params.support_size(n, p).min(n);
    if h <= p {
        return Err(Error::TooFewPoints { n: h, required: p + 1 });
    }
    let x = columns(z);
    let all: Vec<usize> = (0..n).collect();
    if estimate(&x, &all).map_or(true, |e| e.rank < p) {
        return Err(Error::SingularCovariance);
    }

    let finalists = if n <= LARGE_N {
        search(&x, h, params.n_initial_subsets, params.n_c_steps, params.seed, 0)
    } else {
        let group_size = (3 * p).max(300);
        let groups = (n / group_size).clamp(1, MAX_GROUPS);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng::stream(params.seed, u64::MAX));
        perm.truncate(groups * group_size);
        let per_group = (params.n_initial_subsets / groups).max(1);
        let h_group = (group_size * h).div_ceil(n);
        let pooled: Vec<Candidate> = perm
            .chunks(group_size)
            .enumerate()
            .flat_map(|(g, idx)| {
                let xg = x.select_columns(idx);
                search(&xg, h_group, per_group, params.n_c_steps, params.seed, g as u64 + 1)
            })
            .collect();
        let merged = x.select_columns(&perm);
        let h_merged = (perm.len() * h).div_ceil(n);
        refine(&merged, &pooled, h_merged, params.n_c_steps)
    };
    let winner = refine(&x, &finalists, h, MAX_C_STEPS)
        .into_iter()
        .next()
        .ok_or(Error::SingularCovariance)?;

    let raw = mahalanobis_sq(&x, &winner.est);
    let mut sorted = raw.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let chi2 = ChiSquared::new(p as f64).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let correction = median / chi2.inverse_cdf(0.5);
    if !(correction > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let scores = raw.iter().map(|d| d / correction).collect();
    let fit = McdFit {
        location: winner.est.mu.iter().copied().collect(),
        covariance: to_array(&(&winner.est.cov * correction)),
        raw_covariance: to_array(&winner.est.cov),
        raw_log_determinant: winner.est.logdet,
        support: winner.support,
        support_rank: winner.est.rank,
        correction,
    };
    Ok((fit, scores))
}

pub fn ee_scores(z: ArrayView2<f64>, params: &EeParams) -> Result<AnomalyScores> {
    let (_, scores) = fast_mcd(z, params)?;
    AnomalyScores::new("ee", scores, params.record())
}

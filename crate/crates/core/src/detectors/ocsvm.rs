//! One-class SVM with an RBF kernel.
//!
//! Solves the nu-dual in the scaling used by LIBSVM,
//!
//! ```text
//! min 1/2 a^T K a   s.t.  0 <= a_i <= 1,  sum a_i = nu * n
//! ```
//!
//! by pairwise (SMO) updates with second-order working-set selection.
//! Kernel rows are computed on demand and kept in a bounded cache, so memory
//! stays well below the full `n x n` matrix.

use std::collections::{BTreeMap, HashMap};

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::neighbors::contiguous_rows;
use super::scores::AnomalyScores;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcsvmParams {
    pub nu: f64,
    /// `None` uses `1 / (M * mean per-feature variance)`.
    pub gamma: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub cache_mb: usize,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        Self { nu: 0.5, gamma: None, tolerance: 1e-6, max_iterations: 10_000_000, cache_mb: 256 }
    }
}

impl OcsvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidParams(format!("nu {} must lie in (0, 1]", self.nu)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidParams(format!("gamma {g} must be positive")));
            }
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidParams("tolerance and max_iterations must be positive".into()));
        }
        Ok(())
    }

    pub fn resolve_gamma(&self, z: ArrayView2<f64>) -> f64 {
        self.gamma.unwrap_or_else(|| {
            let (n, m) = z.dim();
            let mean_var = z
                .columns()
                .into_iter()
                .map(|c| {
                    let mu = c.sum() / n as f64;
                    c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64
                })
                .sum::<f64>()
                / m as f64;
            if mean_var > 0.0 {
                1.0 / (m as f64 * mean_var)
            } else {
                1.0
            }
        })
    }
}

struct KernelRows<'a> {
    rows: &'a [Vec<f64>],
    gamma: f64,
    cache: HashMap<usize, (Vec<f64>, u64)>,
    capacity: usize,
    clock: u64,
}

impl<'a> KernelRows<'a> {
    fn new(rows: &'a [Vec<f64>], gamma: f64, cache_mb: usize) -> Self {
        let n = rows.len().max(1);
        let capacity = ((cache_mb << 20) / (8 * n)).max(2);
        Self { rows, gamma, cache: HashMap::new(), capacity, clock: 0 }
    }

    fn value(&self, i: usize, j: usize) -> f64 {
        let d2: f64 = self.rows[i].iter().zip(&self.rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        (-self.gamma * d2).exp()
    }

    fn compute(&self, i: usize) -> Vec<f64> {
        (0..self.rows.len()).into_par_iter().map(|j| self.value(i, j)).collect()
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        let clock = self.clock;
        if !self.cache.contains_key(&i) {
            if self.cache.len() >= self.capacity {
                let oldest = *self.cache.iter().min_by_key(|(_, (_, t))| *t).map(|(k, _)| k).unwrap();
                self.cache.remove(&oldest);
            }
            let r = self.compute(i);
            self.cache.insert(i, (r, clock));
        }
        let entry = self.cache.get_mut(&i).unwrap();
        entry.1 = clock;
        &entry.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcsvmFit {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub iterations: usize,
    pub gap: f64,
    /// Decision values `sum_j a_j K(x_j, x_i) - rho` on the training rows.
    pub decision: Vec<f64>,
}

pub fn ocsvm_fit(z: ArrayView2<f64>, params: &OcsvmParams) -> Result<OcsvmFit> {
    params.validate()?;
    let n = z.nrows();
    if n < 2 {
        return Err(Error::TooFewPoints { n, required: 2 });
    }
    let gamma = params.resolve_gamma(z);
    let rows = contiguous_rows(z);
    let mut kernel = KernelRows::new(&rows, gamma, params.cache_mb);

    // Feasible start: the first floor(nu n) at the upper bound, remainder on
    // the next one.
    let total = params.nu * n as f64;
    let mut alpha = vec![0.0; n];
    let full = (total.floor() as usize).min(n);
    alpha[..full].iter_mut().for_each(|a| *a = 1.0);
    if full < n {
        alpha[full] = total - full as f64;
    }
    let mut grad = vec![0.0; n];
    for i in 0..n {
        if alpha[i] > 0.0 {
            let a = alpha[i];
            for (g, k) in grad.iter_mut().zip(kernel.row(i)) {
                *g += a * k;
            }
        }
    }

    let mut iterations = 0;
    let gap = loop {
        // i maximises -G over the "can increase" set, j is picked by
        // second-order gain from the "can decrease" set.
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            if alpha[t] < 1.0 && -grad[t] > gmax {
                gmax = -grad[t];
                i = t;
            }
            if alpha[t] > 0.0 && -grad[t] < gmin {
                gmin = -grad[t];
            }
        }
        let gap = gmax - gmin;
        if i == usize::MAX || gap < params.tolerance {
            break gap.max(0.0);
        }
        if iterations >= params.max_iterations {
            return Err(Error::SolverDidNotConverge { gap, iterations });
        }
        let qi: Vec<f64> = kernel.row(i).to_vec();
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 {
                let b = gmax + grad[t];
                if b > 0.0 {
                    let a = (qi[i] + 1.0 - 2.0 * qi[t]).max(1e-12);
                    let obj = -b * b / a;
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if j == usize::MAX {
            break gap;
        }
        let qj = kernel.row(j);
        let a = (qi[i] + qj[j] - 2.0 * qi[j]).max(1e-12);
        let b = grad[j] - grad[i];
        let step = (b / a).min(1.0 - alpha[i]).min(alpha[j]);
        alpha[i] += step;
        alpha[j] -= step;
        for t in 0..n {
            grad[t] += step * (qi[t] - qj[t]);
        }
        iterations += 1;
    };

    let rho = offset(&alpha, &grad);
    let decision = grad.iter().map(|g| g - rho).collect();
    Ok(OcsvmFit { alpha, rho, gamma, iterations, gap, decision })
}

/// Mean gradient over free multipliers, or the midpoint of the feasible
/// interval when every multiplier sits at a bound.
fn offset(alpha: &[f64], grad: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for (&a, &g) in alpha.iter().zip(grad) {
        if a >= 1.0 {
            lb = lb.max(g);
        } else if a <= 0.0 {
            ub = ub.min(g);
        } else {
            sum += g;
            free += 1;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        0.5 * (ub + lb)
    }
}

/// Negated decision values, so points outside the learned boundary score
/// positive.
pub fn ocsvm_scores(z: ArrayView2<f64>, params: &OcsvmParams) -> Result<AnomalyScores> {
    let fit = ocsvm_fit(z, params)?;
    let mut record = BTreeMap::from([
        ("nu".into(), params.nu.to_string()),
        ("gamma".into(), fit.gamma.to_string()),
        ("tolerance".into(), params.tolerance.to_string()),
        ("max_iterations".into(), params.max_iterations.to_string()),
    ]);
    record.insert("iterations".into(), fit.iterations.to_string());
    AnomalyScores::new("ocsvm", fit.decision.iter().map(|d| -d).collect(), record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    /// Euclidean projection onto {0 <= a <= 1, sum a = s} by bisection on the
    /// shift.
    fn project(y: &[f64], s: f64) -> Vec<f64> {
        let mut lo = y.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
        let mut hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let total: f64 = y.iter().map(|v| (v - mid).clamp(0.0, 1.0)).sum();
            if total > s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mid = 0.5 * (lo + hi);
        y.iter().map(|v| (v - mid).clamp(0.0, 1.0)).collect()
    }

    /// Projected gradient on the dual with a dense kernel.
    fn dual_oracle(pts: &[Vec<f64>], nu: f64, gamma: f64) -> Vec<f64> {
        let n = pts.len();
        let k: Vec<Vec<f64>> = pts
            .iter()
            .map(|a| pts.iter().map(|b| (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()).collect())
            .collect();
        let step = 1.0 / n as f64;
        let mut a = project(&vec![nu; n], nu * n as f64);
        for _ in 0..200_000 {
            let g: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[i][j] * a[j]).sum()).collect();
            let y: Vec<f64> = a.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
            a = project(&y, nu * n as f64);
        }
        a
    }

    #[test]
    fn four_points_match_dense_oracle() {
        let z = array![[0.0, 0.0], [1.0, 0.2], [0.3, 1.1], [2.5, 2.0]];
        let params = OcsvmParams { nu: 0.5, gamma: Some(1.0), tolerance: 1e-12, ..Default::default() };
        let fit = ocsvm_fit(z.view(), &params).unwrap();
        let rows: Vec<Vec<f64>> = z.rows().into_iter().map(|r| r.to_vec()).collect();
        let oracle = dual_oracle(&rows, 0.5, 1.0);
        for (a, b) in fit.alpha.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", fit.alpha, oracle);
        }
        assert!((fit.alpha.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_score_equally() {
        let z = Array2::from_elem((6, 3), 0.4);
        let s = ocsvm_scores(z.view(), &OcsvmParams { gamma: Some(1.0), ..Default::default() }).unwrap();
        assert!(s.scores.iter().all(|&v| v == s.scores[0]));
        // Zero variance falls back to gamma = 1.
        assert!(ocsvm_scores(z.view(), &OcsvmParams::default()).is_ok());
    }

    #[test]
    fn nu_bounds_the_outlier_fraction() {
        let mut r = rng::seeded(8);
        let z = Array2::from_shape_fn((300, 2), |_| StandardNormal.sample(&mut r));
        for nu in [0.05, 0.2, 0.5] {
            let s = ocsvm_scores(z.view(), &OcsvmParams { nu, ..Default::default() }).unwrap();
            let positive = s.scores.iter().filter(|&&v| v > 0.0).count() as f64 / 300.0;
            assert!(positive <= nu + 2.0 / 300.0, "nu {nu}: {positive}");
        }
    }

    #[test]
    fn far_point_scores_highest() {
        let mut r = rng::seeded(6);
        let mut z = Array2::from_shape_fn((200, 3), |_| StandardNormal.sample(&mut r));
        z.row_mut(17).fill(6.0);
        let s = ocsvm_scores(z.view(), &OcsvmParams { nu: 0.1, ..Default::default() }).unwrap();
        assert_eq!((0..200).max_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b])), Some(17));
    }

    #[test]
    fn reports_non_convergence() {
        let mut r = rng::seeded(7);
        let z = Array2::from_shape_fn((50, 2), |_| StandardNormal.sample(&mut r));
        let params = OcsvmParams { max_iterations: 1, tolerance: 1e-12, ..Default::default() };
        assert!(matches!(ocsvm_fit(z.view(), &params), Err(Error::SolverDidNotConverge { iterations: 1, .. })));
        assert!(ocsvm_fit(z.view(), &OcsvmParams { nu: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn small_cache_gives_identical_result() {
        let mut r = rng::seeded(9);
        let z = Array2::from_shape_fn((120, 2), |_| StandardNormal.sample(&mut r));
        let a = ocsvm_fit(z.view(), &OcsvmParams::default()).unwrap();
        let b = ocsvm_fit(z.view(), &OcsvmParams { cache_mb: 0, ..Default::default() }).unwrap();
        assert_eq!(a.alpha, b.alpha);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn dual_matches_oracle(pts in (4usize..=8).prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 2), n)), nu in 0.2f64..0.9) {
            let n = pts.len();
            // Well-separated points keep the kernel well conditioned for the oracle.
            for a in 0..n {
                for b in 0..a {
                    prop_assume!(((pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)).sqrt() > 0.3);
                }
            }
            let z = Array2::from_shape_fn((n, 2), |(i, j)| pts[i][j]);
            let params = OcsvmParams { nu, gamma: Some(0.5), tolerance: 1e-12, ..Default::default() };
            let fit = ocsvm_fit(z.view(), &params).unwrap();
            let oracle = dual_oracle(&pts, nu, 0.5);
            for (a, b) in fit.alpha.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", fit.alpha, oracle);
            }
        }
    }
}

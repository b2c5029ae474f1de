//! Principal component analysis.
//!
//! The right singular vectors of the centered data matrix are the
//! eigenvectors of its scatter matrix `Xc^T Xc`, and the singular values are
//! the square roots of the eigenvalues. We form the `D x D` scatter with one
//! GEMM and hand it to a symmetric eigensolver, which is exact up to rounding
//! and deterministic.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTarget {
    /// Keep exactly this many components.
    Latent(usize),
    /// Keep the fewest components whose cumulative explained variance
    /// reaches this fraction.
    Variance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `M x D`, orthonormal rows ordered by decreasing singular value.
    pub components: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub explained_variance_ratio: Array1<f64>,
    /// Number of rows the model was fitted on.
    pub n_samples: usize,
}

/// Spectrum of the full decomposition, kept so callers can truncate or
/// inspect cumulative variance without refitting.
#[derive(Debug, Clone)]
pub struct PcaSpectrum {
    pub mean: Array1<f64>,
    pub vectors: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub total_variance: f64,
    pub n_samples: usize,
}

impl PcaSpectrum {
    pub fn compute(x: ArrayView2<f64>) -> Result<Self> {
        let (n, d) = x.dim();
        if n < 2 {
            return Err(Error::DegenerateData(format!("PCA needs at least 2 rows, got {n}")));
        }
        let mean = x.mean_axis(Axis(0)).expect("n >= 2");
        let centered = &x - &mean;
        let scatter = centered.t().dot(&centered);
        let total_variance: f64 = scatter.diag().sum();
        if !(total_variance > 0.0) {
            return Err(Error::DegenerateData("zero total variance".into()));
        }

        let sym = DMatrix::from_fn(d, d, |i, j| 0.5 * (scatter[[i, j]] + scatter[[j, i]]));
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .expect("finite eigenvalues")
                .then(a.cmp(&b))
        });

        let mut vectors = Array2::zeros((d, d));
        let mut eigenvalues = Array1::zeros(d);
        for (row, &k) in order.iter().enumerate() {
            eigenvalues[row] = eig.eigenvalues[k].max(0.0);
            let col = eig.eigenvectors.column(k);
            // Sign convention: the largest-magnitude entry is positive.
            let mut pivot = 0;
            for j in 1..d {
                if col[j].abs() > col[pivot].abs() {
                    pivot = j;
                }
            }
            let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..d {
                vectors[[row, j]] = sign * col[j];
            }
        }
        Ok(Self {
            mean,
            vectors,
            eigenvalues,
            total_variance,
            n_samples: n,
        })
    }

    pub fn explained_variance_ratio(&self) -> Array1<f64> {
        self.eigenvalues.mapv(|e| e / self.total_variance)
    }

    /// Smallest `M` whose cumulative explained variance reaches `fraction`.
    pub fn components_for_variance(&self, fraction: f64) -> usize {
        let ratio = self.explained_variance_ratio();
        let mut cumulative = 0.0;
        for (m, r) in ratio.iter().enumerate() {
            cumulative += r;
            if cumulative >= fraction - 1e-12 {
                return m + 1;
            }
        }
        ratio.len()
    }

    pub fn model(&self, m: usize) -> PcaModel {
        let ratio = self.explained_variance_ratio();
        PcaModel {
            mean: self.mean.clone(),
            components: self.vectors.slice(ndarray::s![..m, ..]).to_owned(),
            singular_values: self.eigenvalues.slice(ndarray::s![..m]).mapv(f64::sqrt),
            explained_variance_ratio: ratio.slice(ndarray::s![..m]).to_owned(),
            n_samples: self.n_samples,
        }
    }
}

pub fn pca_fit(x: ArrayView2<f64>, target: PcaTarget) -> Result<PcaModel> {
    let (n, d) = x.dim();
    match target {
        PcaTarget::Latent(m) if m == 0 || m > n.min(d) => {
            return Err(Error::InvalidTarget(format!(
                "latent dimension {m} must lie in 1..={}",
                n.min(d)
            )))
        }
        PcaTarget::Variance(v) if !(v > 0.0 && v <= 1.0) => {
            return Err(Error::InvalidTarget(format!("variance fraction {v} must lie in (0, 1]")))
        }
        _ => {}
    }
    let spectrum = PcaSpectrum::compute(x)?;
    let m = match target {
        PcaTarget::Latent(m) => m,
        PcaTarget::Variance(v) => spectrum.components_for_variance(v).min(n.min(d)),
    };
    Ok(spectrum.model(m))
}

impl PcaModel {
    pub fn latent_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    /// The leading `m` components of this model.
    pub fn truncate(&self, m: usize) -> Result<PcaModel> {
        if m == 0 || m > self.latent_dim() {
            return Err(Error::InvalidTarget(format!(
                "cannot truncate {} components to {m}",
                self.latent_dim()
            )));
        }
        Ok(PcaModel {
            mean: self.mean.clone(),
            components: self.components.slice(ndarray::s![..m, ..]).to_owned(),
            singular_values: self.singular_values.slice(ndarray::s![..m]).to_owned(),
            explained_variance_ratio: self.explained_variance_ratio.slice(ndarray::s![..m]).to_owned(),
            n_samples: self.n_samples,
        })
    }

    pub fn encode(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean).dot(&self.components.t())
    }

    pub fn decode(&self, z: ArrayView2<f64>) -> Array2<f64> {
        z.dot(&self.components) + &self.mean
    }

    pub fn cumulative_explained_variance(&self) -> f64 {
        self.explained_variance_ratio.sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Array2<f64> {
        array![[-1.0, -1.0], [1.0, 1.0], [0.0, 1.0], [0.0, -1.0]]
    }

    #[test]
    fn toy_projection_matches_closed_form() {
        // Scatter of the (already centered) toy set is [[2, 2], [2, 4]].
        // Eigenvalues 3 +- sqrt(5); leading eigenvector (2, 1 + sqrt 5), normalized.
        let model = pca_fit(toy().view(), PcaTarget::Latent(1)).unwrap();
        let s5 = 5f64.sqrt();
        let norm = (4.0 + (1.0 + s5).powi(2)).sqrt();
        let v = [2.0 / norm, (1.0 + s5) / norm];
        assert!((model.components[[0, 0]] - v[0]).abs() < 1e-12);
        assert!((model.components[[0, 1]] - v[1]).abs() < 1e-12);
        assert!((model.singular_values[0] - (3.0 + s5).sqrt()).abs() < 1e-12);
        assert!((model.explained_variance_ratio[0] - (3.0 + s5) / 6.0).abs() < 1e-12);
        let z = model.encode(toy().view());
        for (i, row) in toy().rows().into_iter().enumerate() {
            let expect = row[0] * v[0] + row[1] * v[1];
            assert!((z[[i, 0]] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_encodes_to_zero_and_zero_decodes_to_mean() {
        let x = array![[1.0, 2.0, 0.5], [3.0, 1.0, 0.0], [0.0, 0.0, 1.0], [2.0, 5.0, 2.0]];
        let model = pca_fit(x.view(), PcaTarget::Latent(2)).unwrap();
        let mean = model.mean.clone().insert_axis(Axis(0));
        let z = model.encode(mean.view());
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let back = model.decode(Array2::zeros((1, 2)).view());
        assert!((&back - &mean).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn full_rank_is_lossless() {
        let x = array![[1.0, 2.0, 0.5], [3.0, 1.0, 0.0], [0.0, 0.0, 1.0], [2.0, 5.0, 2.0]];
        let model = pca_fit(x.view(), PcaTarget::Latent(3)).unwrap();
        assert!((model.cumulative_explained_variance() - 1.0).abs() < 1e-12);
        let back = model.decode(model.encode(x.view()).view());
        assert!((&back - &x).iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn variance_target_picks_smallest_sufficient_m() {
        let model = pca_fit(toy().view(), PcaTarget::Variance(0.8)).unwrap();
        // (3 + sqrt 5) / 6 = 0.8727 >= 0.8
        assert_eq!(model.latent_dim(), 1);
        let model = pca_fit(toy().view(), PcaTarget::Variance(0.9)).unwrap();
        assert_eq!(model.latent_dim(), 2);
        let model = pca_fit(toy().view(), PcaTarget::Variance(1.0)).unwrap();
        assert_eq!(model.latent_dim(), 2);
    }

    #[test]
    fn invalid_targets() {
        assert!(matches!(pca_fit(toy().view(), PcaTarget::Latent(0)), Err(Error::InvalidTarget(_))));
        assert!(matches!(pca_fit(toy().view(), PcaTarget::Latent(3)), Err(Error::InvalidTarget(_))));
        assert!(matches!(pca_fit(toy().view(), PcaTarget::Variance(0.0)), Err(Error::InvalidTarget(_))));
        assert!(matches!(pca_fit(toy().view(), PcaTarget::Variance(1.5)), Err(Error::InvalidTarget(_))));
    }

    #[test]
    fn constant_data_is_degenerate() {
        let x = Array2::from_elem((5, 3), 0.25);
        assert!(matches!(pca_fit(x.view(), PcaTarget::Latent(1)), Err(Error::DegenerateData(_))));
        let one = Array2::from_elem((1, 3), 0.25);
        assert!(matches!(pca_fit(one.view(), PcaTarget::Latent(1)), Err(Error::DegenerateData(_))));
    }
}

//! Low-dimensional manifolds: fit, encode, decode and per-point
//! reconstruction error.

pub mod ae;
pub mod io;
pub mod pca;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ae::{ae_fit, AeConfig, AeModel};
pub use pca::{pca_fit, PcaModel, PcaSpectrum, PcaTarget};

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldModel {
    Pca(PcaModel),
    Ae(AeModel),
}

/// How to build a manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum ManifoldSpec {
    Pca { target: PcaTarget },
    Ae { config: AeConfig },
}

impl ManifoldSpec {
    pub fn fit(&self, x: ArrayView2<f64>) -> Result<ManifoldModel> {
        match self {
            ManifoldSpec::Pca { target } => pca_fit(x, *target).map(ManifoldModel::Pca),
            ManifoldSpec::Ae { config } => ae_fit(x, config).map(ManifoldModel::Ae),
        }
    }
}

impl ManifoldModel {
    pub fn kind(&self) -> &'static str {
        match self {
            ManifoldModel::Pca(_) => "pca",
            ManifoldModel::Ae(_) => "ae",
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            ManifoldModel::Pca(m) => m.latent_dim(),
            ManifoldModel::Ae(m) => m.latent_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ManifoldModel::Pca(m) => m.input_dim(),
            ManifoldModel::Ae(m) => m.input_dim(),
        }
    }

    /// Short provenance string, e.g. `pca-M84`.
    pub fn id(&self) -> String {
        format!("{}-M{}", self.kind(), self.latent_dim())
    }

    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_cols(self.input_dim(), x.ncols())?;
        Ok(match self {
            ManifoldModel::Pca(m) => m.encode(x),
            ManifoldModel::Ae(m) => m.encode(x),
        })
    }

    pub fn decode(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_cols(self.latent_dim(), z.ncols())?;
        Ok(match self {
            ManifoldModel::Pca(m) => m.decode(z),
            ManifoldModel::Ae(m) => m.decode(z),
        })
    }

    /// Per-row `(1/D) * sum_d (x - decode(encode(x)))^2`.
    pub fn reconstruction_error(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let recon = self.decode(self.encode(x)?.view())?;
        let d = x.ncols() as f64;
        let mut diff = recon - &x;
        diff.mapv_inplace(|v| v * v);
        Ok(diff.sum_axis(Axis(1)) / d)
    }
}

fn check_cols(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

/// Median reconstruction error over `rows`; the fit-quality gate compares it
/// against a configured ceiling.
pub fn median_error(errors: &Array1<f64>, rows: &[usize]) -> f64 {
    let mut v: Vec<f64> = rows.iter().map(|&i| errors[i]).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

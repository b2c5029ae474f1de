//! Versioned binary container for fitted manifolds.
//!
//! ```text
//! magic    8 bytes  "PEGMANIF"
//! version  u32 LE
//! kind     u32 LE   0 = PCA, 1 = autoencoder
//! count    u32 LE   number of tensors
//! tensor*  name_len u32, name utf-8, ndim u32, dims u64 x ndim, f64 LE payload
//! ```
//!
//! A JSON sidecar next to the binary (`<file>.json`) carries the training
//! configuration, seeds and layer activations.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::ae::{Activation, AeConfig, AeModel, Dense};
use super::pca::PcaModel;
use super::ManifoldModel;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PEGMANIF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub format_version: u32,
    pub kind: String,
    pub latent_dim: usize,
    pub input_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ae_config: Option<AeConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub activations: Vec<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_encoder: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    pub tool_version: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

struct Tensor {
    name: String,
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn encode(kind: u32, tensors: &[Tensor]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u32(&mut buf, VERSION);
    push_u32(&mut buf, kind);
    push_u32(&mut buf, tensors.len() as u32);
    for t in tensors {
        push_u32(&mut buf, t.name.len() as u32);
        buf.extend_from_slice(t.name.as_bytes());
        push_u32(&mut buf, t.dims.len() as u32);
        for &d in &t.dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::ModelFormat("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode(bytes: &[u8]) -> Result<(u32, Vec<Tensor>)> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let kind = c.u32()?;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec())
            .map_err(|_| Error::ModelFormat("tensor name is not utf-8".into()))?;
        let ndim = c.u32()? as usize;
        let dims = (0..ndim).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let size: usize = dims.iter().product();
        let raw = c.take(size * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.push(Tensor { name, dims, data });
    }
    if c.pos != bytes.len() {
        return Err(Error::ModelFormat("trailing bytes".into()));
    }
    Ok((kind, tensors))
}

fn vector(name: &str, v: &Array1<f64>) -> Tensor {
    Tensor { name: name.into(), dims: vec![v.len()], data: v.to_vec() }
}

fn matrix(name: &str, m: &Array2<f64>) -> Tensor {
    Tensor { name: name.into(), dims: vec![m.nrows(), m.ncols()], data: m.iter().copied().collect() }
}

fn find<'t>(tensors: &'t [Tensor], name: &str) -> Result<&'t Tensor> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::ModelFormat(format!("missing tensor '{name}'")))
}

fn as_vector(t: &Tensor) -> Result<Array1<f64>> {
    if t.dims.len() != 1 {
        return Err(Error::ModelFormat(format!("'{}' is not a vector", t.name)));
    }
    Ok(Array1::from(t.data.clone()))
}

fn as_matrix(t: &Tensor) -> Result<Array2<f64>> {
    if t.dims.len() != 2 {
        return Err(Error::ModelFormat(format!("'{}' is not a matrix", t.name)));
    }
    Array2::from_shape_vec((t.dims[0], t.dims[1]), t.data.clone()).map_err(|e| Error::ModelFormat(e.to_string()))
}

pub fn to_bytes(model: &ManifoldModel) -> Vec<u8> {
    match model {
        ManifoldModel::Pca(m) => encode(
            0,
            &[
                vector("mean", &m.mean),
                matrix("components", &m.components),
                vector("singular_values", &m.singular_values),
                vector("explained_variance_ratio", &m.explained_variance_ratio),
            ],
        ),
        ManifoldModel::Ae(m) => {
            let mut tensors = Vec::new();
            for (l, layer) in m.layers.iter().enumerate() {
                tensors.push(matrix(&format!("layer{l}.weight"), &layer.weight));
                tensors.push(vector(&format!("layer{l}.bias"), &layer.bias));
            }
            encode(1, &tensors)
        }
    }
}

pub fn sidecar(model: &ManifoldModel) -> ModelSidecar {
    let mut s = ModelSidecar {
        format_version: VERSION,
        kind: model.kind().into(),
        latent_dim: model.latent_dim(),
        input_dim: model.input_dim(),
        ae_config: None,
        activations: Vec::new(),
        n_encoder: None,
        final_train_loss: None,
        n_samples: None,
        tool_version: crate::VERSION.into(),
    };
    match model {
        ManifoldModel::Pca(m) => s.n_samples = Some(m.n_samples),
        ManifoldModel::Ae(m) => {
            s.ae_config = Some(m.config.clone());
            s.activations = m.layers.iter().map(|l| l.activation).collect();
            s.n_encoder = Some(m.n_encoder);
            s.final_train_loss = Some(m.final_train_loss);
        }
    }
    s
}

pub fn from_parts(bytes: &[u8], meta: &ModelSidecar) -> Result<ManifoldModel> {
    let (kind, tensors) = decode(bytes)?;
    match kind {
        0 => Ok(ManifoldModel::Pca(PcaModel {
            mean: as_vector(find(&tensors, "mean")?)?,
            components: as_matrix(find(&tensors, "components")?)?,
            singular_values: as_vector(find(&tensors, "singular_values")?)?,
            explained_variance_ratio: as_vector(find(&tensors, "explained_variance_ratio")?)?,
            n_samples: meta.n_samples.unwrap_or(0),
        })),
        1 => {
            let mut layers = Vec::new();
            for (l, &activation) in meta.activations.iter().enumerate() {
                layers.push(Dense {
                    weight: as_matrix(find(&tensors, &format!("layer{l}.weight"))?)?,
                    bias: as_vector(find(&tensors, &format!("layer{l}.bias"))?)?,
                    activation,
                });
            }
            if layers.is_empty() {
                return Err(Error::ModelFormat("sidecar lists no layers".into()));
            }
            Ok(ManifoldModel::Ae(AeModel {
                layers,
                n_encoder: meta.n_encoder.unwrap_or(2),
                config: meta.ae_config.clone().unwrap_or_default(),
                final_train_loss: meta.final_train_loss.unwrap_or(f64::NAN),
            }))
        }
        k => Err(Error::ModelFormat(format!("unknown model kind {k}"))),
    }
}

/// Write `path` and its `.json` sidecar.
pub fn save_model(model: &ManifoldModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar(model))?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ManifoldModel> {
    let bytes = fs::read(path)?;
    let meta: ModelSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    from_parts(&bytes, &meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ManifoldSpec, PcaTarget};
    use ndarray::array;

    #[test]
    fn pca_round_trip() {
        let x = array![[0.1, 0.5, 0.2], [0.9, 0.3, 0.0], [0.4, 0.4, 0.8], [0.2, 0.7, 0.6]];
        let model = ManifoldSpec::Pca { target: PcaTarget::Latent(2) }.fit(x.view()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), VERSION);
    }

    #[test]
    fn ae_round_trip() {
        let x = Array2::from_shape_fn((20, 4), |(i, j)| ((i + 2 * j) % 5) as f64 / 5.0);
        let config = AeConfig { hidden: 3, latent: 2, epochs: 2, batch_size: 8, ..AeConfig::default() };
        let model = ManifoldSpec::Ae { config }.fit(x.view()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ae.bin");
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let meta = ModelSidecar {
            format_version: 1,
            kind: "pca".into(),
            latent_dim: 1,
            input_dim: 1,
            ae_config: None,
            activations: vec![],
            n_encoder: None,
            final_train_loss: None,
            n_samples: None,
            tool_version: "x".into(),
        };
        assert!(matches!(from_parts(b"NOTMAGIC", &meta), Err(Error::ModelFormat(_))));
        let mut bytes = encode(0, &[]);
        bytes[8] = 9;
        assert!(matches!(from_parts(&bytes, &meta), Err(Error::ModelFormat(_))));
        let bytes = encode(0, &[]);
        assert!(matches!(from_parts(&bytes[..14], &meta), Err(Error::ModelFormat(_))));
    }
}

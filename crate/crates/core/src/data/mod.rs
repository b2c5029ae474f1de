//! Dataset ingestion and contaminated-sample construction.

pub mod idx;
pub mod synthetic;

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use idx::{load_idx, save_idx};
pub use synthetic::{generate_pegasus, special_index, PegasusConfig, SpecialPoint};

/// Largest anomaly fraction accepted for a contaminated sample.
pub const MAX_ANOMALY_FRACTION: f64 = 0.10;

/// An `n x D` intensity matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub source: String,
}

impl RawDataset {
    pub fn new(features: Array2<f64>, labels: Vec<u8>, source: impl Into<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                images: features.nrows(),
                labels: labels.len(),
            });
        }
        if let Some(v) = features.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parse(format!("feature value {v} outside [0, 1]")));
        }
        Ok(Self {
            features,
            labels,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count_class(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MnistSplit {
    Train,
    #[default]
    Test,
}

impl MnistSplit {
    fn prefix(self) -> &'static str {
        match self {
            MnistSplit::Train => "train",
            MnistSplit::Test => "t10k",
        }
    }
}

impl FromStr for MnistSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(MnistSplit::Train),
            "test" => Ok(MnistSplit::Test),
            other => Err(Error::InvalidConfig(format!("unknown MNIST split '{other}'"))),
        }
    }
}

impl fmt::Display for MnistSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MnistSplit::Train => "train",
            MnistSplit::Test => "test",
        })
    }
}

/// The standard MNIST file names inside `dir` for `split`.
pub fn mnist_paths(dir: &Path, split: MnistSplit) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{}-images-idx3-ubyte", split.prefix())),
        dir.join(format!("{}-labels-idx1-ubyte", split.prefix())),
    )
}

pub fn load_mnist(dir: &Path, split: MnistSplit) -> Result<RawDataset> {
    let (images, labels) = mnist_paths(dir, split);
    let mut raw = load_idx(&images, &labels)?;
    raw.source = format!("mnist:{split}");
    Ok(raw)
}

/// Ground-truth-labelled sample: bulk rows are normal, injected rows anomalous.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminatedSample {
    pub features: Array2<f64>,
    pub class_labels: Vec<u8>,
    is_anomaly: Vec<bool>,
    pub seed: u64,
    pub bulk_class: u8,
    pub anomaly_classes: Vec<u8>,
    pub source: String,
}

impl ContaminatedSample {
    pub fn new(
        features: Array2<f64>,
        class_labels: Vec<u8>,
        is_anomaly: Vec<bool>,
        seed: u64,
        bulk_class: u8,
        anomaly_classes: Vec<u8>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        if class_labels.len() != n || is_anomaly.len() != n {
            return Err(Error::InvalidConfig(format!(
                "sample has {n} rows but {} labels and {} anomaly flags",
                class_labels.len(),
                is_anomaly.len()
            )));
        }
        let n_anom = is_anomaly.iter().filter(|&&a| a).count();
        if n > 0 && n_anom as f64 > MAX_ANOMALY_FRACTION * n as f64 {
            return Err(Error::InvalidConfig(format!(
                "{n_anom} anomalies among {n} rows exceeds the {:.0}% contamination limit",
                MAX_ANOMALY_FRACTION * 100.0
            )));
        }
        Ok(Self {
            features,
            class_labels,
            is_anomaly,
            seed,
            bulk_class,
            anomaly_classes,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.is_anomaly.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_anomaly.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_anomaly(&self) -> &[bool] {
        &self.is_anomaly
    }

    pub fn anomaly_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_anomaly[i]).collect()
    }

    pub fn normal_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_anomaly[i]).collect()
    }

    pub fn n_anomalies(&self) -> usize {
        self.is_anomaly.iter().filter(|&&a| a).count()
    }

    /// Rows of class `class`, in sample order.
    pub fn class_indices(&self, class: u8) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.class_labels[i] == class)
            .collect()
    }

    /// Write `index,is_anomaly,class,f0..f{D-1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string(), "is_anomaly".into(), "class".into()];
        header.extend((0..self.dim()).map(|d| format!("f{d}")));
        w.write_record(&header)?;
        for (i, row) in self.features.axis_iter(Axis(0)).enumerate() {
            let mut rec = vec![
                i.to_string(),
                (self.is_anomaly[i] as u8).to_string(),
                self.class_labels[i].to_string(),
            ];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv). Bulk class is taken to be
    /// the most common class among normal rows.
    pub fn read_csv<R: Read>(reader: R, seed: u64, source: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "index" || &headers[1] != "is_anomaly" {
            return Err(Error::Parse("expected header index,is_anomaly,class,f0..".into()));
        }
        let dim = headers.len() - 3;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut flags = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let index: usize = parse_field(&rec[0])?;
            if index != row {
                return Err(Error::Parse(format!("row {row} has index {index}")));
            }
            flags.push(parse_field::<u8>(&rec[1])? != 0);
            labels.push(parse_field::<u8>(&rec[2])?);
            for d in 0..dim {
                values.push(parse_field::<f64>(&rec[3 + d])?);
            }
        }
        let n = labels.len();
        let features = Array2::from_shape_vec((n, dim), values)
            .map_err(|e| Error::Parse(e.to_string()))?;
        let mut counts = [0usize; 256];
        for (l, a) in labels.iter().zip(&flags) {
            if !a {
                counts[*l as usize] += 1;
            }
        }
        let bulk_class = (0..256).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0) as u8;
        let mut anomaly_classes: Vec<u8> = labels
            .iter()
            .zip(&flags)
            .filter(|(_, a)| **a)
            .map(|(l, _)| *l)
            .collect();
        anomaly_classes.sort_unstable();
        anomaly_classes.dedup();
        Self::new(features, labels, flags, seed, bulk_class, anomaly_classes, source)
    }

    /// Stable content fingerprint (shape, labels and feature bits).
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        h.update(&self.class_labels);
        h.update(self.is_anomaly.iter().map(|&a| a as u8).collect::<Vec<_>>());
        for v in self.features.iter() {
            h.update(v.to_le_bytes());
        }
        hex_digest(&h.finalize())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_field<T: FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("cannot parse field '{s}'")))
}

/// All rows of `bulk_class` plus `count` rows drawn without replacement from
/// each `(class, count)` in `anomaly_specs`, in a seeded shuffled order.
pub fn build_contaminated_sample(
    raw: &RawDataset,
    bulk_class: u8,
    anomaly_specs: &[(u8, usize)],
    seed: u64,
) -> Result<ContaminatedSample> {
    let mut rng = rng::seeded(seed);
    let class_rows = |class: u8| -> Vec<usize> {
        (0..raw.len()).filter(|&i| raw.labels[i] == class).collect()
    };

    let mut picked: Vec<(usize, bool)> = class_rows(bulk_class).into_iter().map(|i| (i, false)).collect();
    for &(class, count) in anomaly_specs {
        if class == bulk_class {
            return Err(Error::InvalidConfig(format!(
                "anomaly class {class} is the bulk class"
            )));
        }
        let rows = class_rows(class);
        if count > rows.len() {
            return Err(Error::InsufficientClassMembers {
                class,
                requested: count,
                available: rows.len(),
            });
        }
        let mut chosen: Vec<usize> = index::sample(&mut rng, rows.len(), count)
            .into_iter()
            .map(|k| rows[k])
            .collect();
        chosen.sort_unstable();
        picked.extend(chosen.into_iter().map(|i| (i, true)));
    }
    picked.shuffle(&mut rng);

    let rows: Vec<usize> = picked.iter().map(|&(i, _)| i).collect();
    let features = raw.features.select(Axis(0), &rows);
    let class_labels = rows.iter().map(|&i| raw.labels[i]).collect();
    let is_anomaly = picked.iter().map(|&(_, a)| a).collect();
    ContaminatedSample::new(
        features,
        class_labels,
        is_anomaly,
        seed,
        bulk_class,
        anomaly_specs.iter().map(|&(c, _)| c).collect(),
        raw.source.clone(),
    )
}

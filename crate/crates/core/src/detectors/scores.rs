use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-point scores from one detector, oriented so that higher means more
/// anomalous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScores {
    pub detector_id: String,
    pub scores: Vec<f64>,
    pub params: BTreeMap<String, String>,
}

impl AnomalyScores {
    pub fn new(
        detector_id: impl Into<String>,
        scores: Vec<f64>,
        params: BTreeMap<String, String>,
    ) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::DegenerateData(format!("non-finite score at row {i}")));
        }
        Ok(Self {
            detector_id: detector_id.into(),
            scores,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `index,score,detector_id`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "score", "detector_id"])?;
        for (i, s) in self.scores.iter().enumerate() {
            w.write_record([i.to_string(), s.to_string(), self.detector_id.clone()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut scores = Vec::new();
        let mut detector_id = String::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Parse("expected index,score,detector_id".into()));
            }
            let index: usize = rec[0].parse().map_err(|_| Error::Parse(format!("bad index '{}'", &rec[0])))?;
            if index != row {
                return Err(Error::Parse(format!("row {row} has index {index}")));
            }
            scores.push(rec[1].parse().map_err(|_| Error::Parse(format!("bad score '{}'", &rec[1])))?);
            detector_id = rec[2].to_string();
        }
        Self::new(detector_id, scores, BTreeMap::new())
    }
}

/// A set of flagged row indices over a dataset of `n` rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagSet {
    indices: Vec<usize>,
    pub k: usize,
    pub source: String,
    pub n: usize,
}

impl FlagSet {
    pub fn new(indices: impl IntoIterator<Item = usize>, k: usize, source: impl Into<String>, n: usize) -> Result<Self> {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        if let Some(&bad) = set.iter().next_back().filter(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        Ok(Self {
            indices: set.into_iter().collect(),
            k,
            source: source.into(),
            n,
        })
    }

    /// Sorted, unique.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn intersection_count(&self, other: &[usize]) -> usize {
        other.iter().filter(|&&i| self.contains(i)).count()
    }

    /// `index,source`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "source"])?;
        for i in &self.indices {
            w.write_record([i.to_string(), self.source.clone()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read flags over a dataset of `n` rows; `k` is set to the number read.
    pub fn read_csv<R: Read>(reader: R, n: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut indices = Vec::new();
        let mut source = String::new();
        for rec in r.records() {
            let rec = rec?;
            indices.push(rec[0].parse().map_err(|_| Error::Parse(format!("bad index '{}'", &rec[0])))?);
            if rec.len() > 1 {
                source = rec[1].to_string();
            }
        }
        let k = indices.len();
        Self::new(indices, k, source, n)
    }
}

/// Indices of the `k` largest scores; ties go to the lower index.
pub fn top_k_flags(scores: &AnomalyScores, k: usize) -> Result<FlagSet> {
    if k == 0 {
        return Err(Error::InvalidParams("flag budget k must be at least 1".into()));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores.scores[b].total_cmp(&scores.scores[a]).then(a.cmp(&b)));
    order.truncate(k.min(n));
    FlagSet::new(order, k, scores.detector_id.clone(), n)
}

/// Union of flag sets over the same dataset.
pub fn combine_flags(sets: &[&FlagSet]) -> Result<FlagSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::InvalidParams("nothing to combine".into()))?;
    for s in &sets[1..] {
        if s.n != first.n {
            return Err(Error::MixedDatasets(first.n, s.n));
        }
    }
    let union: BTreeSet<usize> = sets.iter().flat_map(|s| s.indices.iter().copied()).collect();
    let source = if sets.len() == 1 {
        first.source.clone()
    } else {
        format!(
            "union({})",
            sets.iter().map(|s| s.source.as_str()).collect::<Vec<_>>().join(",")
        )
    };
    let k = union.len();
    FlagSet::new(union, k, source, first.n)
}

//! The idealized horse dataset: correlated height/weight bulk plus four
//! hand-placed special points, one of which carries a third "wings" feature.
//!
//! Units are centimetres and kilograms. The wings feature is 0 or 1, so with
//! these units the bulk's smallest in-plane spread is far larger than the
//! spread along the wings axis, and a 2-D PCA keeps the height/weight plane.
//!
//! Ground truth follows a density threshold: a point is anomalous iff the
//! generating density at that point is `<= tau`. The bulk law puts all its
//! mass on `wings = 0`, so any winged point has density zero.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ContaminatedSample;
use crate::error::{Error, Result};
use crate::rng;

/// Class id of ordinary horses; special points use 1.. in config order.
pub const BULK_CLASS: u8 = 0;

/// Tail mass of the bulk law below the default density threshold.
pub const DEFAULT_TAIL_MASS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecialPoint {
    pub name: String,
    pub height: f64,
    pub weight: f64,
    pub wings: f64,
    /// Added to `weight` to give the point's weight feature.
    pub wing_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PegasusConfig {
    pub n_normal: usize,
    pub height_mean: f64,
    pub height_sd: f64,
    pub height_weight_correlation: f64,
    /// Standard deviation of weight around the regression line.
    pub noise_scale: f64,
    pub density_threshold_tau: f64,
    pub special_points: Vec<SpecialPoint>,
}

impl Default for PegasusConfig {
    fn default() -> Self {
        let mut cfg = PegasusConfig {
            n_normal: 1000,
            height_mean: 150.0,
            height_sd: 15.0,
            height_weight_correlation: 0.95,
            noise_scale: 16.5,
            density_threshold_tau: 0.0,
            special_points: Vec::new(),
        };
        cfg.density_threshold_tau = cfg.tail_density(DEFAULT_TAIL_MASS);
        let slope = cfg.slope();
        let on_line = |name: &str, height: f64, wings: f64, wing_weight: f64| SpecialPoint {
            name: name.to_string(),
            height,
            weight: slope * height,
            wings,
            wing_weight,
        };
        cfg.special_points = vec![
            on_line("Eohippus", 25.0, 0.0, 0.0),
            on_line("Sampson", 220.0, 0.0, 0.0),
            on_line("Pegasus_m", 150.0, 1.0, 0.0),
            on_line("Pegasus_h", 150.0, 1.0, 300.0),
        ];
        cfg
    }
}

impl PegasusConfig {
    /// Weight per unit height implied by the correlation and noise scale.
    pub fn slope(&self) -> f64 {
        let rho = self.height_weight_correlation;
        rho * self.noise_scale / (self.height_sd * (1.0 - rho * rho).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let rho = self.height_weight_correlation;
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "height/weight correlation {rho} must lie strictly between 0 and 1"
            )));
        }
        if !(self.height_sd > 0.0 && self.noise_scale > 0.0) {
            return Err(Error::InvalidConfig("spreads must be positive".into()));
        }
        if !(self.density_threshold_tau >= 0.0) {
            return Err(Error::InvalidConfig("tau must be non-negative".into()));
        }
        if self.n_normal == 0 {
            return Err(Error::InvalidConfig("n_normal must be positive".into()));
        }
        Ok(())
    }

    /// Squared Mahalanobis distance of `(height, weight)` under the bulk law.
    pub fn mahalanobis_sq(&self, height: f64, weight: f64) -> f64 {
        let dh = height - self.height_mean;
        let residual = weight - self.slope() * height;
        (dh / self.height_sd).powi(2) + (residual / self.noise_scale).powi(2)
    }

    /// Generating density at a point with the given features.
    pub fn density(&self, height: f64, weight: f64, wings: f64) -> f64 {
        if wings != 0.0 {
            return 0.0;
        }
        let norm = 2.0 * PI * self.height_sd * self.noise_scale;
        (-0.5 * self.mahalanobis_sq(height, weight)).exp() / norm
    }

    /// Density level whose super-level set holds `1 - tail` of the bulk mass.
    /// For a bivariate Gaussian the squared Mahalanobis radius is chi-square
    /// with two degrees of freedom, so the level is `tail / (2 pi |Sigma|^1/2)`.
    pub fn tail_density(&self, tail: f64) -> f64 {
        tail / (2.0 * PI * self.height_sd * self.noise_scale)
    }
}

/// Features are `[height, weight + wing_weight, wings]`.
pub fn generate_pegasus(config: &PegasusConfig, seed: u64) -> Result<ContaminatedSample> {
    config.validate()?;
    if config.special_points.len() > u8::MAX as usize - 1 {
        return Err(Error::InvalidConfig("too many special points".into()));
    }
    let mut rng = rng::seeded(seed);
    let slope = config.slope();
    let mut rows: Vec<([f64; 3], u8)> = Vec::with_capacity(config.n_normal + config.special_points.len());
    for _ in 0..config.n_normal {
        let zh: f64 = StandardNormal.sample(&mut rng);
        let zw: f64 = StandardNormal.sample(&mut rng);
        let height = config.height_mean + config.height_sd * zh;
        let weight = slope * height + config.noise_scale * zw;
        rows.push(([height, weight, 0.0], BULK_CLASS));
    }
    for (k, p) in config.special_points.iter().enumerate() {
        rows.push(([p.height, p.weight + p.wing_weight, p.wings], k as u8 + 1));
    }
    rows.shuffle(&mut rng);

    let n = rows.len();
    let mut features = Array2::zeros((n, 3));
    let mut labels = Vec::with_capacity(n);
    let mut is_anomaly = Vec::with_capacity(n);
    for (i, (x, class)) in rows.iter().enumerate() {
        for d in 0..3 {
            features[[i, d]] = x[d];
        }
        labels.push(*class);
        is_anomaly.push(config.density(x[0], x[1], x[2]) <= config.density_threshold_tau);
    }
    ContaminatedSample::new(
        features,
        labels,
        is_anomaly,
        seed,
        BULK_CLASS,
        (1..=config.special_points.len() as u8).collect(),
        "pegasus",
    )
}

/// Row index of special point `name` in a generated sample.
pub fn special_index(config: &PegasusConfig, sample: &ContaminatedSample, name: &str) -> Option<usize> {
    let k = config.special_points.iter().position(|p| p.name == name)?;
    sample.class_indices(k as u8 + 1).first().copied()
}

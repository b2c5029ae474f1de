//! Fully connected autoencoder `D -> h -> M -> h -> D`.
//!
//! Hidden layers use `tanh`, the code layer is linear, and the output layer
//! is linear during training and clamped to `[0, 1]` when decoding. The
//! training objective is the per-sample sum of squared errors averaged over
//! the mini-batch, optimised by mini-batch gradient descent with momentum.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    pub hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            latent: 30,
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl AeConfig {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 || self.latent == 0 {
            return Err(Error::InvalidConfig(
                "epochs, batch size, hidden width and latent width must be positive".into(),
            ));
        }
        if self.latent >= input_dim {
            return Err(Error::InvalidConfig(format!(
                "latent width {} must be below the input dimension {input_dim}",
                self.latent
            )));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("learning rate must be positive and momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_in x fan_out`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight) + &self.bias;
        self.activation.apply(&mut z);
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    /// Encoder layers followed by decoder layers.
    pub layers: Vec<Dense>,
    pub n_encoder: usize,
    pub config: AeConfig,
    /// Mean per-element squared error of the clamped reconstruction over the
    /// training set after the last epoch.
    pub final_train_loss: f64,
}

/// Per-layer gradients of the training objective.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weight: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

const OUTPUT_RANGE: (f64, f64) = (0.0, 1.0);

impl AeModel {
    /// A freshly initialised network with Glorot-uniform weights and zero biases.
    pub fn init(input_dim: usize, config: &AeConfig) -> Self {
        let dims = [input_dim, config.hidden, config.latent, config.hidden, input_dim];
        let acts = [Activation::Tanh, Activation::Linear, Activation::Tanh, Activation::Linear];
        let mut rng = rng::stream(config.seed, 0);
        let layers = (0..4)
            .map(|l| {
                let (fan_in, fan_out) = (dims[l], dims[l + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                Dense {
                    weight: Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(&mut rng)),
                    bias: Array1::zeros(fan_out),
                    activation: acts[l],
                }
            })
            .collect();
        Self {
            layers,
            n_encoder: 2,
            config: config.clone(),
            final_train_loss: f64::NAN,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[self.n_encoder - 1].weight.ncols()
    }

    /// `(D, h_enc, M, h_dec, D)`
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weight.ncols()));
        dims
    }

    pub fn encode(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for layer in &self.layers[..self.n_encoder] {
            a = layer.forward(a.view());
        }
        a
    }

    /// Decoder output clamped to `[0, 1]`.
    pub fn decode(&self, z: ArrayView2<f64>) -> Array2<f64> {
        let mut out = self.decode_linear(z);
        out.mapv_inplace(|v| v.clamp(OUTPUT_RANGE.0, OUTPUT_RANGE.1));
        out
    }

    fn decode_linear(&self, z: ArrayView2<f64>) -> Array2<f64> {
        let mut a = z.to_owned();
        for layer in &self.layers[self.n_encoder..] {
            a = layer.forward(a.view());
        }
        a
    }

    /// Training objective on `x` (mean over rows of the per-row sum of
    /// squared errors of the unclamped output) and its gradient.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>) -> (f64, Gradients) {
        let batch = x.nrows() as f64;
        let mut activations = vec![x.to_owned()];
        for layer in &self.layers {
            let next = layer.forward(activations.last().unwrap().view());
            activations.push(next);
        }
        let out = activations.last().unwrap();
        let diff = out - &x;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / batch;

        let n_layers = self.layers.len();
        let mut weight = Vec::with_capacity(n_layers);
        let mut bias = Vec::with_capacity(n_layers);
        let mut delta = diff * (2.0 / batch);
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            if layer.activation == Activation::Tanh {
                delta.zip_mut_with(&activations[l + 1], |d, &a| *d *= 1.0 - a * a);
            }
            weight.push(activations[l].t().dot(&delta));
            bias.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                delta = delta.dot(&layer.weight.t());
            }
        }
        weight.reverse();
        bias.reverse();
        (loss, Gradients { weight, bias })
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn locate(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weight.len();
            if index < nw {
                return layer.weight.iter_mut().nth(index).unwrap();
            }
            index -= nw;
            let nb = layer.bias.len();
            if index < nb {
                return &mut layer.bias[index];
            }
            index -= nb;
        }
        panic!("parameter index out of range");
    }

    /// Parameter `index` in layer order (weights row-major, then bias).
    pub fn parameter(&self, index: usize) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .nth(index)
            .copied()
            .expect("parameter index out of range")
    }

    pub fn set_parameter(&mut self, index: usize, value: f64) {
        *self.locate(index) = value;
    }
}

impl Gradients {
    /// Flattened in the same order as [`AeModel::parameter`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weight.iter().zip(&self.bias) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }
}

/// Train an autoencoder on the rows of `x`. Single-threaded and bit-for-bit
/// reproducible for a fixed config.
pub fn ae_fit(x: ArrayView2<f64>, config: &AeConfig) -> Result<AeModel> {
    let (n, d) = x.dim();
    config.validate(d)?;
    if n == 0 {
        return Err(Error::DegenerateData("no training rows".into()));
    }
    let mut model = AeModel::init(d, config);
    let mut velocity_w: Vec<Array2<f64>> = model.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect();
    let mut velocity_b: Vec<Array1<f64>> = model.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect();
    let mut rng = rng::stream(config.seed, 1);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = x.select(Axis(0), chunk);
            let (loss, grads) = model.loss_and_gradient(batch.view());
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            for (l, layer) in model.layers.iter_mut().enumerate() {
                let vw = &mut velocity_w[l];
                vw.zip_mut_with(&grads.weight[l], |v, &g| *v = config.momentum * *v + g);
                layer.weight.scaled_add(-config.learning_rate, vw);
                let vb = &mut velocity_b[l];
                vb.zip_mut_with(&grads.bias[l], |v, &g| *v = config.momentum * *v + g);
                layer.bias.scaled_add(-config.learning_rate, vb);
            }
        }
    }

    let recon = model.decode(model.encode(x).view());
    let mse = (&recon - &x).iter().map(|v| v * v).sum::<f64>() / (n * d) as f64;
    if !mse.is_finite() || model.layers.iter().any(|l| l.weight.iter().any(|w| !w.is_finite())) {
        return Err(Error::NonFiniteLoss { epoch: config.epochs });
    }
    model.final_train_loss = mse;
    Ok(model)
}

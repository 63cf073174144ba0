//! Feed-forward tanh network trained with full-batch RMSProp.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::regress::optim::Rmsprop;
use crate::regress::TrainConfig;
use crate::rng::seeded;

/// Width of each hidden layer.
pub const HIDDEN_WIDTH: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// out x in.
    pub weights: Mat,
    pub bias: Vector,
}

/// Tanh hidden layers, linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean squared error (without the penalty) before the first update.
    pub initial_mse: f64,
    pub final_mse: f64,
}

impl MlpModel {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.nrows() {
                return Err(Error::Dimension(format!(
                    "layer {k}: {} biases for {} units",
                    l.bias.len(),
                    l.weights.nrows()
                )));
            }
            if k > 0 && layers[k - 1].weights.nrows() != l.weights.ncols() {
                return Err(Error::Dimension(format!(
                    "layer {k} expects {} inputs, previous layer has {} units",
                    l.weights.ncols(),
                    layers[k - 1].weights.nrows()
                )));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("layer {k} has non-finite parameters")));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                Dense {
                    weights: Mat::from_fn(w[1], w[0], |_, _| dist.sample(rng)),
                    bias: Vector::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// The standard `[in, 10, 10, out]` architecture.
    pub fn standard(input_dim: usize, output_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::init(&[input_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, output_dim], rng)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {len}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, query: &[f64]) -> Result<Vector> {
        self.check_input(query.len())?;
        let mut h = Vector::from_column_slice(query);
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            h = &l.weights * h + &l.bias;
            if k < last {
                h.apply(|v| *v = v.tanh());
            }
        }
        Ok(h)
    }

    /// Forward pass over the rows of `x`, keeping every layer's output.
    fn forward_rows(&self, x: &Mat) -> Vec<Mat> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = &acts[k] * l.weights.transpose();
            for (j, mut col) in z.column_iter_mut().enumerate() {
                col.add_scalar_mut(l.bias[j]);
            }
            if k < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict_rows(&self, x: &Mat) -> Result<Mat> {
        self.check_input(x.ncols())?;
        Ok(self.forward_rows(x).pop().expect("at least one layer"))
    }

    /// Analytic Jacobian (out x in) at `query`.
    pub fn jacobian(&self, query: &[f64]) -> Result<Mat> {
        self.check_input(query.len())?;
        let last = self.layers.len() - 1;
        let mut h = Vector::from_column_slice(query);
        let mut jac = Mat::identity(query.len(), query.len());
        for (k, l) in self.layers.iter().enumerate() {
            h = &l.weights * h + &l.bias;
            jac = &l.weights * jac;
            if k < last {
                h.apply(|v| *v = v.tanh());
                for (i, mut row) in jac.row_iter_mut().enumerate() {
                    row *= 1.0 - h[i] * h[i];
                }
            }
        }
        Ok(jac)
    }

    pub fn mse(&self, x: &Mat, y: &Mat) -> Result<f64> {
        let pred = self.predict_rows(x)?;
        Ok((pred - y).norm_squared() / (y.nrows() * y.ncols()) as f64)
    }

    /// Penalized loss `mse + l2 * sum ||W||^2` and its gradient, one
    /// `Dense` of partial derivatives per layer.
    pub fn loss_and_grad(&self, x: &Mat, y: &Mat, l2: f64) -> (f64, Vec<Dense>) {
        let acts = self.forward_rows(x);
        let out = &acts[acts.len() - 1];
        let scale = 2.0 / (y.nrows() * y.ncols()) as f64;
        let diff = out - y;
        let mse = diff.norm_squared() / (y.nrows() * y.ncols()) as f64;
        let penalty: f64 = self.layers.iter().map(|l| l.weights.norm_squared()).sum();
        let mut delta = diff * scale;
        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let input = &acts[k];
            let gw = delta.transpose() * input + &l.weights * (2.0 * l2);
            let gb = Vector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            grads.push(Dense { weights: gw, bias: gb });
            if k > 0 {
                let mut d_prev = &delta * &l.weights;
                d_prev.zip_apply(input, |d, h| *d *= 1.0 - h * h);
                delta = d_prev;
            }
        }
        grads.reverse();
        (mse + l2 * penalty, grads)
    }

    /// Full-batch RMSProp on `mse + l2 * ||W||^2`.
    pub fn fit(inputs: &Mat, targets: &Mat, config: &TrainConfig) -> Result<(Self, TrainReport)> {
        let mut rng = seeded(config.seed);
        let model = Self::standard(inputs.ncols(), targets.ncols(), &mut rng)?;
        model.train(inputs, targets, config)
    }

    /// Continue training from the current parameters.
    pub fn train(mut self, inputs: &Mat, targets: &Mat, config: &TrainConfig) -> Result<(Self, TrainReport)> {
        config.validate()?;
        self.check_input(inputs.ncols())?;
        if inputs.nrows() != targets.nrows() || inputs.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "{} input rows vs {} target rows",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        if targets.ncols() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "network has {} outputs, targets have {} columns",
                self.output_dim(),
                targets.ncols()
            )));
        }
        let initial_mse = self.mse(inputs, targets)?;
        let mut opt = Rmsprop::new(config.learning_rate);
        for epoch in 0..config.epochs {
            let (loss, grads) = self.loss_and_grad(inputs, targets, config.l2_penalty);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            for (k, (layer, g)) in self.layers.iter_mut().zip(&grads).enumerate() {
                opt.step(2 * k, layer.weights.as_mut_slice(), g.weights.as_slice());
                opt.step(2 * k + 1, layer.bias.as_mut_slice(), g.bias.as_slice());
            }
        }
        let final_mse = self.mse(inputs, targets)?;
        if !final_mse.is_finite() {
            return Err(Error::Divergence { epoch: config.epochs });
        }
        Ok((self, TrainReport { initial_mse, final_mse }))
    }
}

/// Fit the standard architecture; see [`MlpModel::fit`].
pub fn mlp_fit(inputs: &Mat, targets: &Mat, config: &TrainConfig) -> Result<MlpModel> {
    MlpModel::fit(inputs, targets, config).map(|(m, _)| m)
}

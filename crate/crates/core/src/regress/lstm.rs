//! Single-layer LSTM over short observation windows with a linear readout.
//!
//! Every window starts from a zero hidden and cell state, so predictions for
//! different windows are independent. Training uses minibatch Adam with
//! backpropagation through the window and keeps the parameters of the epoch
//! with the lowest validation error.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::regress::optim::Adam;
use crate::regress::TrainConfig;
use crate::rng::seeded;

pub const LSTM_HIDDEN: usize = 20;
pub const LSTM_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Checkpoint {
    #[default]
    BestValidation,
    LastEpoch,
}

impl std::str::FromStr for Checkpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best-validation" => Ok(Self::BestValidation),
            "last-epoch" => Ok(Self::LastEpoch),
            _ => Err(Error::Config(format!("unknown checkpoint policy '{s}'"))),
        }
    }
}

impl std::fmt::Display for Checkpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::BestValidation => "best-validation",
            Self::LastEpoch => "last-epoch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmOptions {
    pub train: TrainConfig,
    pub hidden: usize,
    pub batch_size: usize,
    /// Leading fraction of windows used for training; the rest validate.
    pub train_fraction: f64,
    pub checkpoint: Checkpoint,
}

impl LstmOptions {
    pub fn new(train: TrainConfig) -> Self {
        Self {
            train,
            hidden: LSTM_HIDDEN,
            batch_size: 64,
            train_fraction: 0.7,
            checkpoint: Checkpoint::BestValidation,
        }
    }
}

/// Gate blocks are stacked input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    /// 4H x p.
    pub w_in: Mat,
    /// 4H x H.
    pub w_rec: Mat,
    /// 4H.
    pub bias: Vector,
    /// d x H.
    pub w_out: Mat,
    /// d.
    pub b_out: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmReport {
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub final_train_mse: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations kept for the backward pass.
struct Step {
    i: Mat,
    f: Mat,
    g: Mat,
    o: Mat,
    c: Mat,
    tanh_c: Mat,
    h: Mat,
}

struct Grads {
    w_in: Mat,
    w_rec: Mat,
    bias: Vector,
    w_out: Mat,
    b_out: Vector,
}

impl LstmModel {
    pub fn zeros(input_dim: usize, hidden: usize, output_dim: usize) -> Self {
        Self {
            w_in: Mat::zeros(4 * hidden, input_dim),
            w_rec: Mat::zeros(4 * hidden, hidden),
            bias: Vector::zeros(4 * hidden),
            w_out: Mat::zeros(output_dim, hidden),
            b_out: Vector::zeros(output_dim),
        }
    }

    /// Uniform `(-1/sqrt(H), 1/sqrt(H))` initialization of every parameter.
    pub fn init(input_dim: usize, hidden: usize, output_dim: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut m = Self::zeros(input_dim, hidden, output_dim);
        for p in m.params_mut() {
            p.iter_mut().for_each(|v| *v = rng.random_range(-k..k));
        }
        m
    }

    fn params_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.w_in.as_mut_slice(),
            self.w_rec.as_mut_slice(),
            self.bias.as_mut_slice(),
            self.w_out.as_mut_slice(),
            self.b_out.as_mut_slice(),
        ]
    }

    /// All parameters flattened in the order `w_in, w_rec, bias, w_out,
    /// b_out`, each column-major.
    pub fn parameters(&self) -> Vec<f64> {
        [
            self.w_in.as_slice(),
            self.w_rec.as_slice(),
            self.bias.as_slice(),
            self.w_out.as_slice(),
            self.b_out.as_slice(),
        ]
        .concat()
    }

    pub fn parameter_count(&self) -> usize {
        self.w_in.len() + self.w_rec.len() + self.bias.len() + self.w_out.len() + self.b_out.len()
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                flat.len()
            )));
        }
        let mut rest = flat;
        for p in self.params_mut() {
            let (head, tail) = rest.split_at(p.len());
            p.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Penalized training loss over the windows ending at every row of `obs`,
    /// with its gradient in [`LstmModel::parameters`] order.
    pub fn loss_and_gradient(&self, obs: &Mat, targets: &Mat, l2: f64) -> Result<(f64, Vec<f64>)> {
        if obs.nrows() == 0 || obs.nrows() != targets.nrows() {
            return Err(Error::Dimension(format!(
                "{} observation rows vs {} target rows",
                obs.nrows(),
                targets.nrows()
            )));
        }
        if obs.ncols() != self.input_dim() || targets.ncols() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "model maps {} -> {}, data is {} -> {}",
                self.input_dim(),
                self.output_dim(),
                obs.ncols(),
                targets.ncols()
            )));
        }
        let idx: Vec<usize> = (0..obs.nrows()).collect();
        let (loss, g) = self.loss_and_grad(&window_batch(obs, &idx), &targets.transpose(), l2);
        let flat = [
            g.w_in.as_slice(),
            g.w_rec.as_slice(),
            g.bias.as_slice(),
            g.w_out.as_slice(),
            g.b_out.as_slice(),
        ]
        .concat();
        Ok((loss, flat))
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_rec.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w_out.nrows()
    }

    /// Forward over a batch: `steps[s]` is p x B; returns per-step caches and
    /// the d x B output.
    fn forward(&self, steps: &[Mat]) -> (Vec<Step>, Mat) {
        let h_dim = self.hidden_dim();
        let b = steps[0].ncols();
        let mut h = Mat::zeros(h_dim, b);
        let mut c = Mat::zeros(h_dim, b);
        let mut cache = Vec::with_capacity(steps.len());
        for x in steps {
            let mut z = &self.w_in * x + &self.w_rec * &h;
            for mut col in z.column_iter_mut() {
                col += &self.bias;
            }
            let i = z.rows(0, h_dim).map(sigmoid);
            let f = z.rows(h_dim, h_dim).map(sigmoid);
            let g = z.rows(2 * h_dim, h_dim).map(f64::tanh);
            let o = z.rows(3 * h_dim, h_dim).map(sigmoid);
            c = f.component_mul(&c) + i.component_mul(&g);
            let tanh_c = c.map(f64::tanh);
            h = o.component_mul(&tanh_c);
            cache.push(Step {
                i,
                f,
                g,
                o,
                c: c.clone(),
                tanh_c,
                h: h.clone(),
            });
        }
        let mut y = &self.w_out * &h;
        for mut col in y.column_iter_mut() {
            col += &self.b_out;
        }
        (cache, y)
    }

    fn check_steps(&self, steps: &[Mat]) -> Result<()> {
        if steps.len() != LSTM_WINDOW {
            return Err(Error::Dimension(format!(
                "LSTM window needs {LSTM_WINDOW} observations, got {}",
                steps.len()
            )));
        }
        if let Some(x) = steps.iter().find(|x| x.nrows() != self.input_dim()) {
            return Err(Error::Dimension(format!(
                "LSTM expects {} inputs, got {}",
                self.input_dim(),
                x.nrows()
            )));
        }
        Ok(())
    }

    /// Predict from one window, oldest observation first.
    pub fn predict(&self, window: &[&[f64]]) -> Result<Vector> {
        let steps: Vec<Mat> = window.iter().map(|x| Mat::from_column_slice(x.len(), 1, x)).collect();
        self.check_steps(&steps)?;
        Ok(self.forward(&steps).1.column(0).into_owned())
    }

    /// Predict for every row of a sequence, left-padding the first windows by
    /// repeating the first observation.
    pub fn predict_sequence(&self, obs: &Mat) -> Result<Mat> {
        if obs.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "LSTM expects {} inputs, got {}",
                self.input_dim(),
                obs.ncols()
            )));
        }
        let idx: Vec<usize> = (0..obs.nrows()).collect();
        let steps = window_batch(obs, &idx);
        Ok(self.forward(&steps).1.transpose())
    }

    /// Penalized loss `mse + l2 * sum ||W||^2` over windows ending at `idx`.
    fn loss_and_grad(&self, steps: &[Mat], targets_t: &Mat, l2: f64) -> (f64, Grads) {
        let h_dim = self.hidden_dim();
        let (cache, y) = self.forward(steps);
        let n = (targets_t.nrows() * targets_t.ncols()) as f64;
        let diff = y - targets_t;
        let mse = diff.norm_squared() / n;
        let dy = diff * (2.0 / n);

        let h_last = &cache.last().expect("non-empty window").h;
        let mut g = Grads {
            w_in: &self.w_in * (2.0 * l2),
            w_rec: &self.w_rec * (2.0 * l2),
            bias: Vector::zeros(self.bias.len()),
            w_out: &dy * h_last.transpose() + &self.w_out * (2.0 * l2),
            b_out: dy.column_sum(),
        };
        let mut dh = self.w_out.transpose() * &dy;
        let mut dc = Mat::zeros(h_dim, dy.ncols());
        for s in (0..cache.len()).rev() {
            let st = &cache[s];
            let d_o = dh.component_mul(&st.tanh_c);
            dc += dh.component_mul(&st.o).component_mul(&st.tanh_c.map(|t| 1.0 - t * t));
            let c_prev = if s > 0 {
                cache[s - 1].c.clone()
            } else {
                Mat::zeros(h_dim, dy.ncols())
            };
            let mut dz = Mat::zeros(4 * h_dim, dy.ncols());
            dz.rows_mut(0, h_dim)
                .copy_from(&dc.component_mul(&st.g).component_mul(&st.i.map(|v| v * (1.0 - v))));
            dz.rows_mut(h_dim, h_dim)
                .copy_from(&dc.component_mul(&c_prev).component_mul(&st.f.map(|v| v * (1.0 - v))));
            dz.rows_mut(2 * h_dim, h_dim)
                .copy_from(&dc.component_mul(&st.i).component_mul(&st.g.map(|v| 1.0 - v * v)));
            dz.rows_mut(3 * h_dim, h_dim)
                .copy_from(&d_o.component_mul(&st.o.map(|v| v * (1.0 - v))));
            g.w_in += &dz * steps[s].transpose();
            g.bias += dz.column_sum();
            if s > 0 {
                g.w_rec += &dz * cache[s - 1].h.transpose();
            }
            dh = self.w_rec.transpose() * &dz;
            dc = dc.component_mul(&st.f);
        }
        let penalty = self.w_in.norm_squared() + self.w_rec.norm_squared() + self.w_out.norm_squared();
        (mse + l2 * penalty, g)
    }

    fn mse_on(&self, obs: &Mat, targets: &Mat, idx: &[usize]) -> f64 {
        if idx.is_empty() {
            return f64::NAN;
        }
        let steps = window_batch(obs, idx);
        let t = targets.select_rows(idx).transpose();
        let (_, y) = self.forward(&steps);
        (y - t).norm_squared() / (idx.len() * targets.ncols()) as f64
    }

    pub fn fit(obs: &Mat, targets: &Mat, options: &LstmOptions) -> Result<(Self, LstmReport)> {
        let cfg = &options.train;
        cfg.validate()?;
        let t_len = obs.nrows();
        if t_len != targets.nrows() {
            return Err(Error::Dimension(format!(
                "{t_len} observations vs {} targets",
                targets.nrows()
            )));
        }
        if t_len < LSTM_WINDOW {
            return Err(Error::InsufficientData {
                actual: t_len,
                required: LSTM_WINDOW,
            });
        }
        if !(options.train_fraction > 0.0 && options.train_fraction <= 1.0) || options.batch_size == 0 {
            return Err(Error::InvalidArgument("LSTM train fraction or batch size".into()));
        }
        let n_train = ((t_len as f64 * options.train_fraction).round() as usize).clamp(1, t_len);
        let train_idx: Vec<usize> = (0..n_train).collect();
        let val_idx: Vec<usize> = (n_train..t_len).collect();
        let monitor = if val_idx.is_empty() { &train_idx } else { &val_idx };

        let mut rng = seeded(cfg.seed);
        let mut model = Self::init(obs.ncols(), options.hidden, targets.ncols(), &mut rng);
        let mut adam = Adam::new(cfg.learning_rate);
        let mut best = model.clone();
        let mut best_val = model.mse_on(obs, targets, monitor);
        let mut best_epoch = 0;
        let mut order = train_idx.clone();
        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(options.batch_size) {
                let steps = window_batch(obs, batch);
                let t = targets.select_rows(batch).transpose();
                let (loss, g) = model.loss_and_grad(&steps, &t, cfg.l2_penalty);
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                adam.tick();
                let grads = [
                    g.w_in.as_slice(),
                    g.w_rec.as_slice(),
                    g.bias.as_slice(),
                    g.w_out.as_slice(),
                    g.b_out.as_slice(),
                ];
                for (slot, (p, gr)) in model.params_mut().into_iter().zip(grads).enumerate() {
                    adam.step(slot, p, gr);
                }
            }
            let val = model.mse_on(obs, targets, monitor);
            if !val.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            if options.checkpoint == Checkpoint::LastEpoch || val < best_val {
                best_val = val;
                best_epoch = epoch;
                best = model.clone();
            }
        }
        let final_train_mse = best.mse_on(obs, targets, &train_idx);
        Ok((
            best,
            LstmReport {
                best_epoch,
                best_val_mse: best_val,
                final_train_mse,
            },
        ))
    }
}

/// Windows ending at each index in `idx`, as `LSTM_WINDOW` p x B matrices.
fn window_batch(obs: &Mat, idx: &[usize]) -> Vec<Mat> {
    (0..LSTM_WINDOW)
        .map(|s| {
            let lag = LSTM_WINDOW - 1 - s;
            let rows: Vec<usize> = idx.iter().map(|&t| t.saturating_sub(lag)).collect();
            obs.select_rows(&rows).transpose()
        })
        .collect()
}

pub fn lstm_fit(obs: &Mat, targets: &Mat, config: &TrainConfig) -> Result<LstmModel> {
    LstmModel::fit(obs, targets, &LstmOptions::new(*config)).map(|(m, _)| m)
}

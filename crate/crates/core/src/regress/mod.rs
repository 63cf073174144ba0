//! Regressors for the observation-to-latent map `f`, the covariance map `Q`
//! and the latent-to-observation map used by the extended and unscented
//! filters.

pub mod cov;
pub mod gp;
pub mod lstm;
pub mod mlp;
pub mod nw;
pub mod optim;

pub use cov::{fit_cov_function, CovFunction};
pub use gp::{gp_fit, GpConfig, GpHyper, GpModel};
pub use lstm::{lstm_fit, Checkpoint, LstmModel, LstmOptions, LstmReport, LSTM_HIDDEN, LSTM_WINDOW};
pub use mlp::{mlp_fit, Dense, MlpModel};
pub use nw::{nw_loo_mse, optimize_bandwidth, LooObjective, NwModel};

use crate::error::{Error, Result};

/// Gradient-training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// 4000 full-batch RMSProp epochs, learning rate 1e-3, l2 1e-4.
    pub fn mlp(seed: u64) -> Self {
        Self {
            epochs: 4000,
            learning_rate: 1e-3,
            l2_penalty: 1e-4,
            seed,
        }
    }

    /// 200 Adam epochs, learning rate 1e-3, l2 1e-4.
    pub fn lstm(seed: u64) -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            l2_penalty: 1e-4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::InvalidArgument(format!("l2 penalty {}", self.l2_penalty)));
        }
        Ok(())
    }
}

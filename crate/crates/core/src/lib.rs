//! Discriminative Kalman filtering and the baselines it is benchmarked
//! against (Kalman, extended and unscented Kalman filters), together with the
//! regressors, preprocessing pipeline, synthetic generators and evaluation
//! harness used for neural-decoding experiments.

pub mod error;
pub mod eval;
pub mod filters;
pub mod linalg;
pub mod preprocess;
pub mod regress;
pub mod rng;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};

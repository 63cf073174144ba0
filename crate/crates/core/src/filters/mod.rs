//! Kalman, discriminative Kalman, extended and unscented filters for a
//! linear latent process `z_i = A z_{i-1} + N(0, G)`.
//!
//! Every filter returns one [`GaussianBelief`] per observation row. Nothing in
//! this module draws random numbers.

mod dkf;
mod kalman;
mod nonlinear;

pub use dkf::{dkf_filter, dkf_filter_with, robust_dkf_filter, DkfInputs, DkfOptions, DkfRun, PdFixStrategy};
pub use kalman::{kf_filter, kf_fit};
pub use nonlinear::{ekf_filter, ukf_filter, unscented_transform, LinearObservation, ObservationModel, UtParams};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, ensure_square, symmetrize, Mat, Vector};

/// Linear-Gaussian state-space parameters.
///
/// `h` and `r` describe the observation model; the discriminative filters
/// only read `a`, `g` and `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceParams {
    pub a: Mat,
    pub g: Mat,
    pub h: Mat,
    pub r: Mat,
    /// Stationary latent covariance.
    pub s: Mat,
}

impl StateSpaceParams {
    pub fn latent_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.r.nrows()
    }

    fn check_dynamics(&self) -> Result<()> {
        ensure_square(&self.a)?;
        let d = self.a.nrows();
        for (name, m) in [("G", &self.g), ("S", &self.s)] {
            if m.shape() != (d, d) {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, latent dimension is {d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(())
    }

    fn check_observation(&self) -> Result<()> {
        self.check_dynamics()?;
        ensure_square(&self.r)?;
        if self.h.shape() != (self.r.nrows(), self.a.nrows()) {
            return Err(Error::Dimension(format!(
                "H is {}x{}, expected {}x{}",
                self.h.nrows(),
                self.h.ncols(),
                self.r.nrows(),
                self.a.nrows()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vector,
    pub cov: Mat,
}

impl GaussianBelief {
    pub fn new(mean: Vector, cov: Mat) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::Dimension(format!(
                "mean has {} entries, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    /// Zero mean with covariance `s`.
    pub fn centered(s: &Mat) -> Self {
        Self {
            mean: Vector::zeros(s.nrows()),
            cov: s.clone(),
        }
    }
}

/// Stack belief means into a T x d matrix.
pub fn belief_means(beliefs: &[GaussianBelief]) -> Mat {
    let d = beliefs.first().map_or(0, |b| b.mean.len());
    Mat::from_fn(beliefs.len(), d, |i, j| beliefs[i].mean[j])
}

pub(crate) fn check_finite(step: usize, what: &str, m: &Mat) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            step,
            msg: format!("{what} is not finite"),
        })
    }
}

/// Cholesky factor of a symmetrized covariance with one `1e-10 I` retry.
pub(crate) fn factor_with_retry(step: usize, what: &str, m: &Mat) -> Result<Mat> {
    let sym = symmetrize(m)?;
    check_finite(step, what, &sym)?;
    cholesky(&sym, 0.0)
        .or_else(|_| cholesky(&(&sym + Mat::identity(sym.nrows(), sym.ncols()) * 1e-10), 0.0))
        .map_err(|_| Error::Numeric {
            step,
            msg: format!("{what} is not positive definite"),
        })
}

/// Linear predict step.
pub(crate) fn predict(a: &Mat, g: &Mat, belief: &GaussianBelief) -> GaussianBelief {
    GaussianBelief {
        mean: a * &belief.mean,
        cov: a * &belief.cov * a.transpose() + g,
    }
}

/// Measurement update for a (linearized) observation with Jacobian `h`,
/// residual `innovation`, and noise `r`, in Joseph form.
pub(crate) fn linear_update(
    step: usize,
    prior: &GaussianBelief,
    h: &Mat,
    innovation: &Vector,
    r: &Mat,
) -> Result<GaussianBelief> {
    let pht = &prior.cov * h.transpose();
    let s = h * &pht + r;
    let l = factor_with_retry(step, "innovation covariance", &s)?;
    let gain = cholesky_solve(&l, &pht.transpose()).transpose();
    let mean = &prior.mean + &gain * innovation;
    let ikh = Mat::identity(prior.mean.len(), prior.mean.len()) - &gain * h;
    let cov = symmetrize(&(&ikh * &prior.cov * ikh.transpose() + &gain * r * gain.transpose()))?;
    check_finite(step, "posterior covariance", &cov)?;
    Ok(GaussianBelief { mean, cov })
}

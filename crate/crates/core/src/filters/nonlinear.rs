use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, symmetrize, Mat, Vector};
use crate::regress::MlpModel;

use super::{check_finite, factor_with_retry, linear_update, predict, GaussianBelief, StateSpaceParams};

/// A latent-to-observation map `x = h(z)`.
pub trait ObservationModel {
    fn latent_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn observe(&self, z: &Vector) -> Result<Vector>;
    /// `obs_dim x latent_dim` Jacobian at `z`.
    fn jacobian(&self, z: &Vector) -> Result<Mat>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearObservation(pub Mat);

impl ObservationModel for LinearObservation {
    fn latent_dim(&self) -> usize {
        self.0.ncols()
    }

    fn obs_dim(&self) -> usize {
        self.0.nrows()
    }

    fn observe(&self, z: &Vector) -> Result<Vector> {
        Ok(&self.0 * z)
    }

    fn jacobian(&self, _z: &Vector) -> Result<Mat> {
        Ok(self.0.clone())
    }
}

impl ObservationModel for MlpModel {
    fn latent_dim(&self) -> usize {
        self.input_dim()
    }

    fn obs_dim(&self) -> usize {
        self.output_dim()
    }

    fn observe(&self, z: &Vector) -> Result<Vector> {
        self.predict(z.as_slice())
    }

    fn jacobian(&self, z: &Vector) -> Result<Mat> {
        MlpModel::jacobian(self, z.as_slice())
    }
}

fn check_model(model: &dyn ObservationModel, params: &StateSpaceParams, observations: &Mat) -> Result<()> {
    params.check_dynamics()?;
    if model.latent_dim() != params.latent_dim() {
        return Err(Error::Dimension(format!(
            "observation model takes {} latents, dynamics have {}",
            model.latent_dim(),
            params.latent_dim()
        )));
    }
    if model.obs_dim() != observations.ncols() || params.r.shape() != (observations.ncols(), observations.ncols()) {
        return Err(Error::Dimension(format!(
            "observations have {} columns, model emits {}, R is {}x{}",
            observations.ncols(),
            model.obs_dim(),
            params.r.nrows(),
            params.r.ncols()
        )));
    }
    Ok(())
}

/// Extended Kalman filter linearizing the observation model at each
/// predicted mean.
pub fn ekf_filter(
    model: &dyn ObservationModel,
    params: &StateSpaceParams,
    observations: &Mat,
    init: &GaussianBelief,
) -> Result<Vec<GaussianBelief>> {
    check_model(model, params, observations)?;
    let mut belief = init.clone();
    let mut out = Vec::with_capacity(observations.nrows());
    for (i, row) in observations.row_iter().enumerate() {
        let prior = predict(&params.a, &params.g, &belief);
        let jac = model.jacobian(&prior.mean)?;
        let innovation = row.transpose() - model.observe(&prior.mean)?;
        belief = linear_update(i, &prior, &jac, &innovation, &params.r)?;
        out.push(belief.clone());
    }
    Ok(out)
}

/// Scaled unscented transform parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl UtParams {
    /// `alpha = 1`, `beta = 2`, `kappa = 3 - d`.
    pub fn classic(d: usize) -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            kappa: 3.0 - d as f64,
        }
    }

    pub fn lambda(&self, d: usize) -> f64 {
        self.alpha * self.alpha * (d as f64 + self.kappa) - d as f64
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "UT alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        if !(d as f64 + self.lambda(d) > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "UT parameters {self:?} give a non-positive spread for d = {d}"
            )));
        }
        Ok(())
    }

    /// Mean and covariance weights for the `2d + 1` sigma points.
    pub fn weights(&self, d: usize) -> (Vec<f64>, Vec<f64>) {
        let lambda = self.lambda(d);
        let n = d as f64 + lambda;
        let mut wm = vec![1.0 / (2.0 * n); 2 * d + 1];
        let mut wc = wm.clone();
        wm[0] = lambda / n;
        wc[0] = lambda / n + 1.0 - self.alpha * self.alpha + self.beta;
        (wm, wc)
    }

    /// Sigma points of `N(mean, cov)` as columns.
    pub fn sigma_points(&self, step: usize, mean: &Vector, cov: &Mat) -> Result<Mat> {
        let d = mean.len();
        let l = factor_with_retry(step, "sigma-point covariance", &(cov * (d as f64 + self.lambda(d))))?;
        let mut pts = Mat::zeros(d, 2 * d + 1);
        pts.set_column(0, mean);
        for j in 0..d {
            pts.set_column(1 + j, &(mean + l.column(j)));
            pts.set_column(1 + d + j, &(mean - l.column(j)));
        }
        Ok(pts)
    }
}

/// Propagate `N(mean, cov)` through `f`; returns the recombined mean and
/// covariance, and the sigma points with their images.
pub fn unscented_transform(
    ut: &UtParams,
    mean: &Vector,
    cov: &Mat,
    f: impl Fn(&Vector) -> Result<Vector>,
) -> Result<(Vector, Mat)> {
    ut.validate(mean.len())?;
    let pts = ut.sigma_points(0, mean, cov)?;
    let (m, c, _) = transform_points(ut, &pts, &f)?;
    Ok((m, c))
}

fn transform_points(ut: &UtParams, pts: &Mat, f: &dyn Fn(&Vector) -> Result<Vector>) -> Result<(Vector, Mat, Mat)> {
    let d = pts.nrows();
    let (wm, wc) = ut.weights(d);
    let images: Vec<Vector> = pts.column_iter().map(|c| f(&c.into_owned())).collect::<Result<_>>()?;
    let q = images[0].len();
    let mut y = Mat::zeros(q, images.len());
    for (k, img) in images.iter().enumerate() {
        y.set_column(k, img);
    }
    let mean = &y * Vector::from_vec(wm);
    let mut cov = Mat::zeros(q, q);
    for k in 0..y.ncols() {
        let dv = y.column(k) - &mean;
        cov += &dv * dv.transpose() * wc[k];
    }
    Ok((mean, cov, y))
}

/// Unscented Kalman filter; sigma points are redrawn after the predict step.
pub fn ukf_filter(
    model: &dyn ObservationModel,
    params: &StateSpaceParams,
    ut: &UtParams,
    observations: &Mat,
    init: &GaussianBelief,
) -> Result<Vec<GaussianBelief>> {
    check_model(model, params, observations)?;
    let d = params.latent_dim();
    ut.validate(d)?;
    let (_, wc) = ut.weights(d);
    let mut belief = init.clone();
    let mut out = Vec::with_capacity(observations.nrows());
    for (i, row) in observations.row_iter().enumerate() {
        let pts = ut.sigma_points(i, &belief.mean, &belief.cov)?;
        let (mean, cov, _) = transform_points(ut, &pts, &|z: &Vector| Ok(&params.a * z))?;
        let prior = GaussianBelief {
            mean,
            cov: symmetrize(&(cov + &params.g))?,
        };

        let pts = ut.sigma_points(i, &prior.mean, &prior.cov)?;
        let (x_hat, p_yy, y) = transform_points(ut, &pts, &|z: &Vector| model.observe(z))?;
        let p_yy = p_yy + &params.r;
        let mut p_xy = Mat::zeros(d, x_hat.len());
        for k in 0..pts.ncols() {
            p_xy += (pts.column(k) - &prior.mean) * (y.column(k) - &x_hat).transpose() * wc[k];
        }
        let l = factor_with_retry(i, "innovation covariance", &p_yy)?;
        let gain = cholesky_solve(&l, &p_xy.transpose()).transpose();
        let mean = &prior.mean + &gain * (row.transpose() - &x_hat);
        let cov = symmetrize(&(&prior.cov - &gain * &p_yy * gain.transpose()))?;
        check_finite(i, "posterior covariance", &cov)?;
        belief = GaussianBelief { mean, cov };
        out.push(belief.clone());
    }
    Ok(out)
}

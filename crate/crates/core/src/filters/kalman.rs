use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, sample_covariance, symmetrize, Mat};

use super::{linear_update, predict, GaussianBelief, StateSpaceParams};

/// Least-squares solution of `y ~ B x` for row-sample matrices `x`, `y`.
fn least_squares(x: &Mat, y: &Mat, what: &str) -> Result<Mat> {
    let gram = x.transpose() * x;
    let scale = gram.diagonal().amax();
    if !(scale > 0.0) {
        return Err(Error::Rank(format!("{what}: regressors are identically zero")));
    }
    let l = cholesky(&symmetrize(&gram)?, 1e-12 * scale)
        .map_err(|_| Error::Rank(format!("{what}: singular normal equations")))?;
    Ok(cholesky_solve(&l, &(x.transpose() * y)).transpose())
}

/// Supervised estimate of all state-space parameters from paired latents and
/// observations.
pub fn kf_fit(latents: &Mat, observations: &Mat) -> Result<StateSpaceParams> {
    let t = latents.nrows();
    let d = latents.ncols();
    let p = observations.ncols();
    if observations.nrows() != t {
        return Err(Error::Dimension(format!(
            "{t} latent rows vs {} observation rows",
            observations.nrows()
        )));
    }
    if t < d + p + 2 {
        return Err(Error::InsufficientData {
            actual: t,
            required: d + p + 2,
        });
    }
    let prev = latents.rows(0, t - 1).into_owned();
    let next = latents.rows(1, t - 1).into_owned();
    let a = least_squares(&prev, &next, "transition")?;
    let g = sample_covariance(&(&next - &prev * a.transpose()), 1)?;
    let h = least_squares(latents, observations, "observation")?;
    let r = sample_covariance(&(observations - latents * h.transpose()), 1)?;
    let s = sample_covariance(latents, 1)?;
    Ok(StateSpaceParams {
        a,
        g: symmetrize(&g)?,
        h,
        r: symmetrize(&r)?,
        s: symmetrize(&s)?,
    })
}

/// Standard Kalman filter; `init` is the belief before the first row.
pub fn kf_filter(params: &StateSpaceParams, observations: &Mat, init: &GaussianBelief) -> Result<Vec<GaussianBelief>> {
    params.check_observation()?;
    if observations.ncols() != params.obs_dim() {
        return Err(Error::Dimension(format!(
            "observations have {} columns, model expects {}",
            observations.ncols(),
            params.obs_dim()
        )));
    }
    let mut belief = init.clone();
    let mut out = Vec::with_capacity(observations.nrows());
    for (i, row) in observations.row_iter().enumerate() {
        let prior = predict(&params.a, &params.g, &belief);
        let innovation = row.transpose() - &params.h * &prior.mean;
        belief = linear_update(i, &prior, &params.h, &innovation, &params.r)?;
        out.push(belief.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::testutil::{random_system, simulate, stationary};
    use crate::linalg::Vector;

    #[test]
    fn recovers_transition_matrix() {
        let mut params = random_system(2, 10, 21);
        params.a = Mat::from_row_slice(2, 2, &[0.8, 0.2, -0.3, 0.7]);
        let rho = crate::linalg::spectral_radius(&params.a).unwrap();
        params.a *= 0.9 / rho;
        params.s = stationary(&params.a, &params.g);
        let (z, x) = simulate(&params, 5000, 4);
        let fit = kf_fit(&z, &x).unwrap();
        assert!((&fit.a - &params.a).norm() < 0.05, "{}", fit.a);
        assert!((&fit.h - &params.h).norm() < 0.1);
    }

    #[test]
    fn zero_latents_are_rank_deficient() {
        let z = Mat::zeros(50, 2);
        let x = Mat::from_fn(50, 3, |i, j| (i * j) as f64);
        assert!(matches!(kf_fit(&z, &x), Err(Error::Rank(_))));
    }

    #[test]
    fn noiseless_system_has_tiny_residual_covariances() {
        let a = Mat::from_row_slice(2, 2, &[0.9, -0.2, 0.2, 0.9]);
        let h = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, -1.0]);
        let mut z = Mat::zeros(200, 2);
        z.set_row(0, &Vector::from_vec(vec![3.0, -1.0]).transpose());
        for i in 1..200 {
            let next = &a * z.row(i - 1).transpose();
            z.set_row(i, &next.transpose());
        }
        let x = &z * h.transpose();
        let fit = kf_fit(&z, &x).unwrap();
        assert!(fit.g.amax() < 1e-12);
        assert!(fit.r.amax() < 1e-12);
        assert!((&fit.a - &a).amax() < 1e-9);
    }

    #[test]
    fn zero_observation_matrix_follows_dynamics() {
        let mut params = random_system(2, 3, 22);
        params.h = Mat::zeros(3, 2);
        let (_, x) = simulate(&random_system(2, 3, 23), 30, 5);
        let init = GaussianBelief::new(Vector::from_vec(vec![1.0, -2.0]), params.s.clone()).unwrap();
        let out = kf_filter(&params, &x, &init).unwrap();
        let mut mu = init.mean.clone();
        for b in &out {
            mu = &params.a * mu;
            assert!((&b.mean - &mu).amax() < 1e-12);
        }
    }

    #[test]
    fn huge_observation_noise_ignores_data() {
        let mut params = random_system(2, 3, 24);
        params.r = Mat::identity(3, 3) * 1e12;
        let (_, x) = simulate(&random_system(2, 3, 25), 50, 6);
        let init = GaussianBelief::new(Vector::from_vec(vec![0.5, 0.5]), params.s.clone()).unwrap();
        let out = kf_filter(&params, &x, &init).unwrap();
        let mut mu = init.mean.clone();
        for b in &out {
            mu = &params.a * mu;
            assert!((&b.mean - &mu).amax() < 1e-4);
        }
    }

    #[test]
    fn scalar_riccati_fixed_point() {
        let (q, r) = (0.3, 2.0);
        let one = Mat::from_element(1, 1, 1.0);
        let params = StateSpaceParams {
            a: one.clone(),
            g: one.clone() * q,
            h: one.clone(),
            r: one.clone() * r,
            s: one.clone(),
        };
        let x = Mat::from_fn(300, 1, |i, _| (i as f64).sin());
        let out = kf_filter(&params, &x, &GaussianBelief::centered(&one)).unwrap();
        // sigma^2 (sigma^2 + q + r) = (sigma^2 + q) r  =>  sigma^4 + q sigma^2 - q r = 0
        let root = (-q + (q * q + 4.0 * q * r).sqrt()) / 2.0;
        assert!((out.last().unwrap().cov[(0, 0)] - root).abs() < 1e-12);
    }

    #[test]
    fn covariances_do_not_depend_on_data() {
        let params = random_system(2, 4, 26);
        let (_, x1) = simulate(&params, 40, 7);
        let (_, x2) = simulate(&params, 40, 8);
        let init = GaussianBelief::centered(&params.s);
        let a = kf_filter(&params, &x1, &init).unwrap();
        let b = kf_filter(&params, &x2, &init).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(u.cov, v.cov);
        }
    }
}

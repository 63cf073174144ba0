use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, symmetric_pseudo_inverse, symmetrize, Mat, Tolerances, Vector};

use super::{check_finite, GaussianBelief, StateSpaceParams};

/// Precomputed conditional moments `f(X_i)` and `Q(X_i)` for a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct DkfInputs {
    f_values: Mat,
    q_values: Vec<Mat>,
}

impl DkfInputs {
    pub fn new(f_values: Mat, q_values: Vec<Mat>) -> Result<Self> {
        if f_values.nrows() != q_values.len() {
            return Err(Error::Dimension(format!(
                "{} means vs {} covariances",
                f_values.nrows(),
                q_values.len()
            )));
        }
        let d = f_values.ncols();
        if let Some((i, q)) = q_values.iter().enumerate().find(|(_, q)| q.shape() != (d, d)) {
            return Err(Error::Dimension(format!(
                "Q at row {i} is {}x{}, expected {d}x{d}",
                q.nrows(),
                q.ncols()
            )));
        }
        Ok(Self { f_values, q_values })
    }

    /// The same covariance at every step.
    pub fn with_constant_cov(f_values: Mat, q: &Mat) -> Result<Self> {
        let n = f_values.nrows();
        Self::new(f_values, vec![q.clone(); n])
    }

    pub fn len(&self) -> usize {
        self.q_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_values.is_empty()
    }

    pub fn f_values(&self) -> &Mat {
        &self.f_values
    }

    pub fn q_values(&self) -> &[Mat] {
        &self.q_values
    }

    fn f(&self, i: usize) -> Vector {
        self.f_values.row(i).transpose()
    }
}

/// What to do when `Q(X_i)^-1 - S^-1` is not positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PdFixStrategy {
    /// Replace `Q(X_i)^-1` with `(Q(X_i)^-1 + S^-1)^-1` for that step.
    #[default]
    AsPrinted,
    /// Use `Q(X_i)^-1` alone for that step, dropping the `-S^-1` term.
    DropPrior,
}

impl fmt::Display for PdFixStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PdFixStrategy::AsPrinted => "as-printed",
            PdFixStrategy::DropPrior => "drop-prior",
        })
    }
}

impl FromStr for PdFixStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" => Ok(Self::AsPrinted),
            "drop-prior" => Ok(Self::DropPrior),
            other => Err(Error::Config(format!(
                "unknown PD fix strategy {other:?} (expected as-printed or drop-prior)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DkfOptions {
    pub strategy: PdFixStrategy,
    pub tol: Tolerances,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DkfRun {
    pub beliefs: Vec<GaussianBelief>,
    /// Steps at which the PD fix was applied.
    pub pd_fixes: usize,
}

/// Combine the predicted belief with a precision term `p` and information
/// vector `eta`: `Sigma = (M^+ + p)^+`, `mu = Sigma (M^+ v + eta)`.
fn combine(step: usize, m_pinv: &Mat, v: &Vector, p: &Mat, eta: &Vector, tol: &Tolerances) -> Result<GaussianBelief> {
    let precision = m_pinv + p;
    check_finite(step, "posterior precision", &precision)?;
    let cov = symmetric_pseudo_inverse(&precision, tol)?;
    let mean = &cov * (m_pinv * v + eta);
    check_finite(step, "posterior covariance", &cov)?;
    if !mean.iter().all(|x| x.is_finite()) {
        return Err(Error::Numeric {
            step,
            msg: "posterior mean is not finite".into(),
        });
    }
    Ok(GaussianBelief { mean, cov })
}

/// Pseudo-inverse of a symmetric matrix, symmetrized so that the precision
/// and the information vector see the same matrix.
fn pinv_at(step: usize, what: &str, m: &Mat, tol: &Tolerances) -> Result<Mat> {
    check_finite(step, what, m)?;
    symmetric_pseudo_inverse(m, tol)
}

fn check_inputs(params: &StateSpaceParams, inputs: &DkfInputs) -> Result<()> {
    params.check_dynamics()?;
    if !inputs.is_empty() && inputs.f_values.ncols() != params.latent_dim() {
        return Err(Error::Dimension(format!(
            "f has {} columns, latent dimension is {}",
            inputs.f_values.ncols(),
            params.latent_dim()
        )));
    }
    Ok(())
}

/// Discriminative Kalman filter with the default options.
pub fn dkf_filter(params: &StateSpaceParams, inputs: &DkfInputs) -> Result<Vec<GaussianBelief>> {
    dkf_filter_with(params, inputs, &DkfOptions::default()).map(|r| r.beliefs)
}

pub fn dkf_filter_with(params: &StateSpaceParams, inputs: &DkfInputs, options: &DkfOptions) -> Result<DkfRun> {
    check_inputs(params, inputs)?;
    let tol = &options.tol;
    if !is_positive_definite(&symmetrize(&params.s)?, tol)? {
        return Err(Error::NotPositiveDefinite("stationary covariance S".into()));
    }
    let s_pinv = symmetric_pseudo_inverse(&params.s, tol)?;
    let mut belief = GaussianBelief::centered(&params.s);
    let mut beliefs = Vec::with_capacity(inputs.len());
    let mut pd_fixes = 0;
    for i in 0..inputs.len() {
        let v = &params.a * &belief.mean;
        let m = &params.a * &belief.cov * params.a.transpose() + &params.g;
        let m_pinv = pinv_at(i, "predicted covariance", &m, tol)?;
        let mut q_pinv = pinv_at(i, "Q(x)", &inputs.q_values[i], tol)?;
        let diff = &q_pinv - &s_pinv;
        let precision = if is_positive_definite(&diff, tol)? {
            diff
        } else {
            pd_fixes += 1;
            match options.strategy {
                PdFixStrategy::AsPrinted => {
                    q_pinv = symmetric_pseudo_inverse(&(&q_pinv + &s_pinv), tol)?;
                    &q_pinv - &s_pinv
                }
                PdFixStrategy::DropPrior => q_pinv.clone(),
            }
        };
        let eta = &q_pinv * inputs.f(i);
        belief = combine(i, &m_pinv, &v, &precision, &eta, tol)?;
        beliefs.push(belief.clone());
    }
    Ok(DkfRun { beliefs, pd_fixes })
}

/// Robust variant: the `-S^-1` term is dropped and the recursion starts from
/// `(f(X_1), Q(X_1))`.
pub fn robust_dkf_filter(params: &StateSpaceParams, inputs: &DkfInputs) -> Result<Vec<GaussianBelief>> {
    check_inputs(params, inputs)?;
    let tol = Tolerances::default();
    let mut beliefs: Vec<GaussianBelief> = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let q = symmetrize(&inputs.q_values[i])?;
        let belief = match beliefs.last() {
            None => {
                check_finite(i, "Q(x)", &q)?;
                GaussianBelief {
                    mean: inputs.f(0),
                    cov: q,
                }
            }
            Some(prev) => {
                let v = &params.a * &prev.mean;
                let m = &params.a * &prev.cov * params.a.transpose() + &params.g;
                let m_pinv = pinv_at(i, "predicted covariance", &m, &tol)?;
                let q_pinv = pinv_at(i, "Q(x)", &q, &tol)?;
                let eta = &q_pinv * inputs.f(i);
                combine(i, &m_pinv, &v, &q_pinv, &eta, &tol)?
            }
        };
        beliefs.push(belief);
    }
    Ok(beliefs)
}

//! Gaussian-process regression with an isotropic squared-exponential kernel
//! shared across output dimensions.
//!
//! Hyperparameters maximize the log marginal likelihood by normalized
//! gradient ascent on log-parameters with backtracking, restarted from
//! several seeded initializations. On large training sets the search runs on
//! a seeded random subset; the posterior always conditions on every training
//! point.

use nalgebra::linalg::Cholesky;
use nalgebra::Dyn;
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
}

impl GpHyper {
    fn from_log(t: [f64; 3]) -> Self {
        Self {
            signal_variance: t[0].exp(),
            lengthscale: t[1].exp(),
            noise_variance: t[2].exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.signal_variance) && ok(self.lengthscale) && ok(self.noise_variance) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("GP hyperparameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Largest subset used for the hyperparameter search.
    pub hyperopt_points: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 100,
            hyperopt_points: 500,
            seed: 0,
        }
    }
}

/// Jitter added to the diagonal when the Gram factorization fails.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
/// Lower bound on the learned noise variance.
const MIN_NOISE: f64 = 1e-10;

fn pairwise_sq_dists(xt: &Mat) -> Mat {
    let m = xt.ncols();
    let mut d = Mat::zeros(m, m);
    for j in 0..m {
        for i in (j + 1)..m {
            let v = (xt.column(i) - xt.column(j)).norm_squared();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

fn rbf_gram(d2: &Mat, hyper: &GpHyper) -> Mat {
    let inv = 1.0 / (2.0 * hyper.lengthscale * hyper.lengthscale);
    d2.map(|v| hyper.signal_variance * (-v * inv).exp())
}

/// Cholesky of `k + (noise + jitter) I`, escalating the jitter up to 1e-6.
fn factor_with_jitter(k_rbf: &Mat, noise: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    for jitter in JITTER_LADDER {
        let mut k = k_rbf.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += noise + jitter;
        }
        if let Some(ch) = Cholesky::new(k) {
            return Ok((ch, jitter));
        }
    }
    Err(Error::Fit("Gram matrix not positive definite after jitter 1e-6".into()))
}

/// Log marginal likelihood of `targets` (columns share the kernel) and its
/// gradient with respect to `(ln sv, ln l, ln noise)`.
fn lml_and_grad(d2: &Mat, targets: &Mat, hyper: &GpHyper) -> Result<(f64, [f64; 3])> {
    let m = targets.nrows();
    let q = targets.ncols() as f64;
    let k_rbf = rbf_gram(d2, hyper);
    let (ch, _) = factor_with_jitter(&k_rbf, hyper.noise_variance)?;
    let alpha = ch.solve(targets);
    let log_det: f64 = 2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let fit: f64 = targets.component_mul(&alpha).sum();
    let lml = -0.5 * fit - 0.5 * q * log_det - 0.5 * q * m as f64 * (2.0 * std::f64::consts::PI).ln();

    let k_inv = ch.inverse();
    // W = alpha alpha^T - q K^-1; dL/dt = 0.5 * sum(W o dK/dt).
    let w = &alpha * alpha.transpose() - k_inv * q;
    let inv_l2 = 1.0 / (hyper.lengthscale * hyper.lengthscale);
    let mut g = [0.0; 3];
    for j in 0..m {
        for i in 0..m {
            let kr = k_rbf[(i, j)];
            let wij = w[(i, j)];
            g[0] += wij * kr;
            g[1] += wij * kr * d2[(i, j)] * inv_l2;
        }
        g[2] += w[(j, j)] * hyper.noise_variance;
    }
    Ok((lml, g.map(|v| 0.5 * v)))
}

/// Log marginal likelihood of `targets` given `inputs` under `hyper`.
pub fn log_marginal_likelihood(inputs: &Mat, targets: &Mat, hyper: &GpHyper) -> Result<f64> {
    hyper.validate()?;
    let d2 = pairwise_sq_dists(&inputs.transpose());
    lml_and_grad(&d2, targets, hyper).map(|(l, _)| l)
}

struct Bounds {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Bounds {
    fn clamp(&self, t: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|k| t[k].clamp(self.lo[k], self.hi[k]))
    }
}

/// Ascend from `start`; returns the final log-parameters and likelihood,
/// never worse than the start.
fn ascend(d2: &Mat, targets: &Mat, start: [f64; 3], bounds: &Bounds, max_iters: usize) -> Result<([f64; 3], f64)> {
    let mut theta = bounds.clamp(start);
    let (mut lml, mut grad) = lml_and_grad(d2, targets, &GpHyper::from_log(theta))?;
    let mut step = 0.5;
    for _ in 0..max_iters {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        let mut accepted = false;
        while step > 1e-8 {
            let cand = bounds.clamp([0, 1, 2].map(|k| theta[k] + step * grad[k] / norm));
            match lml_and_grad(d2, targets, &GpHyper::from_log(cand)) {
                Ok((l, g)) if l.is_finite() && l > lml => {
                    let gain = l - lml;
                    theta = cand;
                    lml = l;
                    grad = g;
                    accepted = true;
                    step = (step * 2.0).min(2.0);
                    if gain < 1e-9 * lml.abs().max(1.0) {
                        return Ok((theta, lml));
                    }
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            break;
        }
    }
    Ok((theta, lml))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    /// p x M.
    inputs_t: Mat,
    /// M x q, `(K + noise I)^-1 Y`.
    alpha: Mat,
    hyper: GpHyper,
    /// Jitter that was needed on top of the noise variance.
    jitter: f64,
}

/// Outcome of one restart, reported for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartTrace {
    pub initial: GpHyper,
    pub initial_lml: f64,
    pub best: GpHyper,
    pub best_lml: f64,
}

impl GpModel {
    /// Condition on the data under fixed hyperparameters.
    pub fn with_hyper(inputs: &Mat, targets: &Mat, hyper: GpHyper) -> Result<Self> {
        hyper.validate()?;
        if inputs.nrows() != targets.nrows() || inputs.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "{} inputs vs {} targets",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        let inputs_t = inputs.transpose();
        let k_rbf = rbf_gram(&pairwise_sq_dists(&inputs_t), &hyper);
        let (ch, jitter) = factor_with_jitter(&k_rbf, hyper.noise_variance)?;
        let alpha = ch.solve(targets);
        Ok(Self {
            inputs_t,
            alpha,
            hyper,
            jitter,
        })
    }

    /// Maximize the marginal likelihood, then condition on all data.
    pub fn fit(inputs: &Mat, targets: &Mat, config: &GpConfig) -> Result<Self> {
        Self::fit_traced(inputs, targets, config).map(|(m, _)| m)
    }

    pub fn fit_traced(inputs: &Mat, targets: &Mat, config: &GpConfig) -> Result<(Self, Vec<RestartTrace>)> {
        let m = inputs.nrows();
        if m < 3 {
            return Err(Error::InsufficientData { actual: m, required: 3 });
        }
        if targets.nrows() != m {
            return Err(Error::Dimension(format!("{m} inputs vs {} targets", targets.nrows())));
        }
        let mut rng = seeded(config.seed);
        let (sub_x, sub_y) = if m > config.hyperopt_points.max(3) {
            let mut idx = sample(&mut rng, m, config.hyperopt_points.max(3)).into_vec();
            idx.sort_unstable();
            (inputs.select_rows(&idx), targets.select_rows(&idx))
        } else {
            (inputs.clone(), targets.clone())
        };
        let d2 = pairwise_sq_dists(&sub_x.transpose());

        let var_y = {
            let n = sub_y.nrows() as f64;
            let v = sub_y
                .column_iter()
                .map(|c| {
                    let mean = c.mean();
                    c.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n
                })
                .sum::<f64>()
                / sub_y.ncols().max(1) as f64;
            if v > 0.0 {
                v
            } else {
                1.0
            }
        };
        let mut dists: Vec<f64> = (0..d2.ncols())
            .flat_map(|j| ((j + 1)..d2.nrows()).map(move |i| (i, j)))
            .map(|(i, j)| d2[(i, j)].sqrt())
            .filter(|v| *v > 0.0)
            .collect();
        if dists.is_empty() {
            return Err(Error::DegenerateInput("all GP inputs coincide".into()));
        }
        let mid = dists.len() / 2;
        let median = *dists.select_nth_unstable_by(mid, f64::total_cmp).1;

        let bounds = Bounds {
            lo: [(1e-6 * var_y).ln(), (1e-3 * median).ln(), MIN_NOISE.ln()],
            hi: [(1e6 * var_y).ln(), (1e3 * median).ln(), (1e2 * var_y).ln()],
        };
        let mut traces = Vec::with_capacity(config.restarts.max(1));
        for _ in 0..config.restarts.max(1) {
            let start = bounds.clamp([
                var_y.ln() + rng.random_range(-1.0..1.0),
                median.ln() + rng.random_range(-1.5..1.5),
                (0.1 * var_y).ln() + rng.random_range(-2.0..2.0),
            ]);
            let (initial_lml, _) = lml_and_grad(&d2, &sub_y, &GpHyper::from_log(start))?;
            let (theta, lml) = ascend(&d2, &sub_y, start, &bounds, config.max_iters)?;
            traces.push(RestartTrace {
                initial: GpHyper::from_log(start),
                initial_lml,
                best: GpHyper::from_log(theta),
                best_lml: lml,
            });
        }
        let best = traces
            .iter()
            .fold(None::<&RestartTrace>, |acc, t| match acc {
                Some(a) if a.best_lml >= t.best_lml => Some(a),
                _ => Some(t),
            })
            .expect("at least one restart");
        let model = Self::with_hyper(inputs, targets, best.best)?;
        Ok((model, traces))
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn input_dim(&self) -> usize {
        self.inputs_t.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn inputs(&self) -> Mat {
        self.inputs_t.transpose()
    }

    pub fn alpha(&self) -> &Mat {
        &self.alpha
    }

    /// Rebuild from stored parts (used by model files).
    pub fn from_parts(inputs: &Mat, alpha: Mat, hyper: GpHyper, jitter: f64) -> Result<Self> {
        hyper.validate()?;
        if inputs.nrows() != alpha.nrows() {
            return Err(Error::Dimension("GP inputs and weights disagree".into()));
        }
        Ok(Self {
            inputs_t: inputs.transpose(),
            alpha,
            hyper,
            jitter,
        })
    }

    /// Posterior mean `k(query, X) (K + noise I)^-1 Y`.
    pub fn predict(&self, query: &[f64]) -> Result<Vector> {
        if query.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "GP expects {} inputs, got {}",
                self.input_dim(),
                query.len()
            )));
        }
        let q = Vector::from_column_slice(query);
        let inv = 1.0 / (2.0 * self.hyper.lengthscale * self.hyper.lengthscale);
        let k = Vector::from_iterator(
            self.inputs_t.ncols(),
            self.inputs_t
                .column_iter()
                .map(|x| self.hyper.signal_variance * (-(x - &q).norm_squared() * inv).exp()),
        );
        Ok(self.alpha.transpose() * k)
    }

    pub fn predict_rows(&self, queries: &Mat) -> Result<Mat> {
        let mut out = Mat::zeros(queries.nrows(), self.output_dim());
        for (i, r) in queries.row_iter().enumerate() {
            let p = self.predict(&r.iter().copied().collect::<Vec<_>>())?;
            out.set_row(i, &p.transpose());
        }
        Ok(out)
    }
}

pub fn gp_fit(inputs: &Mat, targets: &Mat, config: &GpConfig) -> Result<GpModel> {
    GpModel::fit(inputs, targets, config)
}

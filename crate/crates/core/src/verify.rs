//! Self-checks against closed-form or brute-force oracles.
//!
//! Each `*_gap` / `*_error` function returns the raw discrepancy so callers
//! can apply their own thresholds; [`fast_suite`] bundles the quick ones with
//! the default thresholds.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::eval::{maae, nrmse};
use crate::filters::{
    dkf_filter, ekf_filter, kf_filter, ukf_filter, DkfInputs, GaussianBelief, LinearObservation, UtParams,
};
use crate::linalg::Mat;
use crate::regress::{nw_loo_mse, optimize_bandwidth, Dense, LooObjective, LstmModel, MlpModel, NwModel};
use crate::rng::seeded;
use crate::synth::{exact_posterior_moments, gen_lgss, random_stable_params, LgssSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn below(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            passed: value < limit,
            detail: format!("{value:.3e} (limit {limit:.0e})"),
        }
    }

    fn failed(name: &'static str, err: crate::Error) -> Self {
        Self {
            name,
            passed: false,
            detail: err.to_string(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {:<28} {}", self.name, self.detail)
    }
}

/// Largest discrepancies between two belief sequences.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BeliefGap {
    /// Max-abs difference of means.
    pub mean: f64,
    /// Largest Frobenius norm of a covariance difference.
    pub cov: f64,
}

impl BeliefGap {
    fn between(a: &[GaussianBelief], b: &[GaussianBelief]) -> Self {
        a.iter().zip(b).fold(Self::default(), |acc, (x, y)| Self {
            mean: acc.mean.max((&x.mean - &y.mean).amax()),
            cov: acc.cov.max((&x.cov - &y.cov).norm()),
        })
    }

    fn max(self, other: Self) -> Self {
        Self {
            mean: self.mean.max(other.mean),
            cov: self.cov.max(other.cov),
        }
    }
}

fn lgss_instance(seed: u64, obs_dim: usize, length: usize) -> Result<(crate::filters::StateSpaceParams, Mat)> {
    let params = random_stable_params(2, obs_dim, seed)?;
    let data = gen_lgss(&LgssSpec {
        params,
        length,
        seed,
        initial: None,
    })?;
    Ok((data.params, data.observations))
}

/// DKF fed the exact conditional moments against the Kalman filter on
/// `instances` random stable systems (d = 2, p = 10).
pub fn dkf_kf_gap(instances: usize, length: usize) -> Result<BeliefGap> {
    let mut gap = BeliefGap::default();
    for seed in 0..instances as u64 {
        let (params, x) = lgss_instance(seed, 10, length)?;
        let (k, q) = exact_posterior_moments(&params)?;
        let inputs = DkfInputs::with_constant_cov(&x * k.transpose(), &q)?;
        let dkf = dkf_filter(&params, &inputs)?;
        let kf = kf_filter(&params, &x, &GaussianBelief::centered(&params.s))?;
        gap = gap.max(BeliefGap::between(&dkf, &kf));
    }
    Ok(gap)
}

/// EKF and UKF with a linear observation map against the Kalman filter.
pub fn linear_collapse_gap(seeds: usize, length: usize) -> Result<(BeliefGap, BeliefGap)> {
    let (mut ekf_gap, mut ukf_gap) = (BeliefGap::default(), BeliefGap::default());
    for seed in 0..seeds as u64 {
        let (params, x) = lgss_instance(1000 + seed, 10, length)?;
        let init = GaussianBelief::centered(&params.s);
        let model = LinearObservation(params.h.clone());
        let kf = kf_filter(&params, &x, &init)?;
        let ekf = ekf_filter(&model, &params, &x, &init)?;
        let ukf = ukf_filter(&model, &params, &UtParams::classic(2), &x, &init)?;
        ekf_gap = ekf_gap.max(BeliefGap::between(&ekf, &kf));
        ukf_gap = ukf_gap.max(BeliefGap::between(&ukf, &kf));
    }
    Ok((ekf_gap, ukf_gap))
}

/// nRMSE of the zero predictor on random nonzero truth.
pub fn zero_predictor_nrmse(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let truth = Mat::from_fn(1000, 2, |_, _| rng.random_range(-3.0..3.0));
    nrmse(&Mat::zeros(1000, 2), &truth)
}

/// MAAE of uniformly random directions against random truth.
pub fn random_direction_maae(samples: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut unit = |_: usize| {
        let th: f64 = rng.random_range(0.0..TAU);
        [th.cos(), th.sin()]
    };
    let truth: Vec<[f64; 2]> = (0..samples).map(&mut unit).collect();
    let pred: Vec<[f64; 2]> = (0..samples).map(&mut unit).collect();
    let as_mat = |v: &[[f64; 2]]| Mat::from_fn(v.len(), 2, |i, j| v[i][j]);
    maae(&as_mat(&pred), &as_mat(&truth))
}

fn brute_force_loo(x: &Mat, y: &Mat, h: f64) -> Result<f64> {
    let m = x.nrows();
    let mut total = 0.0;
    for i in 0..m {
        let keep: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        let model = NwModel::new(&x.select_rows(&keep), &y.select_rows(&keep), h)?;
        let q: Vec<f64> = x.row(i).iter().copied().collect();
        total += (y.row(i).transpose() - model.predict(&q)?).norm_squared();
    }
    Ok(total / m as f64)
}

/// Closed-form leave-one-out error against explicit refits, over random
/// problems with up to 50 samples and a spread of bandwidths.
pub fn nw_loo_gap(cases: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let m = rng.random_range(2..=50);
        let p = rng.random_range(1..=4);
        let x = Mat::from_fn(m, p, |_, _| rng.random_range(-2.0..2.0));
        let y = Mat::from_fn(m, 2, |_, _| rng.random_range(-1.0..1.0));
        let h = 10f64.powf(rng.random_range(-0.7..0.5));
        worst = worst.max((nw_loo_mse(&x, &y, h)? - brute_force_loo(&x, &y, h)?).abs());
    }
    Ok(worst)
}

/// Relative excess of the searched bandwidth's LOO error over the best of a
/// 1000-point log grid on the same range, worst case over a few problems.
pub fn bandwidth_excess(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let noise = Normal::new(0.0, 0.1).expect("valid normal");
    let mut worst: f64 = 0.0;
    for case in 0..3 {
        let (m, p) = [(200, 1), (150, 2), (120, 3)][case];
        let x = Mat::from_fn(m, p, |_, _| rng.random_range(-3.0..3.0));
        let y = Mat::from_fn(m, 1, |i, _| {
            x.row(i).iter().map(|v| v.sin()).sum::<f64>() + noise.sample(&mut rng)
        });
        let obj = LooObjective::new(&x, &y)?;
        let h = optimize_bandwidth(&x, &y)?;
        let d = obj.median_pairwise_distance();
        let (lo, hi) = ((1e-3 * d).ln(), (10.0 * d).ln());
        let grid = (0..1000)
            .map(|k| obj.mse((lo + (hi - lo) * k as f64 / 999.0).exp()))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(obj.mse(h) / grid - 1.0);
    }
    Ok(worst)
}

fn relative_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-7)
}

/// Worst relative error of the MLP parameter gradient against central
/// differences, on a 3-10-10-2 network.
pub fn mlp_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let model = MlpModel::init(&[3, 10, 10, 2], &mut rng)?;
    let x = Mat::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
    let y = Mat::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
    let l2 = 1e-3;
    let (_, grads) = model.loss_and_grad(&x, &y, l2);
    let h = 1e-5;
    let loss_with =
        |layers: Vec<Dense>| -> Result<f64> { Ok(MlpModel::from_layers(layers)?.loss_and_grad(&x, &y, l2).0) };
    let mut worst: f64 = 0.0;
    for (k, g) in grads.iter().enumerate() {
        for (slot, analytic) in g.weights.iter().chain(g.bias.iter()).enumerate() {
            let bump = |delta: f64| {
                let mut layers = model.layers().to_vec();
                let w = layers[k].weights.len();
                if slot < w {
                    layers[k].weights.as_mut_slice()[slot] += delta;
                } else {
                    layers[k].bias[slot - w] += delta;
                }
                layers
            };
            let fd = (loss_with(bump(h))? - loss_with(bump(-h))?) / (2.0 * h);
            worst = worst.max(relative_error(fd, *analytic));
        }
    }
    Ok(worst)
}

/// Worst relative error of the LSTM parameter gradient (backpropagation
/// through the 3-step window) against central differences.
pub fn lstm_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut model = LstmModel::init(4, 5, 2, &mut rng);
    let obs = Mat::from_fn(8, 4, |_, _| rng.random_range(-1.0..1.0));
    let y = Mat::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
    let l2 = 1e-3;
    let (_, grad) = model.loss_and_gradient(&obs, &y, l2)?;
    let theta = model.parameters();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        let mut t = theta.clone();
        t[k] = theta[k] + h;
        model.set_parameters(&t)?;
        let fp = model.loss_and_gradient(&obs, &y, l2)?.0;
        t[k] = theta[k] - h;
        model.set_parameters(&t)?;
        let fm = model.loss_and_gradient(&obs, &y, l2)?.0;
        worst = worst.max(relative_error((fp - fm) / (2.0 * h), grad[k]));
    }
    Ok(worst)
}

/// The quick checks run by `dkf-bench verify`.
pub fn fast_suite() -> Vec<Check> {
    let mut out = Vec::new();
    match dkf_kf_gap(100, 1000) {
        Ok(g) => {
            out.push(Check::below("dkf-kf mean", g.mean, 1e-8));
            out.push(Check::below("dkf-kf covariance", g.cov, 1e-8));
        }
        Err(e) => out.push(Check::failed("dkf-kf", e)),
    }
    match linear_collapse_gap(20, 1000) {
        Ok((ekf, ukf)) => {
            out.push(Check::below("ekf-kf mean", ekf.mean, 1e-6));
            out.push(Check::below("ukf-kf mean", ukf.mean, 1e-6));
            out.push(Check::below("ukf-kf covariance", ukf.cov, 1e-6));
        }
        Err(e) => out.push(Check::failed("linear collapse", e)),
    }
    let scalar = |name, r: Result<f64>, target: f64, limit: f64| match r {
        Ok(v) => Check {
            name,
            passed: (v - target).abs() <= limit,
            detail: format!("{v:.6} (target {target:.6} +/- {limit:.0e})"),
        },
        Err(e) => Check::failed(name, e),
    };
    out.push(scalar("zero-predictor nrmse", zero_predictor_nrmse(1), 1.0, 1e-12));
    out.push(scalar(
        "random-direction maae",
        random_direction_maae(100_000, 2),
        FRAC_PI_2,
        0.02,
    ));
    let bound = |name, r: Result<f64>, limit: f64| match r {
        Ok(v) => Check::below(name, v, limit),
        Err(e) => Check::failed(name, e),
    };
    out.push(bound("nw loo vs refit", nw_loo_gap(20, 3), 1e-10));
    out.push(bound("mlp gradient", mlp_gradient_error(4), 1e-4));
    out.push(bound("lstm gradient", lstm_gradient_error(5), 1e-4));
    out
}

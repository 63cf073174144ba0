//! Synthetic ground-truth generators.
//!
//! [`gen_lgss`] draws from a linear-Gaussian state-space model whose
//! conditional moments are known in closed form ([`exact_posterior_moments`]).
//! [`gen_cosine_tuning`] produces raw spike trains from rectified-linear
//! velocity tuning, to be run through the same preprocessing as recorded data.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::filters::StateSpaceParams;
use crate::linalg::{
    cholesky, is_positive_definite, psd_factor, solve_spd, spectral_radius, symmetrize, Mat, SpdMat, Tolerances, Vector,
};
use crate::preprocess::{ProcessedTrial, SpikeEvents, VelocitySeries};
use crate::rng::{derive_seed, seeded, stream};

/// Solve `S = A S A^T + G` through the vectorized linear system
/// `(I - A (x) A) vec(S) = vec(G)`.
pub fn stationary_cov(a: &Mat, g: &Mat) -> Result<SpdMat> {
    let rho = spectral_radius(a)?;
    if rho >= 1.0 {
        return Err(Error::Instability(rho));
    }
    let d = a.nrows();
    if g.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "G is {}x{}, A is {d}x{d}",
            g.nrows(),
            g.ncols()
        )));
    }
    let system = Mat::identity(d * d, d * d) - a.kronecker(a);
    let rhs = Vector::from_column_slice(g.as_slice());
    let vec_s = system.lu().solve(&rhs).ok_or_else(|| Error::Numeric {
        step: 0,
        msg: "stationary covariance system is singular".into(),
    })?;
    SpdMat::symmetric_part(&Mat::from_column_slice(d, d, vec_s.as_slice()))
}

/// A random stable system: `A` rescaled to spectral radius 0.9, `G` and `R`
/// shifted Gram matrices, entries of `H` uniform in [-1, 1].
pub fn random_stable_params(latent_dim: usize, obs_dim: usize, seed: u64) -> Result<StateSpaceParams> {
    if latent_dim == 0 || obs_dim == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    let (d, p) = (latent_dim, obs_dim);
    let mut rng = seeded(derive_seed(seed, stream::SYNTH));
    let mut uniform = |r: usize, c: usize, half: f64| Mat::from_fn(r, c, |_, _| rng.random_range(-half..half));
    let mut a = uniform(d, d, 1.0);
    let rho = spectral_radius(&a)?;
    a *= 0.9 / rho.max(1e-3);
    let bg = uniform(d, d, 1.0);
    let g = &bg * bg.transpose() + Mat::identity(d, d) * 0.1;
    let h = uniform(p, d, 1.0);
    let br = uniform(p, p, 0.5);
    let r = &br * br.transpose() + Mat::identity(p, p) * 0.5;
    let s = stationary_cov(&a, &g)?.into_inner();
    Ok(StateSpaceParams { a, g, h, r, s })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LgssSpec {
    /// `s` is ignored; the stationary covariance is recomputed from `a`, `g`.
    pub params: StateSpaceParams,
    pub length: usize,
    pub seed: u64,
    /// Fixed first latent instead of a stationary draw.
    pub initial: Option<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LgssDataset {
    pub latents: Mat,
    pub observations: Mat,
    /// Parameters with `s` set to the stationary covariance.
    pub params: StateSpaceParams,
}

impl LgssDataset {
    pub fn into_trial(self, id: &str, bin_width: f64) -> Result<ProcessedTrial> {
        ProcessedTrial::new(id, self.observations, self.latents, bin_width)
    }
}

/// `z_0 ~ N(0, S)`, `z_i = A z_{i-1} + N(0, G)`, `x_i = H z_i + N(0, R)` for
/// `i = 0..T`.
pub fn gen_lgss(spec: &LgssSpec) -> Result<LgssDataset> {
    let p = &spec.params;
    let d = p.a.nrows();
    let obs = p.h.nrows();
    if p.h.ncols() != d || p.r.shape() != (obs, obs) {
        return Err(Error::Dimension("H and R do not match A".into()));
    }
    let s = stationary_cov(&p.a, &p.g)?.into_inner();
    let lg = psd_factor(&p.g)?;
    let lr = psd_factor(&p.r)?;
    let mut rng = seeded(derive_seed(spec.seed, stream::SYNTH));
    let mut normal = |n: usize| Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let mut z = match &spec.initial {
        Some(z0) if z0.len() == d => z0.clone(),
        Some(z0) => return Err(Error::Dimension(format!("initial latent has {} entries", z0.len()))),
        None => psd_factor(&s)? * normal(d),
    };
    let mut latents = Mat::zeros(spec.length, d);
    let mut observations = Mat::zeros(spec.length, obs);
    for i in 0..spec.length {
        if i > 0 {
            z = &p.a * &z + &lg * normal(d);
        }
        let x = &p.h * &z + &lr * normal(obs);
        latents.set_row(i, &z.transpose());
        observations.set_row(i, &x.transpose());
    }
    Ok(LgssDataset {
        latents,
        observations,
        params: StateSpaceParams { s, ..p.clone() },
    })
}

/// Exact `E[z | x] = K x` and `Cov[z | x] = Q` under `z ~ N(0, S)`,
/// `x | z ~ N(H z, R)`.
pub fn exact_posterior_moments(params: &StateSpaceParams) -> Result<(Mat, SpdMat)> {
    if !is_positive_definite(&symmetrize(&params.s)?, &Tolerances::default())? {
        return Err(Error::NotPositiveDefinite("S".into()));
    }
    cholesky(&symmetrize(&params.r)?, 0.0).map_err(|_| Error::NotPositiveDefinite("R".into()))?;
    let hs = &params.h * &params.s;
    let cov_x = &hs * params.h.transpose() + &params.r;
    let k = solve_spd(&symmetrize(&cov_x)?, &hs)?.transpose();
    let q = SpdMat::symmetric_part(&(&params.s - &k * &hs))?;
    Ok((k, q))
}

/// Cosine-tuned Poisson population driven by a 2-dim AR(1) velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningSpec {
    /// Unit preferred directions, one per neuron.
    pub preferred: Vec<[f64; 2]>,
    /// Rate offsets in spikes/s. Negative values act as firing thresholds,
    /// since rates are rectified at zero.
    pub baseline: Vec<f64>,
    /// Spikes/s per unit of velocity along the preferred direction.
    pub modulation: Vec<f64>,
    /// Standard deviation (spikes/s) of independent per-step rate noise.
    pub rate_noise: f64,
    /// Velocity grid spacing in seconds.
    pub fine_dt: f64,
    /// Velocity dynamics on the fine grid.
    pub a: Mat,
    pub g: Mat,
    /// Number of 100 ms samples.
    pub length: usize,
    pub seed: u64,
    /// Hold the velocity at this value instead of simulating it.
    pub fixed_latent: Option<[f64; 2]>,
}

/// Observation samples per second of the processed output.
const SAMPLES_PER_SECOND: f64 = 10.0;

impl TuningSpec {
    /// Randomly drawn tuning for `neurons` cells: uniform preferred angles,
    /// offsets in [-10, -5) and depths in [50, 100) spikes/s, so every cell is
    /// silent for well over half of all directions; a rotating velocity with
    /// unit stationary covariance on a 10 ms grid.
    pub fn random(neurons: usize, length: usize, seed: u64) -> Self {
        let mut rng = seeded(derive_seed(seed, stream::TUNING));
        let preferred = (0..neurons)
            .map(|_| {
                let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                [th.cos(), th.sin()]
            })
            .collect();
        let baseline = (0..neurons).map(|_| rng.random_range(-10.0..-5.0)).collect();
        let modulation = (0..neurons).map(|_| rng.random_range(50.0..100.0)).collect();
        let (rho, theta) = (0.995_f64, 0.035_f64);
        let a = Mat::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]) * rho;
        let g = Mat::identity(2, 2) * (1.0 - rho * rho);
        Self {
            preferred,
            baseline,
            modulation,
            rate_noise: 0.0,
            fine_dt: 0.01,
            a,
            g,
            length,
            seed,
            fixed_latent: None,
        }
    }

    pub fn neuron_count(&self) -> usize {
        self.preferred.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.neuron_count();
        if n < 2 || self.baseline.len() != n || self.modulation.len() != n {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 neurons with matching tuning vectors, got {n}/{}/{}",
                self.baseline.len(),
                self.modulation.len()
            )));
        }
        let per_sample = 1.0 / (SAMPLES_PER_SECOND * self.fine_dt);
        if !(self.fine_dt > 0.0) || (per_sample - per_sample.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "fine step {} must divide 100 ms",
                self.fine_dt
            )));
        }
        if self.baseline.iter().chain(&self.modulation).any(|v| !v.is_finite()) || !(self.rate_noise >= 0.0) {
            return Err(Error::InvalidArgument("tuning values must be finite".into()));
        }
        if self.a.shape() != (2, 2) || self.g.shape() != (2, 2) {
            return Err(Error::Dimension("velocity dynamics must be 2x2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikingDataset {
    pub events: SpikeEvents,
    pub velocities: VelocitySeries,
}

/// Velocity is linear between grid samples, so each neuron's rectified-linear
/// rate is convex on every grid step and bounded by its endpoint values. Spikes
/// come from thinning a homogeneous process at that bound.
pub fn gen_cosine_tuning(spec: &TuningSpec) -> Result<SpikingDataset> {
    spec.validate()?;
    let steps_per_sample = (1.0 / (SAMPLES_PER_SECOND * spec.fine_dt)).round() as usize;
    let n_grid = spec.length * steps_per_sample;
    let mut rng = seeded(derive_seed(spec.seed, stream::SYNTH));

    let mut values = Vec::with_capacity(n_grid + 1);
    match spec.fixed_latent {
        Some(z) => values.resize(n_grid + 1, z),
        None => {
            let s = stationary_cov(&spec.a, &spec.g)?;
            let lg = psd_factor(&spec.g)?;
            let mut normal = || Vector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
            let mut z = psd_factor(&s)? * normal();
            for _ in 0..=n_grid {
                values.push([z[0], z[1]]);
                z = &spec.a * &z + &lg * normal();
            }
        }
    }

    let rate = |n: usize, v: [f64; 2], noise: f64| {
        let p = spec.preferred[n];
        (spec.baseline[n] + spec.modulation[n] * (p[0] * v[0] + p[1] * v[1]) + noise).max(0.0)
    };
    let mut spikes = vec![Vec::new(); spec.neuron_count()];
    let mut noise_rng = seeded(derive_seed(spec.seed, stream::RATE_NOISE));
    let mut prev_noise = vec![0.0; spec.neuron_count()];
    let draw_noise = |rng: &mut crate::rng::Rng| {
        if spec.rate_noise > 0.0 {
            let e: f64 = StandardNormal.sample(rng);
            spec.rate_noise * e
        } else {
            0.0
        }
    };
    for slot in prev_noise.iter_mut() {
        *slot = draw_noise(&mut noise_rng);
    }
    for k in 0..n_grid {
        let t0 = k as f64 * spec.fine_dt;
        let (v0, v1) = (values[k], values[k + 1]);
        for (n, train) in spikes.iter_mut().enumerate() {
            let e0 = prev_noise[n];
            let e1 = draw_noise(&mut noise_rng);
            prev_noise[n] = e1;
            let (r0, r1) = (rate(n, v0, e0), rate(n, v1, e1));
            let bound = r0.max(r1);
            if bound <= 0.0 {
                continue;
            }
            let count = Poisson::new(bound * spec.fine_dt)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .sample(&mut rng) as usize;
            let mut accepted: Vec<f64> = Vec::with_capacity(count);
            for _ in 0..count {
                let u: f64 = rng.random();
                let lerp = |a: f64, b: f64| -> f64 { a + u * (b - a) };
                let v = [lerp(v0[0], v1[0]), lerp(v0[1], v1[1])];
                let r = rate(n, v, lerp(e0, e1));
                if rng.random::<f64>() * bound < r {
                    accepted.push(t0 + u * spec.fine_dt);
                }
            }
            accepted.sort_by(f64::total_cmp);
            train.extend(accepted);
        }
    }
    values.truncate(n_grid);
    Ok(SpikingDataset {
        events: SpikeEvents::new(spikes)?,
        velocities: VelocitySeries::uniform(0.0, spec.fine_dt, values)?,
    })
}

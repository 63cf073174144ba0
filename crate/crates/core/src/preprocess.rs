//! Spike-train and kinematics preprocessing.
//!
//! The pipeline turns raw spike timestamps and a finely sampled 2-d velocity
//! trace into paired 100 ms time series: smoothed spike counts reduced to
//! z-scored principal-component scores (observations) and midpoint-sampled
//! velocities (latents).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{column_means, Mat, Vector};

pub type CountMatrix = DMatrix<u32>;

/// Per-neuron spike timestamps in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeEvents {
    spikes: Vec<Vec<f64>>,
}

impl SpikeEvents {
    pub fn new(spikes: Vec<Vec<f64>>) -> Result<Self> {
        if spikes.is_empty() {
            return Err(Error::Validation("at least one neuron is required".into()));
        }
        for (n, times) in spikes.iter().enumerate() {
            if let Some(t) = times.iter().find(|t| !t.is_finite() || **t < 0.0) {
                return Err(Error::Validation(format!("neuron {n}: invalid spike time {t}")));
            }
            if let Some(w) = times.windows(2).find(|w| w[1] < w[0]) {
                return Err(Error::Validation(format!(
                    "neuron {n}: spike times not monotone ({} after {})",
                    w[1], w[0]
                )));
            }
        }
        Ok(Self { spikes })
    }

    pub fn neuron_count(&self) -> usize {
        self.spikes.len()
    }

    pub fn neuron(&self, n: usize) -> &[f64] {
        &self.spikes[n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.spikes.iter().map(Vec::as_slice)
    }

    pub fn total_spikes(&self) -> usize {
        self.spikes.iter().map(Vec::len).sum()
    }
}

/// 2-d velocity samples on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySeries {
    times: Vec<f64>,
    values: Vec<[f64; 2]>,
}

impl VelocitySeries {
    /// Relative deviation from the nominal spacing that is still "uniform".
    pub const GRID_TOLERANCE: f64 = 1e-6;

    pub fn new(times: Vec<f64>, values: Vec<[f64; 2]>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} timestamps but {} velocity samples",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::Validation("velocity series needs at least two samples".into()));
        }
        if times.iter().chain(values.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("velocity series has non-finite values".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::Validation("velocity timestamps must increase".into()));
        }
        for (i, w) in times.windows(2).enumerate() {
            let step = w[1] - w[0];
            if (step - dt).abs() > Self::GRID_TOLERANCE * dt.max(1.0) {
                return Err(Error::Validation(format!(
                    "velocity grid is not uniform at sample {}: step {step} vs spacing {dt}",
                    i + 1
                )));
            }
        }
        Ok(Self { times, values })
    }

    /// Uniform series starting at `t0` with spacing `dt`.
    pub fn uniform(t0: f64, dt: f64, values: Vec<[f64; 2]>) -> Result<Self> {
        let times = (0..values.len()).map(|i| t0 + i as f64 * dt).collect();
        Self::new(times, values)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        (self.times[self.len() - 1] - self.times[0]) / (self.len() - 1) as f64
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    /// End of the covered span: last sample time plus one spacing.
    pub fn end(&self) -> f64 {
        self.times[self.len() - 1] + self.spacing()
    }
}

/// A trial reduced to paired observation / latent rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedTrial {
    pub id: String,
    /// T x k observations.
    pub observations: Mat,
    /// T x 2 latents.
    pub latents: Mat,
    /// Seconds.
    pub bin_width: f64,
}

impl ProcessedTrial {
    pub fn new(id: impl Into<String>, observations: Mat, latents: Mat, bin_width: f64) -> Result<Self> {
        if observations.nrows() != latents.nrows() {
            return Err(Error::Dimension(format!(
                "{} observation rows vs {} latent rows",
                observations.nrows(),
                latents.nrows()
            )));
        }
        Ok(Self {
            id: id.into(),
            observations,
            latents,
            bin_width,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.nrows() == 0
    }
}

/// Number of whole bins of `width` in `span`, forgiving round-off just below
/// an integer.
fn whole_bins(span: f64, width: f64) -> usize {
    let r = span / width;
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        r.floor() as usize
    }
}

/// Index `b` with `t_start + b*w <= t < t_start + (b+1)*w`.
fn bin_index(t: f64, t_start: f64, width: f64) -> Option<usize> {
    if t < t_start {
        return None;
    }
    let mut b = ((t - t_start) / width).floor() as usize;
    // Correct the floor for round-off so the half-open edge test is exact.
    while b > 0 && t_start + b as f64 * width > t {
        b -= 1;
    }
    while t_start + (b + 1) as f64 * width <= t {
        b += 1;
    }
    Some(b)
}

/// Spike counts per bin (rows) and neuron (columns) over `[t_start, t_end)`.
pub fn bin_spike_counts(events: &SpikeEvents, bin_width: f64, t_start: f64, t_end: f64) -> Result<CountMatrix> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidArgument(format!("bin width {bin_width}")));
    }
    if !(t_end > t_start) {
        return Err(Error::Dimension(format!("empty time range [{t_start}, {t_end})")));
    }
    let bins = whole_bins(t_end - t_start, bin_width);
    if bins == 0 {
        return Err(Error::Dimension(format!(
            "range [{t_start}, {t_end}) holds no whole bin of width {bin_width}"
        )));
    }
    let mut counts = CountMatrix::zeros(bins, events.neuron_count());
    for (n, times) in events.iter().enumerate() {
        for &t in times {
            if let Some(b) = bin_index(t, t_start, bin_width) {
                if b < bins {
                    counts[(b, n)] += 1;
                }
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MovingSumMode {
    /// `out[t] = x[t-w+1] + ... + x[t]`, partial at the start.
    #[default]
    Trailing,
    /// Window centred on `t` (for even `w`, `w/2` samples back and `w/2 - 1`
    /// forward), truncated at both ends.
    Centered,
}

impl std::str::FromStr for MovingSumMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trailing" => Ok(Self::Trailing),
            "centered" => Ok(Self::Centered),
            _ => Err(Error::Config(format!("unknown moving-sum mode '{s}'"))),
        }
    }
}

impl std::fmt::Display for MovingSumMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Trailing => "trailing",
            Self::Centered => "centered",
        })
    }
}

/// Column-wise moving sum.
pub fn moving_sum(x: &Mat, window: usize, mode: MovingSumMode) -> Result<Mat> {
    if window == 0 {
        return Err(Error::InvalidArgument("moving-sum window must be >= 1".into()));
    }
    let (back, fwd) = match mode {
        MovingSumMode::Trailing => (window - 1, 0),
        MovingSumMode::Centered => (window / 2, window - 1 - window / 2),
    };
    let t_len = x.nrows();
    let mut out = Mat::zeros(t_len, x.ncols());
    for c in 0..x.ncols() {
        let col = x.column(c);
        for t in 0..t_len {
            let lo = t.saturating_sub(back);
            let hi = (t + fwd).min(t_len - 1);
            out[(t, c)] = col.rows_range(lo..=hi).sum();
        }
    }
    Ok(out)
}

/// Sample velocities at the temporal midpoint of each of `bins` intervals of
/// width `target` starting at `t_start` (nearest grid sample).
pub fn midpoint_velocities(velocities: &VelocitySeries, t_start: f64, target: f64, bins: usize) -> Mat {
    let dt = velocities.spacing();
    let last = velocities.len() - 1;
    let mut out = Mat::zeros(bins, 2);
    for b in 0..bins {
        let mid = t_start + (b as f64 + 0.5) * target;
        let idx = ((mid - velocities.start()) / dt).round().clamp(0.0, last as f64) as usize;
        let v = velocities.values()[idx];
        out[(b, 0)] = v[0];
        out[(b, 1)] = v[1];
    }
    out
}

/// Aggregate fine spike bins into `target`-wide bins by summation and pick
/// the velocity sample nearest each coarse interval's midpoint.
pub fn paired_downsample(
    fine_counts: &CountMatrix,
    fine_width: f64,
    t_start: f64,
    velocities: &VelocitySeries,
    target: f64,
) -> Result<(CountMatrix, Mat)> {
    if !(fine_width > 0.0 && target >= fine_width) {
        return Err(Error::InvalidArgument(format!(
            "target interval {target} must be at least the fine width {fine_width}"
        )));
    }
    let ratio = target / fine_width;
    let factor = ratio.round();
    if (ratio - factor).abs() > 1e-6 * factor {
        return Err(Error::InvalidArgument(format!(
            "target {target} is not a whole multiple of fine width {fine_width}"
        )));
    }
    let factor = factor as usize;
    let spike_span = fine_counts.nrows() as f64 * fine_width;
    let vel_span = velocities.end() - velocities.start();
    if (spike_span - vel_span).abs() > target || (t_start - velocities.start()).abs() > target {
        return Err(Error::Alignment(format!(
            "spike span [{t_start}, {}) vs velocity span [{}, {})",
            t_start + spike_span,
            velocities.start(),
            velocities.end()
        )));
    }
    let bins = fine_counts.nrows() / factor;
    let mut coarse = CountMatrix::zeros(bins, fine_counts.ncols());
    for b in 0..bins {
        for n in 0..fine_counts.ncols() {
            coarse[(b, n)] = fine_counts
                .column(n)
                .rows_range(b * factor..(b + 1) * factor)
                .iter()
                .sum();
        }
    }
    Ok((coarse, midpoint_velocities(velocities, t_start, target, bins)))
}

/// Principal-component projection followed by per-score z-scoring (ddof 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaZscore {
    mean: Vector,
    /// N x k principal directions, descending explained variance.
    components: Mat,
    score_mean: Vector,
    score_std: Vector,
}

impl PcaZscore {
    /// Fit on the rows of `x`.
    pub fn fit(x: &Mat, k: usize) -> Result<Self> {
        let (t_len, n) = x.shape();
        if k == 0 || t_len <= k {
            return Err(Error::Dimension(format!(
                "PCA needs more samples ({t_len}) than components ({k})"
            )));
        }
        if k > n {
            return Err(Error::Rank(format!("requested {k} components from {n} columns")));
        }
        let mean = column_means(x);
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let svd = centered.clone().svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::InvalidInput("SVD did not converge".into()))?;
        let sv = &svd.singular_values;
        let s_max = sv.max();
        let rank_cut = s_max * t_len.max(n) as f64 * f64::EPSILON;
        let rank = sv.iter().filter(|&&s| s > rank_cut).count();
        if k > rank {
            return Err(Error::Rank(format!(
                "requested {k} components but centred data has rank {rank}"
            )));
        }
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

        let mut components = Mat::zeros(n, k);
        for (j, &idx) in order.iter().take(k).enumerate() {
            let mut dir = v_t.row(idx).transpose();
            let lead = dir
                .iter()
                .enumerate()
                .fold(
                    (0, 0.0f64),
                    |best, (i, &v)| {
                        if v.abs() > best.1.abs() {
                            (i, v)
                        } else {
                            best
                        }
                    },
                )
                .0;
            if dir[lead] < 0.0 {
                dir.neg_mut();
            }
            components.set_column(j, &dir);
        }

        let scores = &centered * &components;
        let score_mean = column_means(&scores);
        let mut score_std = Vector::zeros(k);
        for j in 0..k {
            let m = score_mean[j];
            let ss: f64 = scores.column(j).iter().map(|v| (v - m) * (v - m)).sum();
            score_std[j] = (ss / (t_len - 1) as f64).sqrt();
            if !(score_std[j] > 0.0) {
                return Err(Error::Rank(format!("principal score {j} has zero variance")));
            }
        }
        Ok(Self {
            mean,
            components,
            score_mean,
            score_std,
        })
    }

    pub fn components(&self) -> &Mat {
        &self.components
    }

    pub fn transform(&self, x: &Mat) -> Result<Mat> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "PCA fitted on {} columns, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        let mut scores = centered * &self.components;
        for j in 0..scores.ncols() {
            let (m, s) = (self.score_mean[j], self.score_std[j]);
            scores.column_mut(j).apply(|v| *v = (*v - m) / s);
        }
        Ok(scores)
    }
}

/// Z-scored top-`k` principal-component scores of `x`.
pub fn pca_zscore(x: &Mat, k: usize) -> Result<Mat> {
    PcaZscore::fit(x, k)?.transform(x)
}

/// Which rows supply the PCA and z-score statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZscoreMode {
    /// Statistics over the whole trial.
    #[default]
    WholeTrial,
    /// Statistics over the first `n` rows only (e.g. the training block),
    /// applied to every row.
    LeadingRows(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessOptions {
    /// Output bin width in seconds.
    pub bin_width: f64,
    pub window: usize,
    pub moving_sum: MovingSumMode,
    pub components: usize,
    pub zscore: ZscoreMode,
    /// Trials shorter than this many output samples are rejected.
    pub min_samples: usize,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            bin_width: 0.1,
            window: 10,
            moving_sum: MovingSumMode::Trailing,
            components: 10,
            zscore: ZscoreMode::WholeTrial,
            min_samples: 6000,
        }
    }
}

/// Full pipeline: bin, pair with midpoint velocities, moving sum, PCA z-score.
pub fn preprocess_trial(
    id: &str,
    events: &SpikeEvents,
    velocities: &VelocitySeries,
    opts: &PreprocessOptions,
) -> Result<ProcessedTrial> {
    let t_start = velocities.start();
    let bins = whole_bins(velocities.end() - t_start, opts.bin_width);
    if bins < opts.min_samples {
        return Err(Error::InsufficientData {
            actual: bins,
            required: opts.min_samples,
        });
    }
    let t_end = t_start + bins as f64 * opts.bin_width;
    let counts = bin_spike_counts(events, opts.bin_width, t_start, t_end)?;
    let latents = midpoint_velocities(velocities, t_start, opts.bin_width, bins);
    let counts = counts.map(f64::from);
    let smoothed = moving_sum(&counts, opts.window, opts.moving_sum)?;
    let pca = match opts.zscore {
        ZscoreMode::WholeTrial => PcaZscore::fit(&smoothed, opts.components)?,
        ZscoreMode::LeadingRows(n) => {
            let n = n.min(smoothed.nrows());
            PcaZscore::fit(&smoothed.rows(0, n).into_owned(), opts.components)?
        }
    };
    let observations = pca.transform(&smoothed)?;
    ProcessedTrial::new(id, observations, latents, opts.bin_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn events(v: Vec<Vec<f64>>) -> SpikeEvents {
        SpikeEvents::new(v).unwrap()
    }

    #[test]
    fn binning_examples() {
        let c = bin_spike_counts(&events(vec![vec![0.05, 0.15]]), 0.1, 0.0, 0.2).unwrap();
        assert_eq!(c.as_slice(), &[1, 1]);
        let c = bin_spike_counts(&events(vec![vec![], vec![]]), 0.1, 0.0, 0.5).unwrap();
        assert_eq!(c.shape(), (5, 2));
        assert!(c.iter().all(|&v| v == 0));
        let c = bin_spike_counts(&events(vec![vec![0.0999999, 0.1]]), 0.1, 0.0, 0.2).unwrap();
        assert_eq!(c.as_slice(), &[1, 1]);
        assert!(matches!(
            bin_spike_counts(&events(vec![vec![]]), 0.1, 1.0, 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn spike_validation() {
        assert!(SpikeEvents::new(vec![]).is_err());
        assert!(SpikeEvents::new(vec![vec![0.2, 0.1]]).is_err());
        assert!(SpikeEvents::new(vec![vec![-0.1]]).is_err());
    }

    #[test]
    fn velocity_grid_validation() {
        assert!(VelocitySeries::new(vec![0.0, 0.1, 0.2], vec![[0.0; 2]; 3]).is_ok());
        let err = VelocitySeries::new(vec![0.0, 0.1, 0.2, 0.4, 0.5], vec![[0.0; 2]; 5]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn moving_sum_examples() {
        let ones = Mat::from_element(15, 1, 1.0);
        let out = moving_sum(&ones, 10, MovingSumMode::Trailing).unwrap();
        let expect: Vec<f64> = (1..=15).map(|i| i.min(10) as f64).collect();
        assert_eq!(out.as_slice(), expect.as_slice());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Mat::from_fn(50, 3, |_, _| rng.random_range(-5.0..5.0));
        assert_eq!(moving_sum(&x, 1, MovingSumMode::Trailing).unwrap(), x);
        assert_eq!(moving_sum(&x, 1, MovingSumMode::Centered).unwrap(), x);

        let out = moving_sum(&x, 10, MovingSumMode::Trailing).unwrap();
        for t in 0..50usize {
            for c in 0..3 {
                let mut s = 0.0;
                for k in t.saturating_sub(9)..=t {
                    s += x[(k, c)];
                }
                assert!((out[(t, c)] - s).abs() <= 1e-12);
            }
        }
        assert!(matches!(
            moving_sum(&x, 0, MovingSumMode::Trailing),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn centered_moving_sum_window() {
        let x = Mat::from_column_slice(6, 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // Window 4: two back, one forward.
        let out = moving_sum(&x, 4, MovingSumMode::Centered).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 6.0, 10.0, 14.0, 18.0, 15.0]);
    }

    #[test]
    fn paired_downsample_examples() {
        let fine_w = 1.0 / 30000.0;
        let counts = CountMatrix::from_element(6000, 1, 1);
        let vel = VelocitySeries::uniform(0.0, fine_w, vec![[0.3, -0.2]; 6000]).unwrap();
        let (coarse, v) = paired_downsample(&counts, fine_w, 0.0, &vel, 0.1).unwrap();
        assert_eq!(coarse.as_slice(), &[3000, 3000]);
        assert!(v.row_iter().all(|r| r[0] == 0.3 && r[1] == -0.2));

        let ramp: Vec<[f64; 2]> = (0..3000).map(|i| [i as f64 * fine_w, 0.0]).collect();
        let vel = VelocitySeries::uniform(0.0, fine_w, ramp).unwrap();
        let counts = CountMatrix::zeros(3000, 1);
        let (_, v) = paired_downsample(&counts, fine_w, 0.0, &vel, 0.1).unwrap();
        assert!((v[(0, 0)] - 0.05).abs() <= fine_w);

        let short = VelocitySeries::uniform(0.0, fine_w, vec![[0.0; 2]; 2000]).unwrap();
        assert!(matches!(
            paired_downsample(&CountMatrix::zeros(9000, 1), fine_w, 0.0, &short, 0.1),
            Err(Error::Alignment(_))
        ));
    }

    fn column_stats(x: &Mat, j: usize) -> (f64, f64) {
        let n = x.nrows() as f64;
        let m = x.column(j).sum() / n;
        let v = x.column(j).iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    #[test]
    fn pca_zscore_diagonal_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Mat::from_fn(400, 2, |_, j| {
            rng.random_range(-1.0..1.0) * if j == 0 { 2.0 } else { 1.0 }
        });
        let z = pca_zscore(&x, 2).unwrap();
        for j in 0..2 {
            let (m, s) = column_stats(&z, j);
            assert!(m.abs() < 1e-9);
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    /// Absolute correlation between two columns.
    fn abs_corr(a: &Mat, i: usize, b: &Mat, j: usize) -> f64 {
        let (ma, sa) = column_stats(a, i);
        let (mb, sb) = column_stats(b, j);
        let n = a.nrows() as f64;
        let cov: f64 = a
            .column(i)
            .iter()
            .zip(b.column(j).iter())
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n - 1.0);
        (cov / (sa * sb)).abs()
    }

    #[test]
    fn pca_duplicated_columns_and_constant_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = 3;
        let base = Mat::from_fn(300, k, |_, j| rng.random_range(-1.0..1.0) * (j + 1) as f64);
        let reference = pca_zscore(&base, k).unwrap();

        let dup = Mat::from_fn(300, 2 * k, |i, j| base[(i, j % k)]);
        let z = pca_zscore(&dup, k).unwrap();
        // Each output column matches the reference column up to sign.
        for j in 0..k {
            assert!((abs_corr(&z, j, &reference, j) - 1.0).abs() < 1e-9);
        }

        let with_const = Mat::from_fn(300, k + 1, |i, j| if j < k { base[(i, j)] } else { 4.2 });
        let z = pca_zscore(&with_const, k).unwrap();
        for j in 0..k {
            let diff_same = (z.column(j) - reference.column(j)).amax();
            let diff_flip = (z.column(j) + reference.column(j)).amax();
            assert!(diff_same.min(diff_flip) < 1e-9);
        }
    }

    #[test]
    fn pca_errors() {
        let x = Mat::from_fn(5, 3, |i, j| (i * j) as f64);
        assert!(matches!(pca_zscore(&x, 5), Err(Error::Dimension(_))));
        // Rank 1 after centring.
        let x = Mat::from_fn(20, 3, |i, j| (i as f64) * (j + 1) as f64);
        assert!(matches!(pca_zscore(&x, 2), Err(Error::Rank(_))));
    }

    #[test]
    fn pca_scores_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mix = Mat::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let raw = Mat::from_fn(500, 6, |_, _| rng.random_range(-1.0..1.0));
        let x = raw * mix;
        let z = pca_zscore(&x, 4).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!(abs_corr(&z, i, &z, j) < 1e-8);
            }
        }
    }

    fn random_train(rng: &mut ChaCha8Rng, n: usize, span: f64) -> Vec<f64> {
        let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..span)).collect();
        t.sort_by(f64::total_cmp);
        t
    }

    #[test]
    fn direct_binning_matches_fine_bin_summation() {
        let fine_w = 1.0 / 30000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let n = rng.random_range(0..200);
            let ev = events(vec![random_train(&mut rng, n, 2.0)]);
            let direct = bin_spike_counts(&ev, 0.1, 0.0, 2.0).unwrap();
            let fine = bin_spike_counts(&ev, fine_w, 0.0, 2.0).unwrap();
            assert_eq!(fine.nrows(), 60000);
            let vel = VelocitySeries::uniform(0.0, 0.01, vec![[0.0; 2]; 200]).unwrap();
            let (coarse, _) = paired_downsample(&fine, fine_w, 0.0, &vel, 0.1).unwrap();
            assert_eq!(direct, coarse);
        }
    }

    #[test]
    fn insufficient_trial_is_rejected() {
        let vel = VelocitySeries::uniform(0.0, 0.01, vec![[1.0, 0.0]; 30000]).unwrap();
        let ev = events(vec![vec![0.5]; 12]);
        let err = preprocess_trial("short", &ev, &vel, &PreprocessOptions::default()).unwrap_err();
        assert_eq!(
            err,
            Error::InsufficientData {
                actual: 3000,
                required: 6000
            }
        );
    }

    proptest! {
        #[test]
        fn trailing_sum_full_windows_exact(seed in 0u64..1000, window in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Mat::from_fn(40, 2, |_, _| rng.random_range(0..20) as f64);
            let out = moving_sum(&x, window, MovingSumMode::Trailing).unwrap();
            for t in (window - 1)..40 {
                for c in 0..2 {
                    let s: f64 = (t + 1 - window..=t).map(|k| x[(k, c)]).sum();
                    prop_assert_eq!(out[(t, c)], s);
                }
            }
        }
    }
}

//! Nadaraya-Watson kernel regression with a Gaussian RBF kernel and
//! leave-one-out bandwidth selection.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// Counters collected while predicting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NwDiagnostics {
    /// Queries whose kernel weights all underflowed to zero; those predict
    /// the unweighted target mean.
    pub underflow_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NwModel {
    /// p x M, one training input per column.
    inputs_t: Mat,
    /// M x q.
    targets: Mat,
    target_mean: Vector,
    bandwidth: f64,
}

impl NwModel {
    pub fn new(inputs: &Mat, targets: &Mat, bandwidth: f64) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Dimension(format!(
                "{} inputs vs {} targets",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::InsufficientData { actual: 0, required: 1 });
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth {bandwidth}")));
        }
        let target_mean = Vector::from_iterator(targets.ncols(), targets.column_iter().map(|c| c.mean()));
        Ok(Self {
            inputs_t: inputs.transpose(),
            targets: targets.clone(),
            target_mean,
            bandwidth,
        })
    }

    /// Fit with the bandwidth that minimizes the leave-one-out error.
    pub fn fit(inputs: &Mat, targets: &Mat) -> Result<Self> {
        let h = optimize_bandwidth(inputs, targets)?;
        Self::new(inputs, targets, h)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn input_dim(&self) -> usize {
        self.inputs_t.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn train_len(&self) -> usize {
        self.targets.nrows()
    }

    pub fn inputs(&self) -> Mat {
        self.inputs_t.transpose()
    }

    pub fn targets(&self) -> &Mat {
        &self.targets
    }

    /// Prediction and whether the underflow fallback was taken.
    pub fn predict_checked(&self, query: &[f64]) -> Result<(Vector, bool)> {
        if query.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "query has {} entries, model expects {}",
                query.len(),
                self.input_dim()
            )));
        }
        let inv_two_h2 = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let q = self.targets.ncols();
        let mut num = vec![0.0; q];
        let mut den = 0.0;
        for (j, x) in self.inputs_t.column_iter().enumerate() {
            let d2: f64 = x.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            let w = (-d2 * inv_two_h2).exp();
            if w > 0.0 {
                den += w;
                for (k, n) in num.iter_mut().enumerate() {
                    *n += w * self.targets[(j, k)];
                }
            }
        }
        if den > 0.0 {
            Ok((Vector::from_iterator(q, num.into_iter().map(|n| n / den)), false))
        } else {
            Ok((self.target_mean.clone(), true))
        }
    }

    pub fn predict(&self, query: &[f64]) -> Result<Vector> {
        self.predict_checked(query).map(|(v, _)| v)
    }

    /// Predict every row of `queries`.
    pub fn predict_rows(&self, queries: &Mat) -> Result<(Mat, NwDiagnostics)> {
        let rows: Vec<Vec<f64>> = queries.row_iter().map(|r| r.iter().copied().collect()).collect();
        let preds: Vec<(Vector, bool)> = rows
            .par_iter()
            .map(|r| self.predict_checked(r))
            .collect::<Result<_>>()?;
        let mut out = Mat::zeros(queries.nrows(), self.output_dim());
        let mut diag = NwDiagnostics::default();
        for (i, (p, fallback)) in preds.into_iter().enumerate() {
            out.set_row(i, &p.transpose());
            diag.underflow_fallbacks += usize::from(fallback);
        }
        if diag.underflow_fallbacks > 0 {
            log::warn!(
                "NW prediction: {} of {} queries fell back to the target mean",
                diag.underflow_fallbacks,
                queries.nrows()
            );
        }
        Ok((out, diag))
    }
}

/// Precomputed pairwise distances for repeated leave-one-out evaluation.
pub struct LooObjective {
    m: usize,
    q: usize,
    /// Row-major M x M squared distances.
    dist2: Vec<f64>,
    /// Row-major M x q targets.
    targets: Vec<f64>,
    target_sum: Vec<f64>,
    degenerate: bool,
}

impl LooObjective {
    pub fn new(inputs: &Mat, targets: &Mat) -> Result<Self> {
        let m = inputs.nrows();
        if m != targets.nrows() {
            return Err(Error::Dimension(format!("{m} inputs vs {} targets", targets.nrows())));
        }
        if m < 2 {
            return Err(Error::InsufficientData { actual: m, required: 2 });
        }
        let q = targets.ncols();
        let xt = inputs.transpose();
        let mut dist2 = vec![0.0; m * m];
        dist2.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            let xi = xt.column(i);
            for (j, d) in row.iter_mut().enumerate() {
                *d = xi.iter().zip(xt.column(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            }
        });
        let degenerate = dist2.iter().all(|&d| d == 0.0);
        let mut flat = Vec::with_capacity(m * q);
        for r in targets.row_iter() {
            flat.extend(r.iter().copied());
        }
        let target_sum = (0..q).map(|k| targets.column(k).sum()).collect();
        Ok(Self {
            m,
            q,
            dist2,
            targets: flat,
            target_sum,
            degenerate,
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// True when every input is identical.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Median distance over distinct pairs.
    pub fn median_pairwise_distance(&self) -> f64 {
        let mut d: Vec<f64> = (0..self.m)
            .flat_map(|i| ((i + 1)..self.m).map(move |j| (i, j)))
            .map(|(i, j)| self.dist2[i * self.m + j])
            .collect();
        let mid = d.len() / 2;
        let (_, v, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
        let upper = *v;
        if d.len().is_multiple_of(2) {
            let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (lower.sqrt() + upper.sqrt())
        } else {
            upper.sqrt()
        }
    }

    fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.q..(i + 1) * self.q]
    }

    fn total_variance(&self) -> f64 {
        let mean: Vec<f64> = self.target_sum.iter().map(|s| s / self.m as f64).collect();
        (0..self.m)
            .map(|i| {
                self.target(i)
                    .iter()
                    .zip(&mean)
                    .map(|(y, m)| (y - m) * (y - m))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / self.m as f64
    }

    /// Leave-one-out mean squared error at `bandwidth`.
    pub fn mse(&self, bandwidth: f64) -> f64 {
        if self.degenerate {
            log::warn!("NW leave-one-out: all inputs identical, returning target variance");
            return self.total_variance();
        }
        let inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);
        let per_row: Vec<f64> = (0..self.m)
            .into_par_iter()
            .map(|i| {
                let row = &self.dist2[i * self.m..(i + 1) * self.m];
                let mut num = vec![0.0; self.q];
                let mut den = 0.0;
                for (j, &d2) in row.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let w = (-d2 * inv_two_h2).exp();
                    if w > 0.0 {
                        den += w;
                        for (n, y) in num.iter_mut().zip(self.target(j)) {
                            *n += w * y;
                        }
                    }
                }
                let yi = self.target(i);
                let pred: Vec<f64> = if den > 0.0 {
                    num.iter().map(|n| n / den).collect()
                } else {
                    self.target_sum
                        .iter()
                        .zip(yi)
                        .map(|(s, y)| (s - y) / (self.m - 1) as f64)
                        .collect()
                };
                yi.iter().zip(&pred).map(|(y, p)| (y - p) * (y - p)).sum()
            })
            .collect();
        per_row.iter().sum::<f64>() / self.m as f64
    }
}

/// Leave-one-out mean squared error of NW regression at `bandwidth`.
pub fn nw_loo_mse(inputs: &Mat, targets: &Mat, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth {bandwidth}")));
    }
    Ok(LooObjective::new(inputs, targets)?.mse(bandwidth))
}

/// Search range for the bandwidth, as multiples of the median pairwise
/// input distance.
pub const BANDWIDTH_RANGE: (f64, f64) = (1e-3, 10.0);
const COARSE_GRID: usize = 41;
const REL_TOL: f64 = 1e-4;

/// Bandwidth minimizing the leave-one-out error over
/// `[1e-3 D, 10 D]` (D the median pairwise distance), searched in log space:
/// a coarse grid locates the basin, golden-section search refines it.
pub fn optimize_bandwidth(inputs: &Mat, targets: &Mat) -> Result<f64> {
    if inputs.nrows() < 3 {
        return Err(Error::InsufficientData {
            actual: inputs.nrows(),
            required: 3,
        });
    }
    let obj = LooObjective::new(inputs, targets)?;
    optimize_bandwidth_with(&obj)
}

pub fn optimize_bandwidth_with(obj: &LooObjective) -> Result<f64> {
    let d = obj.median_pairwise_distance();
    if !(d > 0.0) {
        return Err(Error::DegenerateInput("median pairwise input distance is zero".into()));
    }
    let lo = (BANDWIDTH_RANGE.0 * d).ln();
    let hi = (BANDWIDTH_RANGE.1 * d).ln();
    let f = |log_h: f64| obj.mse(log_h.exp());

    let step = (hi - lo) / (COARSE_GRID - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..COARSE_GRID)
        .map(|k| {
            let x = lo + k as f64 * step;
            (x, f(x))
        })
        .collect();
    // First minimum wins ties, which favours small bandwidths on flat
    // objectives (e.g. constant targets).
    let (best_k, _) = grid.iter().enumerate().fold(
        (0, f64::INFINITY),
        |acc, (k, &(_, v))| if v < acc.1 { (k, v) } else { acc },
    );
    let a = lo + best_k.saturating_sub(1) as f64 * step;
    let b = lo + (best_k + 1).min(COARSE_GRID - 1) as f64 * step;
    let (x, fx) = golden_section(&f, a, b, REL_TOL);
    let (gx, gfx) = grid[best_k];
    Ok(if fx <= gfx { x } else { gx }.exp())
}

/// Golden-section minimization on `[a, b]`; returns `(argmin, min)`.
/// Terminates when the bracket is narrower than `rel_tol * |x|` in the
/// exponentiated (bandwidth) scale, i.e. `rel_tol` in log space.
fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > rel_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn rows(v: &[&[f64]]) -> Mat {
        Mat::from_fn(v.len(), v[0].len(), |i, j| v[i][j])
    }

    /// Refit without sample `i` and predict it: independent of
    /// [`LooObjective`].
    fn brute_force_loo(x: &Mat, y: &Mat, h: f64) -> f64 {
        let m = x.nrows();
        let mut total = 0.0;
        for i in 0..m {
            let keep: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            let xs = x.select_rows(&keep);
            let ys = y.select_rows(&keep);
            let model = NwModel::new(&xs, &ys, h).unwrap();
            let q: Vec<f64> = x.row(i).iter().copied().collect();
            let p = model.predict(&q).unwrap();
            total += (y.row(i).transpose() - p).norm_squared();
        }
        total / m as f64
    }

    #[test]
    fn single_pair_predicts_its_target() {
        let m = NwModel::new(&rows(&[&[0.3, 1.0]]), &rows(&[&[2.0, -1.0]]), 0.7).unwrap();
        let p = m.predict(&[5.0, 5.0]).unwrap();
        assert_eq!(p.as_slice(), &[2.0, -1.0]);
    }

    #[test]
    fn symmetric_pair_predicts_midpoint() {
        let m = NwModel::new(&rows(&[&[-1.0], &[1.0]]), &rows(&[&[0.0], &[2.0]]), 0.8).unwrap();
        assert!((m.predict(&[0.0]).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn huge_bandwidth_predicts_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Mat::from_fn(30, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = Mat::from_fn(30, 2, |_, _| rng.random_range(-5.0..5.0));
        let diameter = 2.0 * 3f64.sqrt();
        let m = NwModel::new(&x, &y, 1e6 * diameter).unwrap();
        let p = m.predict(&[0.2, -0.4, 0.9]).unwrap();
        for k in 0..2 {
            assert!((p[k] - y.column(k).mean()).abs() < 1e-6);
        }
    }

    #[test]
    fn underflow_falls_back_to_mean() {
        let m = NwModel::new(&rows(&[&[0.0], &[1.0]]), &rows(&[&[0.0], &[4.0]]), 1e-3).unwrap();
        let (p, diag) = m.predict_rows(&rows(&[&[100.0], &[0.0]])).unwrap();
        assert_eq!(p[(0, 0)], 2.0);
        assert_eq!(p[(1, 0)], 0.0);
        assert_eq!(diag.underflow_fallbacks, 1);
    }

    #[test]
    fn loo_examples() {
        let x = rows(&[&[0.0], &[1.0]]);
        let y = rows(&[&[1.0, 2.0], &[4.0, -2.0]]);
        let expect = 9.0 + 16.0;
        assert!((nw_loo_mse(&x, &y, 0.5).unwrap() - expect).abs() < 1e-12);

        let x = Mat::from_fn(10, 2, |i, j| (i * 3 + j) as f64);
        let y = Mat::from_element(10, 2, 3.5);
        assert_eq!(nw_loo_mse(&x, &y, 0.5).unwrap(), 0.0);

        // Identical inputs: target variance.
        let x = Mat::from_element(4, 2, 1.0);
        let y = rows(&[&[0.0], &[2.0], &[0.0], &[2.0]]);
        assert!((nw_loo_mse(&x, &y, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn loo_matches_brute_force_refit() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let x = Mat::from_fn(20, 3, |_, _| rng.random_range(-2.0..2.0));
        let y = Mat::from_fn(20, 2, |_, _| rng.random_range(-1.0..1.0));
        for h in [0.1, 0.5, 2.0] {
            let fast = nw_loo_mse(&x, &y, h).unwrap();
            let slow = brute_force_loo(&x, &y, h);
            assert!((fast - slow).abs() < 1e-10, "h={h}: {fast} vs {slow}");
        }
    }

    fn log_grid_min(obj: &LooObjective, points: usize) -> f64 {
        let d = obj.median_pairwise_distance();
        let (lo, hi) = ((1e-3 * d).ln(), (10.0 * d).ln());
        (0..points)
            .map(|k| obj.mse((lo + (hi - lo) * k as f64 / (points - 1) as f64).exp()))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn bandwidth_search_matches_dense_grid_on_noisy_sine() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let x = Mat::from_fn(200, 1, |_, _| rng.random_range(-3.0..3.0));
        let y = Mat::from_fn(200, 1, |i, _| x[(i, 0)].sin() + noise.sample(&mut rng));
        let h = optimize_bandwidth(&x, &y).unwrap();
        let obj = LooObjective::new(&x, &y).unwrap();
        let grid = log_grid_min(&obj, 1000);
        assert!(obj.mse(h) <= grid * 1.01, "{} vs grid {grid}", obj.mse(h));
    }

    #[test]
    fn bandwidth_search_on_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Mat::from_fn(60, 2, |i, _| {
            let centre = if i < 30 { 0.0 } else { 100.0 };
            centre + rng.random_range(-0.5..0.5)
        });
        let y = Mat::from_fn(60, 1, |i, _| if i < 30 { -1.0 } else { 1.0 });
        let h = optimize_bandwidth(&x, &y).unwrap();
        assert!(h < 10.0, "bandwidth {h}");
        let obj = LooObjective::new(&x, &y).unwrap();
        assert!(obj.mse(h) < 1e-12);
        assert!(obj.mse(h) <= log_grid_min(&obj, 1000) * 1.01 + 1e-300);
    }

    #[test]
    fn constant_targets_give_finite_bandwidth() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Mat::from_fn(25, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = Mat::from_element(25, 3, 0.25);
        let h = optimize_bandwidth(&x, &y).unwrap();
        assert!(h.is_finite() && h > 0.0);
        assert_eq!(nw_loo_mse(&x, &y, h).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_inputs_are_rejected_by_search() {
        let x = Mat::from_element(5, 2, 1.0);
        let y = Mat::from_fn(5, 1, |i, _| i as f64);
        assert!(matches!(optimize_bandwidth(&x, &y), Err(Error::DegenerateInput(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn prediction_in_target_hull(seed in 0u64..10_000, h in 0.05f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Mat::from_fn(15, 2, |_, _| rng.random_range(-2.0..2.0));
            let y = Mat::from_fn(15, 2, |_, _| rng.random_range(-3.0..3.0));
            let model = NwModel::new(&x, &y, h).unwrap();
            let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let p = model.predict(&q).unwrap();
            for k in 0..2 {
                prop_assert!(p[k] >= y.column(k).min() - 1e-12);
                prop_assert!(p[k] <= y.column(k).max() + 1e-12);
            }
        }

        #[test]
        fn loo_equals_refit(seed in 0u64..10_000, m in 2usize..=50, h in 0.05f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Mat::from_fn(m, 3, |_, _| rng.random_range(-2.0..2.0));
            let y = Mat::from_fn(m, 2, |_, _| rng.random_range(-1.0..1.0));
            let fast = nw_loo_mse(&x, &y, h).unwrap();
            let slow = brute_force_loo(&x, &y, h);
            prop_assert!((fast - slow).abs() < 1e-10);
        }
    }
}

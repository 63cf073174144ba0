use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Norms below this are treated as zero-length vectors by [`maae`].
pub const MIN_NORM: f64 = 1e-12;

fn same_shape(pred: &Mat, truth: &Mat) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.nrows(),
            pred.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    Ok(())
}

/// `||pred - truth||_F / ||truth||_F`; the zero predictor scores 1.
pub fn nrmse(pred: &Mat, truth: &Mat) -> Result<f64> {
    same_shape(pred, truth)?;
    let denom = truth.norm();
    if !(denom > 0.0) {
        return Err(Error::UndefinedMetric("truth is identically zero".into()));
    }
    Ok((pred - truth).norm() / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaaeReport {
    /// Mean absolute angle in radians.
    pub value: f64,
    pub used: usize,
    /// Rows skipped because either vector was (numerically) zero.
    pub excluded: usize,
}

/// Mean absolute angle between 2-dim prediction and truth rows.
pub fn maae_report(pred: &Mat, truth: &Mat) -> Result<MaaeReport> {
    same_shape(pred, truth)?;
    if truth.ncols() != 2 {
        return Err(Error::Dimension(format!("MAAE needs 2 columns, got {}", truth.ncols())));
    }
    let mut sum = 0.0;
    let mut used = 0;
    for (p, t) in pred.row_iter().zip(truth.row_iter()) {
        if p.norm() < MIN_NORM || t.norm() < MIN_NORM {
            continue;
        }
        let cross = p[0] * t[1] - p[1] * t[0];
        let dot = p[0] * t[0] + p[1] * t[1];
        sum += cross.abs().atan2(dot);
        used += 1;
    }
    if used == 0 {
        return Err(Error::UndefinedMetric("no rows with nonzero vectors".into()));
    }
    Ok(MaaeReport {
        value: sum / used as f64,
        used,
        excluded: truth.nrows() - used,
    })
}

pub fn maae(pred: &Mat, truth: &Mat) -> Result<f64> {
    maae_report(pred, truth).map(|r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn nrmse_examples() {
        let truth = Mat::from_fn(20, 2, |i, j| (i as f64 - 3.0) * (j as f64 + 0.5));
        assert!((nrmse(&Mat::zeros(20, 2), &truth).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nrmse(&truth, &truth).unwrap(), 0.0);
        let t = Mat::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let p = Mat::from_row_slice(2, 2, &[2.0, 0.0, 2.0, 0.0]);
        assert_eq!(nrmse(&p, &t).unwrap(), 1.0);
        assert!(matches!(nrmse(&p, &Mat::zeros(2, 2)), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn maae_examples() {
        let t = Mat::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.1, 3.0, -3.0]);
        assert_eq!(maae(&t, &t).unwrap(), 0.0);
        assert!((maae(&(-&t), &t).unwrap() - PI).abs() < 1e-15);
        let zeros = Mat::zeros(3, 2);
        assert!(matches!(maae(&zeros, &t), Err(Error::UndefinedMetric(_))));
        let mut p = t.clone();
        p.set_row(1, &Mat::zeros(1, 2).row(0));
        let r = maae_report(&p, &t).unwrap();
        assert_eq!((r.used, r.excluded), (2, 1));
    }

    #[test]
    fn random_directions_average_a_right_angle() {
        let mut rng = seeded(1);
        let n = 100_000;
        let truth = Mat::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let pred = Mat::from_fn(n, 2, |_, _| 0.0);
        let mut pred = pred;
        for i in 0..n {
            let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            pred[(i, 0)] = th.cos();
            pred[(i, 1)] = th.sin();
        }
        assert!((maae(&pred, &truth).unwrap() - FRAC_PI_2).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn nrmse_is_scale_covariant(seed in 0u64..1000, c in prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64]) {
            let mut rng = seeded(seed);
            let t = Mat::from_fn(15, 2, |_, _| rng.random_range(-1.0..1.0));
            let p = Mat::from_fn(15, 2, |_, _| rng.random_range(-1.0..1.0));
            let a = nrmse(&p, &t).unwrap();
            let b = nrmse(&(&p * c), &(&t * c)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn maae_ignores_positive_rescaling(seed in 0u64..1000) {
            let mut rng = seeded(seed);
            let t = Mat::from_fn(15, 2, |_, _| rng.random_range(-1.0..1.0));
            let p = Mat::from_fn(15, 2, |_, _| rng.random_range(-1.0..1.0));
            let mut ps = p.clone();
            let mut ts = t.clone();
            for i in 0..15 {
                let (a, b): (f64, f64) = (rng.random_range(0.01..100.0), rng.random_range(0.01..100.0));
                ps.row_mut(i).scale_mut(a);
                ts.row_mut(i).scale_mut(b);
            }
            prop_assert!((maae(&p, &t).unwrap() - maae(&ps, &ts).unwrap()).abs() < 1e-12);
        }
    }
}

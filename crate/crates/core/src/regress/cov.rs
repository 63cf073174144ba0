//! Conditional-covariance map learned by kernel-smoothing residual outer
//! products.

use crate::error::{Error, Result};
use crate::linalg::{Mat, SpdMat};
use crate::regress::nw::{optimize_bandwidth, NwDiagnostics, NwModel};

/// Lower-triangular half-vectorization, row by row: `(0,0), (1,0), (1,1), ...`.
pub fn vech(m: &Mat) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in 0..=i {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vech`] producing a symmetric matrix.
pub fn unvech(v: &[f64], d: usize) -> Mat {
    let mut m = Mat::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in 0..=i {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

/// `Q(x)`: an NW regression onto the unique entries of residual outer
/// products. Kernel weights are nonnegative and normalized, so every output
/// is a convex combination of rank-one PSD matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CovFunction {
    nw: NwModel,
    dim: usize,
}

impl CovFunction {
    pub fn from_model(nw: NwModel, dim: usize) -> Result<Self> {
        if nw.output_dim() != dim * (dim + 1) / 2 {
            return Err(Error::Dimension(format!(
                "NW output has {} entries, a {dim}x{dim} covariance needs {}",
                nw.output_dim(),
                dim * (dim + 1) / 2
            )));
        }
        Ok(Self { nw, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> &NwModel {
        &self.nw
    }

    pub fn evaluate(&self, query: &[f64]) -> Result<SpdMat> {
        let v = self.nw.predict(query)?;
        SpdMat::symmetric_part(&unvech(v.as_slice(), self.dim))
    }

    pub fn evaluate_rows(&self, queries: &Mat) -> Result<(Vec<Mat>, NwDiagnostics)> {
        let (pred, diag) = self.nw.predict_rows(queries)?;
        let mats = pred
            .row_iter()
            .map(|r| unvech(&r.iter().copied().collect::<Vec<_>>(), self.dim))
            .collect();
        Ok((mats, diag))
    }
}

/// Fit `Q(.)` on validation inputs and their residuals `z - f(x)`.
pub fn fit_cov_function(val_inputs: &Mat, residuals: &Mat) -> Result<CovFunction> {
    let v = val_inputs.nrows();
    if v != residuals.nrows() {
        return Err(Error::Dimension(format!(
            "{v} validation inputs vs {} residuals",
            residuals.nrows()
        )));
    }
    if v < 2 {
        return Err(Error::InsufficientData { actual: v, required: 2 });
    }
    let d = residuals.ncols();
    let mut targets = Mat::zeros(v, d * (d + 1) / 2);
    for (i, r) in residuals.row_iter().enumerate() {
        let outer = r.transpose() * r;
        for (k, e) in vech(&outer).into_iter().enumerate() {
            targets[(i, k)] = e;
        }
    }
    let bandwidth = if v == 2 {
        let gap = (val_inputs.row(0) - val_inputs.row(1)).norm();
        if gap > 0.0 {
            gap
        } else {
            return Err(Error::DegenerateInput("validation inputs coincide".into()));
        }
    } else {
        optimize_bandwidth(val_inputs, &targets)?
    };
    CovFunction::from_model(NwModel::new(val_inputs, &targets, bandwidth)?, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn vech_roundtrip() {
        let m = Mat::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        assert_eq!(vech(&m), vec![1.0, 2.0, 4.0, 3.0, 5.0, 6.0]);
        assert_eq!(unvech(&vech(&m), 3), m);
    }

    #[test]
    fn constant_residuals_give_constant_cov() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Mat::from_fn(20, 3, |_, _| rng.random_range(-1.0..1.0));
        let r = Mat::from_fn(20, 2, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let q = fit_cov_function(&x, &r).unwrap();
        for query in [[0.0, 0.0, 0.0], [5.0, -3.0, 1.0]] {
            let m = q.evaluate(&query).unwrap();
            assert_eq!(m.as_mat(), &Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        }
    }

    #[test]
    fn large_bandwidth_recovers_sample_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n1 = Normal::new(0.0, 1.5).unwrap();
        let n2 = Normal::new(0.0, 0.5).unwrap();
        let v = 2000;
        let x = Mat::from_fn(v, 2, |_, _| rng.random_range(-1.0..1.0));
        let r = Mat::from_fn(v, 2, |_, j| {
            if j == 0 {
                n1.sample(&mut rng)
            } else {
                n2.sample(&mut rng)
            }
        });
        let mut targets = Mat::zeros(v, 3);
        for (i, row) in r.row_iter().enumerate() {
            let o = row.transpose() * row;
            targets[(i, 0)] = o[(0, 0)];
            targets[(i, 1)] = o[(1, 0)];
            targets[(i, 2)] = o[(1, 1)];
        }
        let q = CovFunction::from_model(NwModel::new(&x, &targets, 1e8).unwrap(), 2).unwrap();
        let direct = r.transpose() * &r / v as f64;
        let got = q.evaluate(&[0.3, 0.3]).unwrap();
        assert!((got.as_mat() - &direct).amax() < 1e-9);
        // Close to the generating covariance as well.
        assert!((got[(0, 0)] - 2.25).abs() < 0.2);
        assert!((got[(1, 1)] - 0.25).abs() < 0.03);
    }

    #[test]
    fn outputs_are_psd_for_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Mat::from_fn(200, 3, |_, _| rng.random_range(-2.0..2.0));
        let r = Mat::from_fn(200, 2, |_, _| rng.random_range(-1.0..1.0));
        let q = fit_cov_function(&x, &r).unwrap();
        for _ in 0..1000 {
            let query: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
            let m = q.evaluate(&query).unwrap();
            assert_eq!(m.as_mat(), &m.transpose());
            assert!(min_eigenvalue(m.as_mat()).unwrap() >= -1e-12);
        }
    }
}

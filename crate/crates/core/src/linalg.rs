//! Dense linear-algebra helpers shared by the filters and regressors.
//!
//! Everything here works on `nalgebra` dynamic matrices. Matrices are small
//! (latent dimension 2, observation dimension 10) except inside the GP fit,
//! which manages its own factorizations.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Numerical tolerance policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Absolute lower bound a Cholesky pivot must exceed.
    pub pd_check_eps: f64,
    /// Relative singular-value cutoff factor. Singular values at or below
    /// `pinv_rcond * max(rows, cols) * sigma_max` are treated as zero.
    pub pinv_rcond: f64,
    /// Relative asymmetry accepted when validating an [`SpdMat`].
    pub symmetrize_eps: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pd_check_eps: 1e-10,
            pinv_rcond: f64::EPSILON,
            symmetrize_eps: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.pd_check_eps) && ok(self.pinv_rcond) && ok(self.symmetrize_eps) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "tolerances must be strictly positive: {self:?}"
            )))
        }
    }
}

/// A symmetric matrix intended to be used as a covariance.
///
/// Construction through [`SpdMat::symmetric_part`] only enforces symmetry;
/// [`SpdMat::try_new`] additionally checks positive semi-definiteness up to
/// `-1e-10 * lambda_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMat(Mat);

impl SpdMat {
    pub fn try_new(m: Mat, tol: &Tolerances) -> Result<Self> {
        ensure_square(&m)?;
        ensure_finite(&m)?;
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > tol.symmetrize_eps * scale {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let sym = symmetrize(&m)?;
        let eig = sym.clone().symmetric_eigen().eigenvalues;
        let max = eig.max();
        let min = eig.min();
        if min < -1e-10 * max.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue {min:.3e} (largest {max:.3e})"
            )));
        }
        Ok(Self(sym))
    }

    /// Symmetric part `(m + m^T) / 2`, without a definiteness check.
    pub fn symmetric_part(m: &Mat) -> Result<Self> {
        symmetrize(m).map(Self)
    }

    pub fn identity(dim: usize) -> Self {
        Self(Mat::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }
}

impl Deref for SpdMat {
    type Target = Mat;

    fn deref(&self) -> &Mat {
        &self.0
    }
}

pub(crate) fn ensure_square(m: &Mat) -> Result<()> {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn ensure_finite(m: &Mat) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &Mat) -> Result<Mat> {
    ensure_square(m)?;
    Ok((m + m.transpose()) * 0.5)
}

/// Lower Cholesky factor, failing when any pivot is `<= eps`.
pub fn cholesky(m: &Mat, eps: f64) -> Result<Mat> {
    ensure_square(m)?;
    if m.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("matrix has NaN entries".into()));
    }
    let n = m.nrows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > eps) {
            return Err(Error::NotPositiveDefinite(format!("pivot {j} is {pivot:.3e}")));
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// True iff a Cholesky factorization succeeds with every pivot above
/// `tol.pd_check_eps`.
pub fn is_positive_definite(m: &Mat, tol: &Tolerances) -> Result<bool> {
    match cholesky(m, tol.pd_check_eps) {
        Ok(_) => Ok(true),
        Err(Error::NotPositiveDefinite(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Moore-Penrose pseudo-inverse through the SVD.
pub fn pseudo_inverse(m: &Mat, tol: &Tolerances) -> Result<Mat> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    ensure_finite(m)?;
    let svd = m.clone().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::InvalidInput("SVD did not converge".into())),
    };
    let sigma_max = svd.singular_values.max();
    let cutoff = tol.pinv_rcond * m.nrows().max(m.ncols()) as f64 * sigma_max;
    let mut inv_s = Mat::zeros(v_t.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            inv_s[(i, i)] = 1.0 / s;
        }
    }
    Ok(v_t.transpose() * inv_s * u.transpose())
}

/// Pseudo-inverse of a symmetric matrix from its eigendecomposition, which
/// is its SVD up to signs. The result is exactly symmetric and keeps full
/// relative accuracy in poorly conditioned directions, where a general SVD
/// can mix left and right singular vectors.
pub fn symmetric_pseudo_inverse(m: &Mat, tol: &Tolerances) -> Result<Mat> {
    ensure_square(m)?;
    if m.nrows() == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    ensure_finite(m)?;
    let eig = symmetrize(m)?.symmetric_eigen();
    let sigma_max = eig.eigenvalues.amax();
    let cutoff = tol.pinv_rcond * m.nrows() as f64 * sigma_max;
    let mut out = Mat::zeros(m.nrows(), m.nrows());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / lambda;
        }
    }
    symmetrize(&out)
}

/// Solve `a x = b` for positive-definite `a` by Cholesky.
pub fn solve_spd(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "solve_spd: lhs is {}x{}, rhs has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let l = cholesky(a, Tolerances::default().pd_check_eps)?;
    Ok(cholesky_solve(&l, b))
}

/// Solve with a precomputed lower Cholesky factor.
pub fn cholesky_solve(l: &Mat, b: &Mat) -> Mat {
    let y = l
        .solve_lower_triangular(b)
        .expect("Cholesky factor has a positive diagonal");
    l.transpose()
        .solve_upper_triangular(&y)
        .expect("Cholesky factor has a positive diagonal")
}

/// Symmetric PSD square root factor `B` with `B B^T = m`, tolerating
/// singular `m` (negative round-off eigenvalues are clipped to zero).
pub fn psd_factor(m: &Mat) -> Result<Mat> {
    let sym = symmetrize(m)?;
    let eig = sym.symmetric_eigen();
    let mut b = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        b.column_mut(j).scale_mut(s);
    }
    Ok(b)
}

pub fn min_eigenvalue(m: &Mat) -> Result<f64> {
    Ok(symmetrize(m)?.symmetric_eigen().eigenvalues.min())
}

pub fn spectral_radius(m: &Mat) -> Result<f64> {
    ensure_square(m)?;
    Ok(m.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max))
}

/// Column-wise mean of a data matrix whose rows are samples.
pub fn column_means(x: &Mat) -> Vector {
    let n = x.nrows() as f64;
    Vector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Sample covariance of the rows of `x` with `ddof` degrees-of-freedom
/// correction.
pub fn sample_covariance(x: &Mat, ddof: usize) -> Result<Mat> {
    let n = x.nrows();
    if n <= ddof {
        return Err(Error::InsufficientData {
            actual: n,
            required: ddof + 1,
        });
    }
    let mean = column_means(x);
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - ddof) as f64;
    symmetrize(&cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, v)
    }

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn symmetrize_examples() {
        assert_eq!(
            symmetrize(&m(2, 2, &[1.0, 2.0, 0.0, 1.0])).unwrap(),
            m(2, 2, &[1.0, 1.0, 1.0, 1.0])
        );
        assert_eq!(symmetrize(&Mat::identity(3, 3)).unwrap(), Mat::identity(3, 3));
        assert_eq!(symmetrize(&m(2, 2, &[0.0, -3.0, 3.0, 0.0])).unwrap(), Mat::zeros(2, 2));
        assert!(matches!(symmetrize(&Mat::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn positive_definite_examples() {
        let tol = Tolerances::default();
        assert!(is_positive_definite(&Mat::identity(4, 4), &tol).unwrap());
        assert!(!is_positive_definite(&m(2, 2, &[1.0, 2.0, 2.0, 1.0]), &tol).unwrap());
        assert!(!is_positive_definite(&Mat::zeros(2, 2), &tol).unwrap());
        assert!(matches!(
            is_positive_definite(&m(1, 1, &[f64::NAN]), &tol),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn pd_check_agrees_with_eigenvalues() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(2..=10);
            // Shift a random symmetric matrix so roughly half are PD.
            let b = random_mat(&mut rng, n, n);
            let shift = rng.random_range(-1.0..2.0) * n as f64 * 0.3;
            let s = symmetrize(&b).unwrap() + Mat::identity(n, n) * shift;
            let min = s.clone().symmetric_eigen().eigenvalues.min();
            if min.abs() < 1e-6 {
                continue;
            }
            assert_eq!(is_positive_definite(&s, &tol).unwrap(), min > 0.0);
        }
    }

    #[test]
    fn pseudo_inverse_examples() {
        let tol = Tolerances::default();
        let p = pseudo_inverse(&m(2, 2, &[2.0, 0.0, 0.0, 4.0]), &tol).unwrap();
        assert_relative_eq!(p, m(2, 2, &[0.5, 0.0, 0.0, 0.25]), epsilon = 1e-15);
        let p = pseudo_inverse(&m(2, 2, &[1.0, 0.0, 0.0, 0.0]), &tol).unwrap();
        assert_relative_eq!(p, m(2, 2, &[1.0, 0.0, 0.0, 0.0]), epsilon = 1e-15);
        assert!(pseudo_inverse(&Mat::zeros(2, 2), &tol)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn pseudo_inverse_penrose_identities() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (r, c) in [(5, 3), (3, 5), (4, 4)] {
            let a = random_mat(&mut rng, r, c);
            let p = pseudo_inverse(&a, &tol).unwrap();
            assert_relative_eq!(&a * &p * &a, a, epsilon = 1e-8);
            assert_relative_eq!(&p * &a * &p, p, epsilon = 1e-8);
            let ap = &a * &p;
            let pa = &p * &a;
            assert_relative_eq!(ap.transpose(), ap, epsilon = 1e-8);
            assert_relative_eq!(pa.transpose(), pa, epsilon = 1e-8);
        }
        // Rank-deficient 5x3 (third column = sum of the first two).
        let mut a = random_mat(&mut rng, 5, 3);
        let sum = a.column(0) + a.column(1);
        a.set_column(2, &sum);
        let p = pseudo_inverse(&a, &tol).unwrap();
        assert_relative_eq!(&a * &p * &a, a, epsilon = 1e-8);
        assert_relative_eq!(&p * &a * &p, p, epsilon = 1e-8);
    }

    #[test]
    fn symmetric_pseudo_inverse_matches_svd_version() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [1, 2, 5] {
            let b = random_mat(&mut rng, n, n);
            let s = symmetrize(&b).unwrap();
            let p = symmetric_pseudo_inverse(&s, &tol).unwrap();
            assert_eq!(p, p.transpose());
            assert_relative_eq!(p, pseudo_inverse(&s, &tol).unwrap(), epsilon = 1e-8);
            assert_relative_eq!(&s * &p * &s, s, epsilon = 1e-8);
        }
        let p = symmetric_pseudo_inverse(&m(2, 2, &[1.0, 1.0, 1.0, 1.0]), &tol).unwrap();
        assert_relative_eq!(p, m(2, 2, &[0.25, 0.25, 0.25, 0.25]), epsilon = 1e-15);
    }

    #[test]
    fn symmetric_pseudo_inverse_keeps_small_directions() {
        // Eigenvalues 1e12 and 1: applying the inverse to `a v` must recover
        // `v`, including its component along the soft direction.
        let tol = Tolerances::default();
        let th = 0.3_f64;
        let u = Vector::from_vec(vec![th.cos(), th.sin()]);
        let w = Vector::from_vec(vec![-th.sin(), th.cos()]);
        let a = &u * u.transpose() * 1e12 + &w * w.transpose();
        let p = symmetric_pseudo_inverse(&a, &tol).unwrap();
        let v = &u * 0.7 + &w * 0.3;
        let x = &p * (&a * &v);
        assert!((x - v).amax() < 1e-4);
    }

    #[test]
    fn solve_spd_examples() {
        let b = m(2, 3, &[1.0, -2.0, 3.0, 0.5, 7.0, -1.0]);
        assert_relative_eq!(solve_spd(&Mat::identity(2, 2), &b).unwrap(), b);
        assert_relative_eq!(solve_spd(&m(1, 1, &[4.0]), &m(1, 1, &[2.0])).unwrap(), m(1, 1, &[0.5]));
        assert!(matches!(
            solve_spd(&m(2, 2, &[1.0, 2.0, 2.0, 1.0]), &b),
            Err(Error::NotPositiveDefinite(_))
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [2, 5, 10] {
            let g = random_mat(&mut rng, n, n);
            let a = &g * g.transpose() + Mat::identity(n, n);
            let b = random_mat(&mut rng, n, 2);
            let x = solve_spd(&a, &b).unwrap();
            let resid = (&a * &x - &b).norm() / b.norm();
            assert!(resid <= 1e-10, "residual {resid}");
        }
    }

    #[test]
    fn spd_validation() {
        let tol = Tolerances::default();
        assert!(SpdMat::try_new(Mat::identity(2, 2), &tol).is_ok());
        assert!(SpdMat::try_new(m(2, 2, &[1.0, 2.0, 2.0, 1.0]), &tol).is_err());
        assert!(SpdMat::try_new(m(2, 2, &[1.0, 0.5, 0.0, 1.0]), &tol).is_err());
        assert!(Tolerances { pinv_rcond: 0.0, ..tol }.validate().is_err());
    }

    #[test]
    fn sample_covariance_ddof() {
        let x = m(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(sample_covariance(&x, 1).unwrap()[(0, 0)], 5.0 / 3.0);
        assert_relative_eq!(sample_covariance(&x, 0).unwrap()[(0, 0)], 1.25);
    }

    proptest! {
        #[test]
        fn symmetrize_is_idempotent(v in proptest::collection::vec(-1e3f64..1e3, 9)) {
            let a = Mat::from_row_slice(3, 3, &v);
            let s = symmetrize(&a).unwrap();
            prop_assert_eq!(symmetrize(&s).unwrap(), s);
        }

        #[test]
        fn pinv_is_an_involution(seed in 0u64..500, r in 1usize..6, c in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_mat(&mut rng, r, c);
            let svd = a.clone().svd(false, false);
            let cond = svd.singular_values.max() / svd.singular_values.min();
            prop_assume!(cond < 1e8);
            let tol = Tolerances::default();
            let back = pseudo_inverse(&pseudo_inverse(&a, &tol).unwrap(), &tol).unwrap();
            prop_assert!((back - &a).amax() < 1e-8);
        }
    }
}

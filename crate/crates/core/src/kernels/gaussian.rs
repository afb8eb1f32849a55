use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Maximum number of diagonal-jitter retries in [`cholesky_factor`].
pub const JITTER_ATTEMPTS: usize = 6;

const SYMMETRY_TOL: f64 = 1e-9;

/// Lower Cholesky factor plus the diagonal jitter that was needed to obtain it.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    pub lower: DMatrix<f64>,
    pub jitter: f64,
}

/// Factor a symmetric positive (semi-)definite matrix as `L·Lᵀ`.
///
/// When the plain factorization fails, `jitter·I` is added, starting at
/// `1e-12·trace/dim` and growing tenfold per attempt, at most
/// [`JITTER_ATTEMPTS`] times.
pub fn cholesky_factor(matrix: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "cholesky needs a non-empty square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    let asym = (matrix - matrix.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    if let Some(ch) = matrix.clone().cholesky() {
        return Ok(CholeskyFactor {
            lower: ch.unpack(),
            jitter: 0.0,
        });
    }
    let base = (matrix.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut jitter = 1e-12 * base;
    for _ in 0..JITTER_ATTEMPTS {
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            return Ok(CholeskyFactor {
                lower: ch.unpack(),
                jitter,
            });
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        attempts: JITTER_ATTEMPTS,
        last_jitter: jitter / 10.0,
    })
}

#[derive(Clone, Debug)]
pub struct GaussianParams {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        Ok(Self { mean, covariance })
    }
}

/// One draw from `N(mean, covariance)` as `mean + L·z`.
pub fn sample_mvn<R: Rng + ?Sized>(params: &GaussianParams, rng: &mut R) -> Result<DVector<f64>> {
    let factor = cholesky_factor(&params.covariance)?;
    let z = DVector::from_fn(params.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(&params.mean + factor.lower * z)
}

pub fn sample_standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A Gaussian given in information form, `N(P⁻¹h, P⁻¹)`, with `P` factored once.
///
/// All conditionals of the blocked sampler share their precision across samples
/// (or across weight rows), so one factorization serves a whole batch of draws.
#[derive(Clone, Debug)]
pub struct PrecisionFactor {
    factor: CholeskyFactor,
}

impl PrecisionFactor {
    pub fn new(precision: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            factor: cholesky_factor(precision)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.lower.nrows()
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    /// `P⁻¹·rhs`, column by column.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let l = &self.factor.lower;
        let y = l
            .solve_lower_triangular(rhs)
            .expect("cholesky factor has a positive diagonal");
        l.tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `P⁻¹`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.solve(&DMatrix::identity(self.dim(), self.dim()))
    }

    /// Each column of the result is an independent draw from `N(P⁻¹h_j, P⁻¹)`
    /// where `h_j` is column `j` of `rhs`.
    pub fn sample_columns<R: Rng + ?Sized>(&self, rhs: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
        let mean = self.solve(rhs);
        let xi = sample_standard_normal_matrix(self.dim(), rhs.ncols(), rng);
        let noise = self
            .factor
            .lower
            .tr_solve_lower_triangular(&xi)
            .expect("cholesky factor has a positive diagonal");
        mean + noise
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn identity_factor() {
        let f = cholesky_factor(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(f.lower, DMatrix::identity(2, 2));
        assert_eq!(f.jitter, 0.0);
    }

    #[test]
    fn known_two_by_two() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let f = cholesky_factor(&m).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2f64.sqrt()]);
        assert!((&f.lower - expect).amax() < 1e-15);
        assert!((&f.lower * f.lower.transpose() - &m).amax() <= 1e-10 * m.amax());
    }

    #[test]
    fn rank_deficient_needs_jitter() {
        let m = DMatrix::from_element(2, 2, 1.0);
        let f = cholesky_factor(&m).unwrap();
        assert!(f.jitter > 0.0);
        let err = (&f.lower * f.lower.transpose() - &m).amax();
        assert!(err <= 10.0 * f.jitter, "err {err} jitter {}", f.jitter);
    }

    #[test]
    fn indefinite_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            cholesky_factor(&m),
            Err(Error::NotPositiveDefinite {
                attempts: JITTER_ATTEMPTS,
                ..
            })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(cholesky_factor(&asym), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn mvn_standard_moments() {
        let mut rng = RngStream::new(5, 0);
        let p = GaussianParams::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let factor = cholesky_factor(&p.covariance).unwrap();
        let n = 100_000;
        let mut sum = DVector::zeros(2);
        let mut outer = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &p.mean + &factor.lower * z;
            outer += &x * x.transpose();
            sum += x;
        }
        let mean = sum / n as f64;
        let cov = outer / n as f64 - &mean * mean.transpose();
        assert!(mean.amax() < 0.02);
        assert!((cov - DMatrix::identity(2, 2)).amax() < 0.05);
    }

    #[test]
    fn precision_form_matches_covariance_form() {
        let p = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let pf = PrecisionFactor::new(&p).unwrap();
        let cov = pf.covariance();
        assert!((&p * &cov - DMatrix::identity(3, 3)).amax() < 1e-12);
    }
}

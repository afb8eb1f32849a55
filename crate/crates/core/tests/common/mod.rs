//! Independent reference computations used by the integration tests:
//! Kolmogorov–Smirnov tests, adaptive quadrature, Gaussian conditionals read
//! off a log-density by finite differences, and moment checks.

#![allow(dead_code)]

pub mod suite;

use nalgebra::{DMatrix, DVector};

/// Asymptotic Kolmogorov tail `P(K > λ)` with the small-sample correction
/// `λ = (√n + 0.12 + 0.11/√n)·D`.
pub fn ks_pvalue(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// One-sample KS statistic and p-value against a CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    (d, ks_pvalue(d, n))
}

/// Two-sample KS statistic and p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    (d, ks_pvalue(d, na * nb / (na + nb)))
}

/// Adaptive Simpson quadrature.
pub fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// CDF of an unnormalized 1-D log-density, tabulated on `[lo, hi]` by adaptive
/// Simpson on each cell of a fine grid and interpolated linearly.
pub struct NumericCdf {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl NumericCdf {
    pub fn new(log_density: impl Fn(f64) -> f64, lo: f64, hi: f64, cells: usize) -> Self {
        let grid: Vec<f64> = (0..=cells).map(|i| lo + (hi - lo) * i as f64 / cells as f64).collect();
        // Shift by the largest value on a finer scan so the exponent stays in range.
        let scan = 20 * cells;
        let peak = (0..=scan)
            .map(|i| log_density(lo + (hi - lo) * i as f64 / scan as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        let dens = |x: f64| (log_density(x) - peak).exp();
        let mut cdf = vec![0.0; grid.len()];
        for i in 1..grid.len() {
            cdf[i] = cdf[i - 1] + simpson(&dens, grid[i - 1], grid[i], 1e-13);
        }
        let total = cdf[cells];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { grid, cdf }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let t = (x - lo) / (hi - lo) * (self.grid.len() - 1) as f64;
        let i = (t.floor() as usize).min(self.grid.len() - 2);
        let w = t - i as f64;
        self.cdf[i] * (1.0 - w) + self.cdf[i + 1] * w
    }

    /// Mean of the tabulated law.
    pub fn mean(&self) -> f64 {
        (1..self.grid.len())
            .map(|i| 0.5 * (self.grid[i] + self.grid[i - 1]) * (self.cdf[i] - self.cdf[i - 1]))
            .sum()
    }
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Mean and covariance of a Gaussian given by its (unnormalized) log-density,
/// read off by central differences with step `h` around `center`. Exact for
/// quadratics up to rounding.
pub fn gaussian_from_log_density(f: impl Fn(&[f64]) -> f64, center: &[f64], h: f64) -> (DVector<f64>, DMatrix<f64>) {
    let d = center.len();
    let at = |steps: &[(usize, f64)]| {
        let mut x = center.to_vec();
        for &(i, s) in steps {
            x[i] += s;
        }
        f(&x)
    };
    let f0 = at(&[]);
    let mut prec = DMatrix::zeros(d, d);
    let mut grad = DVector::zeros(d);
    for i in 0..d {
        let (fp, fm) = (at(&[(i, h)]), at(&[(i, -h)]));
        grad[i] = (fp - fm) / (2.0 * h);
        prec[(i, i)] = -(fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let v = -(at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            prec[(i, j)] = v;
            prec[(j, i)] = v;
        }
    }
    let cov = prec.clone().try_inverse().expect("precision is invertible");
    let mean = DVector::from_column_slice(center) + &cov * grad;
    (mean, cov)
}

/// Check sample mean and covariance against a Gaussian within `k` Monte Carlo
/// standard errors per entry, and KS-test every standardized coordinate.
/// Returns a description of the first failure.
pub fn check_gaussian_draws(
    draws: &[Vec<f64>],
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    k: f64,
    alpha: f64,
) -> Result<(), String> {
    let n = draws.len() as f64;
    let d = mean.len();
    for i in 0..d {
        let m = draws.iter().map(|x| x[i]).sum::<f64>() / n;
        let se = (cov[(i, i)] / n).sqrt();
        if (m - mean[i]).abs() > k * se {
            return Err(format!("mean[{i}] = {m}, want {} ± {}", mean[i], k * se));
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let c = draws.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / n;
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n).sqrt();
            if (c - cov[(i, j)]).abs() > k * se {
                return Err(format!("cov[{i},{j}] = {c}, want {} ± {}", cov[(i, j)], k * se));
            }
        }
    }
    // With many coordinates, a Bonferroni split keeps the family-wise level.
    let level = alpha / d as f64;
    for i in 0..d {
        let sd = cov[(i, i)].sqrt();
        let xs: Vec<f64> = draws.iter().map(|x| (x[i] - mean[i]) / sd).collect();
        let (ks, p) = ks_one_sample(&xs, phi);
        if p < level {
            return Err(format!("coordinate {i}: KS D = {ks}, p = {p}"));
        }
    }
    Ok(())
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let b = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|k| x[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (var / batches as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

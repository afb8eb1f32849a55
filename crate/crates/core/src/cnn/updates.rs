use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cnn::{ConvIndexMap, PoolMap};
use crate::error::{Error, Result};
use crate::gibbs::update_bias;
use crate::kernels::PrecisionFactor;

/// A Gaussian conditional in information form: every column `j` of `rhs`
/// defines an independent draw from `N(P⁻¹ rhs_j, P⁻¹)`.
#[derive(Clone, Debug)]
pub struct InformationForm {
    pub precision: DMatrix<f64>,
    pub rhs: DMatrix<f64>,
}

impl InformationForm {
    pub fn factor(&self) -> Result<PrecisionFactor> {
        PrecisionFactor::new(&self.precision)
    }

    pub fn mean(&self) -> Result<DMatrix<f64>> {
        Ok(self.factor()?.solve(&self.rhs))
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        Ok(self.factor()?.covariance())
    }

    /// One draw per column, returned one per row.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        Ok(self.factor()?.sample_columns(&self.rhs, rng).transpose())
    }
}

fn check_conv(map: &ConvIndexMap, input: &DMatrix<f64>, z_next: &DMatrix<f64>) -> Result<()> {
    let spec = map.spec();
    if input.ncols() != spec.in_len() || z_next.ncols() != spec.out_len() || input.nrows() != z_next.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "conv layer expects inputs with {} and outputs with {} columns, got {:?} and {:?}",
            spec.in_len(),
            spec.out_len(),
            input.shape(),
            z_next.shape()
        )));
    }
    Ok(())
}

/// `Ã = (1/Δ_Z) Σ_{μ,a} patch·patchᵀ + λ_W I` over packed filter indices.
/// It depends only on the layer input, so it can be cached when that is fixed.
pub fn conv_w_precision(map: &ConvIndexMap, input: &DMatrix<f64>, dz: f64, lambda_w: f64) -> DMatrix<f64> {
    let k = map.spec().packed_len();
    let mut a = DMatrix::zeros(k, k);
    let mut patch = vec![0.0; k];
    for mu in 0..input.nrows() {
        for pos in 0..map.positions() {
            for (v, &src) in patch.iter_mut().zip(map.patch(pos)) {
                *v = input[(mu, src)];
            }
            for i in 0..k {
                let pi = patch[i];
                if pi == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    a[(i, j)] += pi * patch[j];
                }
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            a[(j, i)] = a[(i, j)];
        }
    }
    a /= dz;
    for i in 0..k {
        a[(i, i)] += lambda_w;
    }
    a
}

/// Conditional of the packed filter rows given the layer input and output.
/// Column `α` of `rhs` is `(1/Δ_Z) Σ_{μ,a} (z_{μαa} − b_α) · patch_{μa}`.
pub fn conv_w_conditional(
    map: &ConvIndexMap,
    input: &DMatrix<f64>,
    precision: Option<&DMatrix<f64>>,
    z_next: &DMatrix<f64>,
    bias: &DVector<f64>,
    dz: f64,
    lambda_w: f64,
) -> Result<InformationForm> {
    check_conv(map, input, z_next)?;
    let spec = map.spec();
    let k = spec.packed_len();
    let mut rhs = DMatrix::zeros(k, spec.channels_out);
    for mu in 0..input.nrows() {
        for pos in 0..map.positions() {
            let patch = map.patch(pos);
            for alpha in 0..spec.channels_out {
                let r = z_next[(mu, map.out_index(alpha, pos))] - bias[alpha];
                if r == 0.0 {
                    continue;
                }
                for (i, &src) in patch.iter().enumerate() {
                    rhs[(i, alpha)] += r * input[(mu, src)];
                }
            }
        }
    }
    rhs /= dz;
    let precision = match precision {
        Some(p) => p.clone(),
        None => conv_w_precision(map, input, dz, lambda_w),
    };
    Ok(InformationForm { precision, rhs })
}

/// Redraw a convolution filter, one output channel per row.
#[allow(clippy::too_many_arguments)]
pub fn update_conv_w<R: Rng + ?Sized>(
    map: &ConvIndexMap,
    input: &DMatrix<f64>,
    precision: Option<&DMatrix<f64>>,
    z_next: &DMatrix<f64>,
    bias: &DVector<f64>,
    dz: f64,
    lambda_w: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    conv_w_conditional(map, input, precision, z_next, bias, dz, lambda_w)?.sample(rng)
}

/// Redraw the per-channel convolution bias from the bias-free residuals.
pub fn update_conv_bias<R: Rng + ?Sized>(
    map: &ConvIndexMap,
    input: &DMatrix<f64>,
    weight: &DMatrix<f64>,
    z_next: &DMatrix<f64>,
    dz: f64,
    lambda_b: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_conv(map, input, z_next)?;
    let spec = map.spec();
    let mut sums = DVector::zeros(spec.channels_out);
    for mu in 0..input.nrows() {
        for pos in 0..map.positions() {
            let patch = map.patch(pos);
            for alpha in 0..spec.channels_out {
                let conv: f64 = patch
                    .iter()
                    .enumerate()
                    .map(|(i, &src)| weight[(alpha, i)] * input[(mu, src)])
                    .sum();
                sums[alpha] += z_next[(mu, map.out_index(alpha, pos))] - conv;
            }
        }
    }
    Ok(update_bias(&sums, input.nrows() * map.positions(), dz, lambda_b, rng))
}

/// The convolution as an explicit `out_len × in_len` matrix.
pub fn conv_operator(map: &ConvIndexMap, weight: &DMatrix<f64>) -> DMatrix<f64> {
    let spec = map.spec();
    let mut m = DMatrix::zeros(spec.out_len(), spec.in_len());
    for pos in 0..map.positions() {
        for alpha in 0..spec.channels_out {
            let row = map.out_index(alpha, pos);
            for (i, &src) in map.patch(pos).iter().enumerate() {
                m[(row, src)] += weight[(alpha, i)];
            }
        }
    }
    m
}

/// Conditional of a convolution's input pixels, one column of `rhs` per sample.
///
/// `A = I/Δ_X + (1/Δ_Z) Σ_{α,a} w_α w_αᵀ` where each term only touches the
/// pixels of receptive field `a`, so entries between pixels that never share a
/// field stay exactly zero.
pub fn conv_x_conditional(
    map: &ConvIndexMap,
    weight: &DMatrix<f64>,
    bias: &DVector<f64>,
    sigma_prev: &DMatrix<f64>,
    z_next: &DMatrix<f64>,
    dx: f64,
    dz: f64,
) -> Result<InformationForm> {
    check_conv(map, sigma_prev, z_next)?;
    let spec = map.spec();
    let d = spec.in_len();
    let mut a = DMatrix::zeros(d, d);
    for pos in 0..map.positions() {
        let patch = map.patch(pos);
        for alpha in 0..spec.channels_out {
            for (i, &pi) in patch.iter().enumerate() {
                let wi = weight[(alpha, i)] / dz;
                for (j, &pj) in patch.iter().enumerate() {
                    a[(pi, pj)] += wi * weight[(alpha, j)];
                }
            }
        }
    }
    for i in 0..d {
        a[(i, i)] += 1.0 / dx;
    }
    let n = sigma_prev.nrows();
    let mut rhs = sigma_prev.transpose() / dx;
    for mu in 0..n {
        for pos in 0..map.positions() {
            let patch = map.patch(pos);
            for alpha in 0..spec.channels_out {
                let r = (z_next[(mu, map.out_index(alpha, pos))] - bias[alpha]) / dz;
                for (i, &src) in patch.iter().enumerate() {
                    rhs[(src, mu)] += r * weight[(alpha, i)];
                }
            }
        }
    }
    Ok(InformationForm { precision: a, rhs })
}

/// Redraw a convolution's input pixels for every sample.
#[allow(clippy::too_many_arguments)]
pub fn update_conv_x<R: Rng + ?Sized>(
    map: &ConvIndexMap,
    weight: &DMatrix<f64>,
    bias: &DVector<f64>,
    sigma_prev: &DMatrix<f64>,
    z_next: &DMatrix<f64>,
    dx: f64,
    dz: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    conv_x_conditional(map, weight, bias, sigma_prev, z_next, dx, dz)?.sample(rng)
}

/// Redraw the input pixels of an average-pooling layer.
///
/// Pixels of one receptive field `a` (size `k`) are jointly Gaussian with mean
/// `σ_b + Δ/(Δ + kΔ')·(pooled_a − mean_field σ)` and covariance
/// `Δ I − Δ²/(k(kΔ' + Δ)) 11ᵀ`, where `Δ` is the pixels' own noise and `Δ'`
/// the pooled output's. The covariance is reached from `N(0, Δ I)` by
/// removing a fraction `q` of the field sum. Pixels outside every field are
/// drawn from `N(σ_b, Δ)`.
pub fn update_pool_x<R: Rng + ?Sized>(
    map: &PoolMap,
    sigma_prev: &DMatrix<f64>,
    pooled: &DMatrix<f64>,
    dx: f64,
    dx_pooled: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let spec = map.spec();
    if sigma_prev.ncols() != spec.in_len() || pooled.ncols() != spec.out_len() || sigma_prev.nrows() != pooled.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "pooling expects {} inputs and {} outputs, got {:?} and {:?}",
            spec.in_len(),
            spec.out_len(),
            sigma_prev.shape(),
            pooled.shape()
        )));
    }
    let k = map.window();
    let kf = k as f64;
    let gain = dx / (dx + kf * dx_pooled);
    let q = (1.0 - (kf * dx_pooled / (kf * dx_pooled + dx)).sqrt()) / kf;
    let sd = dx.sqrt();
    let mut out = DMatrix::zeros(sigma_prev.nrows(), sigma_prev.ncols());
    let mut noise = vec![0.0; k];
    for mu in 0..sigma_prev.nrows() {
        for a in 0..spec.out_len() {
            let field = map.preimage(a);
            let avg = field.iter().map(|&b| sigma_prev[(mu, b)]).sum::<f64>() / kf;
            let shift = gain * (pooled[(mu, a)] - avg);
            for v in noise.iter_mut() {
                *v = sd * rng.sample::<f64, _>(StandardNormal);
            }
            let total: f64 = noise.iter().sum();
            for (&b, &z) in field.iter().zip(&noise) {
                out[(mu, b)] = sigma_prev[(mu, b)] + shift + z - q * total;
            }
        }
        for &b in map.discarded() {
            out[(mu, b)] = sigma_prev[(mu, b)] + sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(out)
}

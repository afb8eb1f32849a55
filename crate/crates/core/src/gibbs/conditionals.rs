use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::PrecisionFactor;
use crate::model::column_sums;

/// Redraw the post-activations that feed a dense layer.
///
/// Row `μ` is drawn from the Gaussian with precision `WᵀW/Δ_Z + I/Δ_X` and
/// information vector `σ(z)_μ/Δ_X + Wᵀ(z_next,μ − b)/Δ_Z`. One factorization
/// serves all rows.
pub fn update_x_layer<R: Rng + ?Sized>(
    sigma_z: &DMatrix<f64>,
    weight: &DMatrix<f64>,
    bias: &DVector<f64>,
    z_next: &DMatrix<f64>,
    dx: f64,
    dz: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let d = weight.ncols();
    if sigma_z.ncols() != d || z_next.ncols() != weight.nrows() || sigma_z.nrows() != z_next.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "x update: σ(z) {:?}, W {:?}, z_next {:?}",
            sigma_z.shape(),
            weight.shape(),
            z_next.shape()
        )));
    }
    let mut precision = weight.tr_mul(weight) / dz;
    for i in 0..d {
        precision[(i, i)] += 1.0 / dx;
    }
    let factor = PrecisionFactor::new(&precision)?;
    let centred = subtract_bias(z_next, bias);
    let rhs = sigma_z.transpose() / dx + weight.tr_mul(&centred.transpose()) / dz;
    Ok(factor.sample_columns(&rhs, rng).transpose())
}

/// Redraw the weights of a dense layer, row by row, from
/// `N(Σ Aᵀ(z_α − b_α)/Δ_Z, Σ)` with `Σ⁻¹ = AᵀA/Δ_Z + λ_W I`.
///
/// `gram` may carry a precomputed `AᵀA` when the input is fixed.
pub fn update_w_layer<R: Rng + ?Sized>(
    input: &DMatrix<f64>,
    gram: Option<&DMatrix<f64>>,
    z_next: &DMatrix<f64>,
    bias: &DVector<f64>,
    dz: f64,
    lambda_w: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if input.nrows() != z_next.nrows() || bias.len() != z_next.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "w update: input {:?}, z_next {:?}, bias {}",
            input.shape(),
            z_next.shape(),
            bias.len()
        )));
    }
    let d = input.ncols();
    let mut precision = match gram {
        Some(g) => g / dz,
        None => input.tr_mul(input) / dz,
    };
    for i in 0..d {
        precision[(i, i)] += lambda_w;
    }
    let factor = PrecisionFactor::new(&precision)?;
    let rhs = input.tr_mul(&subtract_bias(z_next, bias)) / dz;
    Ok(factor.sample_columns(&rhs, rng).transpose())
}

/// Redraw a bias vector: `b_α ~ N(Σ_μ r_αμ/(n + Δ_Z λ_b), Δ_Z/(n + Δ_Z λ_b))`
/// where `r = z_next − layer(input)` is the bias-free residual and `n` counts
/// the residual entries per bias coordinate.
pub fn update_bias<R: Rng + ?Sized>(
    residual_sums: &DVector<f64>,
    count: usize,
    dz: f64,
    lambda_b: f64,
    rng: &mut R,
) -> DVector<f64> {
    let denom = count as f64 + dz * lambda_b;
    let sd = (dz / denom).sqrt();
    residual_sums.map(|s| s / denom + sd * rng.sample::<f64, _>(StandardNormal))
}

/// Dense-layer bias update: residual `z_next − input·Wᵀ`.
pub fn update_bias_layer<R: Rng + ?Sized>(
    input: &DMatrix<f64>,
    weight: &DMatrix<f64>,
    z_next: &DMatrix<f64>,
    dz: f64,
    lambda_b: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if input.ncols() != weight.ncols() || z_next.ncols() != weight.nrows() || input.nrows() != z_next.nrows() {
        return Err(Error::ShapeMismatch("bias update shapes disagree".into()));
    }
    let residual = z_next - input * weight.transpose();
    Ok(update_bias(&column_sums(&residual), input.nrows(), dz, lambda_b, rng))
}

pub(crate) fn subtract_bias(m: &DMatrix<f64>, bias: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        row -= bias.transpose();
    }
    out
}

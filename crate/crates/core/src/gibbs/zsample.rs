use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::{ln_erfcx, sample_truncated_normal, stable_branch_probability, TruncationSide};
use crate::model::Activation;

/// Log masses of the two half-lines of the pre-activation conditional
///
/// `p(z) ∝ exp(-(z - wx)²/(2Δ_Z) - (σ(z) - x)²/(2Δ_X))`,
///
/// together with the Gaussian each half-line is a truncation of.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZBranchMasses {
    pub log_mass_pos: f64,
    pub log_mass_neg: f64,
    /// (mean, variance) of the Gaussian restricted to `z > 0`.
    pub pos: (f64, f64),
    /// (mean, variance) of the Gaussian restricted to `z < 0`.
    pub neg: (f64, f64),
}

impl ZBranchMasses {
    /// Probability of the negative half-line.
    pub fn p_neg(&self) -> f64 {
        stable_branch_probability(self.log_mass_pos, self.log_mass_neg)
    }
}

pub fn z_branch_masses(activation: Activation, wx: f64, x_next: f64, dz: f64, dx: f64) -> Result<ZBranchMasses> {
    // Shared factor exp(-wx²/(2Δ_Z) - x²/(2Δ_X)) pulled out of every branch.
    let common = -wx * wx / (2.0 * dz) - x_next * x_next / (2.0 * dx);
    let v = dx * dz / (dx + dz);
    let half_log = |var: f64| 0.5 * (PI * var / 2.0).ln();
    Ok(match activation {
        Activation::Relu => {
            let m = (dz * x_next + dx * wx) / (dx + dz);
            ZBranchMasses {
                log_mass_pos: common + half_log(v) + ln_erfcx(-m / (2.0 * v).sqrt()),
                log_mass_neg: common + half_log(dz) + ln_erfcx(wx / (2.0 * dz).sqrt()),
                pos: (m, v),
                neg: (wx, dz),
            }
        }
        Activation::Sign => {
            let q = wx / (2.0 * dz).sqrt();
            let c = common + half_log(dz) - 1.0 / (2.0 * dx);
            ZBranchMasses {
                log_mass_pos: c + x_next / dx + ln_erfcx(-q),
                log_mass_neg: c - x_next / dx + ln_erfcx(q),
                pos: (wx, dz),
                neg: (wx, dz),
            }
        }
        Activation::Abs => {
            let m_pos = (dx * wx + dz * x_next) / (dx + dz);
            let m_neg = (dx * wx - dz * x_next) / (dx + dz);
            let s = (2.0 * v).sqrt();
            ZBranchMasses {
                log_mass_pos: common + half_log(v) + ln_erfcx(-m_pos / s),
                log_mass_neg: common + half_log(v) + ln_erfcx(m_neg / s),
                pos: (m_pos, v),
                neg: (m_neg, v),
            }
        }
        Activation::Linear => return Err(Error::UnsupportedActivation("linear")),
    })
}

/// One draw of a pre-activation from its conditional.
pub fn sample_z<R: Rng + ?Sized>(
    activation: Activation,
    wx: f64,
    x_next: f64,
    dz: f64,
    dx: f64,
    rng: &mut R,
) -> Result<f64> {
    if activation == Activation::Linear {
        return Ok(sample_z_linear(wx, x_next, dz, dx, rng));
    }
    let masses = z_branch_masses(activation, wx, x_next, dz, dx)?;
    let u: f64 = rng.random();
    Ok(if u < masses.p_neg() {
        sample_truncated_normal(masses.neg.0, masses.neg.1, TruncationSide::Negative, rng)
    } else {
        sample_truncated_normal(masses.pos.0, masses.pos.1, TruncationSide::Positive, rng)
    })
}

/// Exact Gaussian conditional for the identity activation.
pub fn sample_z_linear<R: Rng + ?Sized>(wx: f64, x_next: f64, dz: f64, dx: f64, rng: &mut R) -> f64 {
    let precision = 1.0 / dz + 1.0 / dx;
    let mean = (wx / dz + x_next / dx) / precision;
    mean + precision.recip().sqrt() * rng.sample::<f64, _>(StandardNormal)
}

/// Redraw every entry of a pre-activation block. `wx` holds the noise-free
/// layer means and `x_next` the post-activations fed by this block.
pub fn update_z_layer<R: Rng + ?Sized>(
    activation: Activation,
    wx: &DMatrix<f64>,
    x_next: &DMatrix<f64>,
    dz: f64,
    dx: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if activation == Activation::Linear {
        return Err(Error::UnsupportedActivation("linear"));
    }
    sample_block(activation, wx, x_next, dz, dx, rng)
}

/// Exact Gaussian redraw of a pre-activation block under the identity activation.
pub fn update_z_layer_linear<R: Rng + ?Sized>(
    wx: &DMatrix<f64>,
    x_next: &DMatrix<f64>,
    dz: f64,
    dx: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    sample_block(Activation::Linear, wx, x_next, dz, dx, rng)
}

fn sample_block<R: Rng + ?Sized>(
    activation: Activation,
    wx: &DMatrix<f64>,
    x_next: &DMatrix<f64>,
    dz: f64,
    dx: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if wx.shape() != x_next.shape() {
        return Err(Error::ShapeMismatch(format!(
            "layer means {:?} vs post-activations {:?}",
            wx.shape(),
            x_next.shape()
        )));
    }
    // Row-major traversal so the draw order is sample by sample.
    let mut out = DMatrix::zeros(wx.nrows(), wx.ncols());
    for mu in 0..wx.nrows() {
        for a in 0..wx.ncols() {
            out[(mu, a)] = sample_z(activation, wx[(mu, a)], x_next[(mu, a)], dz, dx, rng)?;
        }
    }
    Ok(out)
}

use rand::Rng;
use statrs::function::erf::erfc_inv;

use super::special::log_upper_tail;

/// Standardized truncation point beyond which the exponential-proposal
/// rejection sampler replaces the inverse CDF.
pub const TAIL_SWITCH: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruncationSide {
    Positive,
    Negative,
}

/// Draw from `N(mu, var)` restricted to `(0, ∞)` or `(-∞, 0)`.
///
/// Inverse CDF on the upper-tail probability when the truncation point lies
/// less than [`TAIL_SWITCH`] standard deviations into the tail, Robert's
/// exponential rejection sampler beyond it. Expected work is bounded for any
/// `mu`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mu: f64, var: f64, side: TruncationSide, rng: &mut R) -> f64 {
    debug_assert!(var > 0.0);
    let sd = var.sqrt();
    match side {
        TruncationSide::Positive => {
            let v = mu + sd * standard_above(-mu / sd, rng);
            if v > 0.0 {
                v
            } else {
                f64::MIN_POSITIVE
            }
        }
        TruncationSide::Negative => {
            let v = mu - sd * standard_above(mu / sd, rng);
            if v < 0.0 {
                v
            } else {
                -f64::MIN_POSITIVE
            }
        }
    }
}

/// `N(0,1)` conditioned on `> a`.
fn standard_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a > TAIL_SWITCH {
        let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let u: f64 = 1.0 - rng.random::<f64>();
            let z = a - u.ln() / lambda;
            let accept = (-0.5 * (z - lambda) * (z - lambda)).exp();
            if rng.random::<f64>() <= accept {
                return z;
            }
        }
    }
    let tail = log_upper_tail(a).exp();
    let u: f64 = 1.0 - rng.random::<f64>();
    let x = std::f64::consts::SQRT_2 * erfc_inv(2.0 * u * tail);
    x.max(a)
}

use statrs::function::erf::erfc;

const ASYMPTOTIC_FROM: f64 = 25.0;

/// `ln(erfc(x))`, finite for every finite `x`.
pub fn log_erfc(x: f64) -> f64 {
    if x < ASYMPTOTIC_FROM {
        erfc(x).ln()
    } else {
        -x * x + ln_erfcx_asymptotic(x)
    }
}

/// `ln(exp(x²)·erfc(x))`, the log of the scaled complementary error function.
///
/// Gaussian half-line masses are written as `exp(q²)·erfc(q)`; working with this
/// quantity directly keeps them finite where `exp(q²)` alone would overflow.
pub fn ln_erfcx(x: f64) -> f64 {
    if x < ASYMPTOTIC_FROM {
        x * x + erfc(x).ln()
    } else {
        ln_erfcx_asymptotic(x)
    }
}

fn ln_erfcx_asymptotic(x: f64) -> f64 {
    // erfcx(x) ~ 1/(x√π) · Σ (-1)^k (2k-1)!! / (2x²)^k
    let inv = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) * inv;
        sum += term;
    }
    sum.ln() - x.ln() - 0.5 * std::f64::consts::PI.ln()
}

/// `ln P(N(0,1) > a)`.
pub fn log_upper_tail(a: f64) -> f64 {
    log_erfc(a * std::f64::consts::FRAC_1_SQRT_2) - std::f64::consts::LN_2
}

/// Probability of the negative branch, `1 / (1 + exp(log_mass_pos - log_mass_neg))`.
///
/// Evaluates the smaller of the two complementary probabilities directly and
/// derives the other as its complement, so swapping the arguments yields values
/// summing to exactly one.
pub fn stable_branch_probability(log_mass_pos: f64, log_mass_neg: f64) -> f64 {
    let d = log_mass_pos - log_mass_neg;
    if d > 0.0 {
        small_side(d)
    } else if d < 0.0 {
        1.0 - small_side(-d)
    } else if d == 0.0 {
        0.5
    } else {
        // Both infinite with the same sign, or NaN input.
        f64::NAN
    }
}

// 1 / (1 + e^d) for d > 0.
fn small_side(d: f64) -> f64 {
    let e = (-d).exp();
    e / (1.0 + e)
}

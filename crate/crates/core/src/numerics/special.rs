//! Scalar special functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
///
/// Finite for every `x > -26.6`; overflows to infinity below that.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        let x2 = x * x;
        return 2.0 * x2.exp() - erfcx(-x);
    }
    if x < 10.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        // Asymptotic series; at x >= 10 the terms fall below 1e-17 well
        // before they start to grow.
        let h = 0.5 / (x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=14 {
            term *= -((2 * k - 1) as f64) * h;
            sum += term;
        }
        sum / (x * PI.sqrt())
    }
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `pdf(a) / cdf(a)`, stable for all `a`.
#[inline]
pub fn inverse_mills(a: f64) -> f64 {
    (2.0 / PI).sqrt() / erfcx(-a * FRAC_1_SQRT_2)
}

/// Numerically stable `ln(sum(exp(v)))`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

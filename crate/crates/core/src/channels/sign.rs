//! Channels whose output law depends on the input only through its sign.
//!
//! Such a channel is a table of outputs `y` with probabilities
//! `q_plus(y) = P(y | z > 0)` and `q_minus(y) = P(y | z < 0)`. Given
//! `z ~ N(p, sigma)` the evidence is
//! `Z_y(a) = q_plus Phi(a) + q_minus Phi(-a)` with `a = p / sqrt(sigma)`,
//! and every quantity below reduces to the ratio `m_y(a) = phi(a) / Z_y(a)`,
//! which is evaluated through the scaled complementary error function so it
//! never underflows.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::numerics::{integrate_1d, quadrature, special};

#[derive(Debug, Clone, PartialEq)]
pub struct SignOutput {
    pub y: f64,
    pub q_plus: f64,
    pub q_minus: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignTable {
    pub outputs: Vec<SignOutput>,
}

impl SignTable {
    pub fn erasure(eps: f64) -> Self {
        Self {
            outputs: vec![
                SignOutput { y: 1.0, q_plus: 1.0 - eps, q_minus: 0.0 },
                SignOutput { y: -1.0, q_plus: 0.0, q_minus: 1.0 - eps },
                SignOutput { y: 0.0, q_plus: eps, q_minus: eps },
            ],
        }
    }

    pub fn symmetric(flip: f64) -> Self {
        Self {
            outputs: vec![
                SignOutput { y: 1.0, q_plus: 1.0 - flip, q_minus: flip },
                SignOutput { y: -1.0, q_plus: flip, q_minus: 1.0 - flip },
            ],
        }
    }

    pub fn lookup(&self, y: f64) -> Result<&SignOutput> {
        self.outputs
            .iter()
            .find(|o| o.y == y)
            .ok_or_else(|| Error::param(format!("output {y} is not in the channel alphabet")))
    }

    pub fn probability(&self, y: f64, z: f64) -> f64 {
        match self.lookup(y) {
            Ok(o) if z >= 0.0 => o.q_plus,
            Ok(o) => o.q_minus,
            Err(_) => 0.0,
        }
    }

    pub fn g_out(&self, p: f64, y: f64, sigma: f64) -> Result<f64> {
        let o = self.lookup(y)?;
        let diff = o.q_plus - o.q_minus;
        if diff == 0.0 {
            return Ok(0.0);
        }
        let sd = sigma.sqrt();
        Ok(diff * ratio(o, p / sd) / sd)
    }

    pub fn d_gout_dp(&self, p: f64, y: f64, sigma: f64) -> Result<f64> {
        let o = self.lookup(y)?;
        let diff = o.q_plus - o.q_minus;
        if diff == 0.0 {
            return Ok(0.0);
        }
        let a = p / sigma.sqrt();
        let m = ratio(o, a);
        Ok(-diff * m * (a + diff * m) / sigma)
    }

    /// `-E d/dp g_out` with `E[Z0^2] = total_variance`.
    pub fn f_out(&self, sigma: f64, total_variance: f64) -> Result<f64> {
        // Conditioning on P and summing Y over the alphabet leaves a
        // Gaussian average over a = P / sqrt(sigma); absorbing the phi(a)
        // factor of the evidence into that Gaussian gives a smooth integrand
        // with variance (v - sigma) / v.
        let v = total_variance;
        let sd = ((v - sigma) / v).max(0.0).sqrt();
        let integrand = |x: f64| {
            let a = sd * x;
            self.outputs
                .iter()
                .map(|o| {
                    let diff = o.q_plus - o.q_minus;
                    if diff == 0.0 {
                        0.0
                    } else {
                        diff * (a + diff * ratio(o, a))
                    }
                })
                .sum::<f64>()
        };
        let mean = if sd == 0.0 { integrand(0.0) } else { quadrature::gaussian_expect_adaptive(integrand, 1e-13)? };
        Ok(mean / (2.0 * PI * sigma * v).sqrt())
    }

    /// Potential `E ln Z_Y(a)` with `a ~ N(0, (1 - sigma) / sigma)`.
    pub fn psi_out(&self, sigma: f64) -> Result<f64> {
        let entropy_term = |a: f64| -> f64 {
            self.outputs
                .iter()
                .map(|o| {
                    let z = o.q_plus * special::norm_cdf(a) + o.q_minus * special::norm_cdf(-a);
                    if z > 0.0 {
                        z * z.ln()
                    } else {
                        0.0
                    }
                })
                .sum()
        };
        let xlogx = |q: f64| if q > 0.0 { q * q.ln() } else { 0.0 };
        let g_plus: f64 = self.outputs.iter().map(|o| xlogx(o.q_plus)).sum();
        let g_minus: f64 = self.outputs.iter().map(|o| xlogx(o.q_minus)).sum();
        let s = ((1.0 - sigma) / sigma).max(0.0).sqrt();
        if s == 0.0 {
            return Ok(entropy_term(0.0));
        }
        // Fold a -> |a| and subtract the a -> +-inf limits so the remaining
        // integrand is smooth and decays like a Gaussian in a.
        let folded = |x: f64| {
            let a = s * x;
            (entropy_term(a) + entropy_term(-a) - g_plus - g_minus) * special::norm_pdf(x)
        };
        let upper = 40.0 / s.max(1.0);
        let tail = integrate_1d(folded, 0.0, upper, 1e-14)?;
        Ok(0.5 * (g_plus + g_minus) + tail)
    }

    /// `H(Y) - H(Y | Z)` for `Z ~ N(0, 1)`.
    pub fn capacity_entropy(&self) -> f64 {
        let xlogx = |q: f64| if q > 0.0 { q * q.ln() } else { 0.0 };
        let h_y: f64 = -self.outputs.iter().map(|o| xlogx(0.5 * (o.q_plus + o.q_minus))).sum::<f64>();
        let h_plus: f64 = -self.outputs.iter().map(|o| xlogx(o.q_plus)).sum::<f64>();
        let h_minus: f64 = -self.outputs.iter().map(|o| xlogx(o.q_minus)).sum::<f64>();
        h_y - 0.5 * (h_plus + h_minus)
    }
}

/// `phi(a) / (q_plus Phi(a) + q_minus Phi(-a))`.
#[inline]
fn ratio(o: &SignOutput, a: f64) -> f64 {
    let mut denom = 0.0;
    if o.q_plus > 0.0 {
        denom += o.q_plus * special::erfcx(-a * FRAC_1_SQRT_2);
    }
    if o.q_minus > 0.0 {
        denom += o.q_minus * special::erfcx(a * FRAC_1_SQRT_2);
    }
    (2.0 / PI).sqrt() / denom
}

//! User-defined channels and the quadrature calculus that serves them.
//!
//! A custom channel only has to provide its log-likelihood, a sampler and,
//! for continuous outputs, a quadrature rule over `Y | z`. Everything else
//! (`g_out`, its derivative, `f_out`, `Psi_out`) is derived by nested
//! Gauss-Hermite rules. This path is meant for smooth likelihoods; sign-type
//! channels are better served by the closed forms in the sibling module.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{gauss_hermite, special::log_sum_exp, QuadratureRule};

/// Output space of a channel.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputAlphabet {
    Discrete(Vec<f64>),
    Continuous,
}

impl OutputAlphabet {
    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::Discrete(_))
    }
}

pub trait CustomChannel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn alphabet(&self) -> OutputAlphabet;

    /// `ln P_out(y | z)`; `-inf` where the output is impossible.
    fn log_likelihood(&self, y: f64, z: f64) -> f64;

    fn sample(&self, z: f64, rng: &mut dyn RngCore) -> f64;

    /// Weighted points representing `Y ~ P_out(. | z)`, weights summing to one.
    ///
    /// The default enumerates a discrete alphabet. Continuous channels must
    /// override it.
    fn output_nodes(&self, z: f64) -> Vec<(f64, f64)> {
        match self.alphabet() {
            OutputAlphabet::Discrete(symbols) => {
                symbols.into_iter().map(|y| (y, self.log_likelihood(y, z).exp())).filter(|&(_, w)| w > 0.0).collect()
            }
            OutputAlphabet::Continuous => Vec::new(),
        }
    }

    /// Closed-form output estimator, if one is known.
    fn g_out(&self, _p: f64, _y: f64, _sigma: f64) -> Option<f64> {
        None
    }
}

/// Additive Gaussian noise exposed only through its likelihood, so that it
/// exercises the generic quadrature path.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    variance: f64,
    nodes: Arc<QuadratureRule>,
}

impl GaussianNoise {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::param(format!("noise variance must be positive, got {variance}")));
        }
        Ok(Self { variance, nodes: gauss_hermite(24)? })
    }
}

impl CustomChannel for GaussianNoise {
    fn name(&self) -> &str {
        "gaussian-noise"
    }

    fn alphabet(&self) -> OutputAlphabet {
        OutputAlphabet::Continuous
    }

    fn log_likelihood(&self, y: f64, z: f64) -> f64 {
        let d = y - z;
        -0.5 * (d * d / self.variance + (2.0 * std::f64::consts::PI * self.variance).ln())
    }

    fn sample(&self, z: f64, rng: &mut dyn RngCore) -> f64 {
        let w: f64 = StandardNormal.sample(rng);
        z + self.variance.sqrt() * w
    }

    fn output_nodes(&self, z: f64) -> Vec<(f64, f64)> {
        let sd = self.variance.sqrt();
        self.nodes.nodes.iter().zip(&self.nodes.weights).map(|(&x, &w)| (z + sd * x, w)).collect()
    }
}

/// Quadrature orders used by the generic calculus.
const POSTERIOR_ORDER: usize = 64;
const OUTER_ORDER: usize = 24;

pub(crate) struct Generic<'a> {
    channel: &'a dyn CustomChannel,
    posterior: Arc<QuadratureRule>,
    log_weights: Vec<f64>,
    outer: Arc<QuadratureRule>,
}

impl<'a> Generic<'a> {
    pub(crate) fn new(channel: &'a dyn CustomChannel) -> Result<Self> {
        let posterior = gauss_hermite(POSTERIOR_ORDER)?;
        let log_weights = posterior.weights.iter().map(|w| w.ln()).collect();
        Ok(Self { channel, posterior, log_weights, outer: gauss_hermite(OUTER_ORDER)? })
    }

    /// Mean and variance of the standardized offset `x = (z - p) / sqrt(sigma)`
    /// under the posterior of `z ~ N(p, sigma)` given `y`.
    fn posterior_moments(&self, p: f64, y: f64, sigma: f64) -> Result<(f64, f64)> {
        let sd = sigma.sqrt();
        let mut lw = [0.0f64; POSTERIOR_ORDER];
        let mut max = f64::NEG_INFINITY;
        for ((l, &x), &w) in lw.iter_mut().zip(&self.posterior.nodes).zip(&self.log_weights) {
            *l = w + self.channel.log_likelihood(y, p + sd * x);
            max = max.max(*l);
        }
        if !max.is_finite() {
            return Err(Error::numerical(format!(
                "posterior normalizer underflow at p = {p}, y = {y}, sigma = {sigma}"
            )));
        }
        let (mut z, mut m1) = (0.0, 0.0);
        for (l, &x) in lw.iter_mut().zip(&self.posterior.nodes) {
            *l = (*l - max).exp();
            z += *l;
            m1 += *l * x;
        }
        let mean = m1 / z;
        let var = lw.iter().zip(&self.posterior.nodes).map(|(&q, &x)| q * (x - mean) * (x - mean)).sum::<f64>() / z;
        Ok((mean, var))
    }

    pub(crate) fn g_out(&self, p: f64, y: f64, sigma: f64) -> Result<f64> {
        if let Some(g) = self.channel.g_out(p, y, sigma) {
            return Ok(g);
        }
        Ok(self.posterior_moments(p, y, sigma)?.0 / sigma.sqrt())
    }

    /// For a quadrature posterior the derivative is exact through
    /// `d/dp E[z | y] = Var[z | y] / sigma`. A user-supplied estimator is
    /// differentiated numerically instead.
    pub(crate) fn d_gout_dp(&self, p: f64, y: f64, sigma: f64) -> Result<f64> {
        if self.channel.g_out(p, y, sigma).is_none() {
            let (_, var) = self.posterior_moments(p, y, sigma)?;
            return Ok((var - 1.0) / sigma);
        }
        let h = 1e-5 * p.abs().max(1.0);
        let wide = (self.g_out(p + h, y, sigma)? - self.g_out(p - h, y, sigma)?) / (2.0 * h);
        let narrow = (self.g_out(p + 0.5 * h, y, sigma)? - self.g_out(p - 0.5 * h, y, sigma)?) / h;
        Ok((4.0 * narrow - wide) / 3.0)
    }

    /// `P(y | b) = E_z P_out(y | b + sqrt(sigma) z)` in the log domain.
    fn log_marginal(&self, y: f64, b: f64, sigma: f64) -> f64 {
        let sd = sigma.sqrt();
        let mut terms = [0.0f64; POSTERIOR_ORDER];
        for ((t, &x), &w) in terms.iter_mut().zip(&self.posterior.nodes).zip(&self.log_weights) {
            *t = w + self.channel.log_likelihood(y, b + sd * x);
        }
        log_sum_exp(&terms)
    }

    /// Calls `visit(weight, y)` for a rule over `Y | P = b`.
    fn for_each_output(&self, b: f64, sigma: f64, mut visit: impl FnMut(f64, f64) -> Result<()>) -> Result<()> {
        match self.channel.alphabet() {
            OutputAlphabet::Discrete(symbols) => {
                for y in symbols {
                    let w = self.log_marginal(y, b, sigma).exp();
                    if w > 0.0 {
                        visit(w, y)?;
                    }
                }
            }
            OutputAlphabet::Continuous => {
                let sd = sigma.sqrt();
                for (&x, &wx) in self.outer.nodes.iter().zip(&self.outer.weights) {
                    let nodes = self.channel.output_nodes(b + sd * x);
                    if nodes.is_empty() {
                        return Err(Error::param(format!(
                            "continuous channel '{}' must provide output quadrature nodes",
                            self.channel.name()
                        )));
                    }
                    for (y, wy) in nodes {
                        visit(wx * wy, y)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn f_out(&self, sigma: f64, total_variance: f64) -> Result<f64> {
        let spread = (total_variance - sigma).max(0.0).sqrt();
        let mut acc = 0.0;
        for (&xi, &wxi) in self.outer.nodes.iter().zip(&self.outer.weights) {
            let b = spread * xi;
            self.for_each_output(b, sigma, |w, y| {
                acc -= wxi * w * self.d_gout_dp(b, y, sigma)?;
                Ok(())
            })?;
        }
        Ok(acc)
    }

    pub(crate) fn psi_out(&self, sigma: f64) -> Result<f64> {
        let spread = (1.0 - sigma).max(0.0).sqrt();
        let mut acc = 0.0;
        for (&xi, &wxi) in self.outer.nodes.iter().zip(&self.outer.weights) {
            let b = spread * xi;
            self.for_each_output(b, sigma, |w, y| {
                let lm = self.log_marginal(y, b, sigma);
                if lm.is_finite() {
                    acc += wxi * w * lm;
                }
                Ok(())
            })?;
        }
        Ok(acc)
    }

    /// `H(Y) - H(Y | Z)` for discrete alphabets with `Z ~ N(0, 1)`.
    pub(crate) fn capacity_entropy(&self) -> Option<f64> {
        let OutputAlphabet::Discrete(symbols) = self.channel.alphabet() else {
            return None;
        };
        let rule = &self.posterior;
        let mut conditional = 0.0;
        let mut marginal = vec![0.0; symbols.len()];
        for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
            for (k, &y) in symbols.iter().enumerate() {
                let q = self.channel.log_likelihood(y, z).exp();
                marginal[k] += w * q;
                if q > 0.0 {
                    conditional -= w * q * q.ln();
                }
            }
        }
        let h_y: f64 = -marginal.iter().filter(|&&q| q > 0.0).map(|&q| q * q.ln()).sum::<f64>();
        Some(h_y - conditional)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_noise_posterior_mean_is_linear() {
        let ch = GaussianNoise::new(1.0).unwrap();
        let g = Generic::new(&ch).unwrap();
        assert_abs_diff_eq!(g.g_out(0.2, 1.0, 0.5).unwrap(), 0.8 / 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(g.d_gout_dp(0.2, 1.0, 0.5).unwrap(), -1.0 / 1.5, epsilon = 1e-7);
    }

    #[test]
    fn output_nodes_are_normalized() {
        let ch = GaussianNoise::new(2.0).unwrap();
        let total: f64 = ch.output_nodes(0.3).iter().map(|&(_, w)| w).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_variance() {
        assert!(GaussianNoise::new(0.0).is_err());
        assert!(GaussianNoise::new(f64::NAN).is_err());
    }
}

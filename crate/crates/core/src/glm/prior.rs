//! Separable priors and their scalar denoisers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::integrate_1d;
use crate::numerics::special::{log_sum_exp, norm_pdf};

/// Half-width, in standard deviations, of the Gaussian integrals in `mmse`.
const Z_RANGE: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Gaussian {
        mean: f64,
        var: f64,
    },
    /// Value 1 with probability `p`, else 0.
    Bernoulli {
        p: f64,
    },
    /// `N(0, var)` with probability `p`, else 0.
    BernoulliGaussian {
        p: f64,
        var: f64,
    },
    /// Finitely many atoms with the given probabilities.
    Discrete {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl PriorSpec {
    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        let prior = Self::Gaussian { mean, var };
        prior.validate()?;
        Ok(prior)
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        let prior = Self::Bernoulli { p };
        prior.validate()?;
        Ok(prior)
    }

    pub fn bernoulli_gaussian(p: f64, var: f64) -> Result<Self> {
        let prior = Self::BernoulliGaussian { p, var };
        prior.validate()?;
        Ok(prior)
    }

    /// Discrete prior; `probs` is normalized to sum to one.
    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        let prior = Self::Discrete { values, probs: probs.iter().map(|p| p / total).collect() };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Gaussian { mean, var } => mean.is_finite() && *var > 0.0 && var.is_finite(),
            Self::Bernoulli { p } => *p > 0.0 && *p < 1.0,
            Self::BernoulliGaussian { p, var } => *p > 0.0 && *p <= 1.0 && *var > 0.0 && var.is_finite(),
            Self::Discrete { values, probs } => {
                !values.is_empty()
                    && values.len() == probs.len()
                    && values.iter().all(|v| v.is_finite())
                    && probs.iter().all(|&p| p > 0.0)
                    && (probs.iter().sum::<f64>() - 1.0).abs() < 1e-12
            }
        };
        if ok && self.second_moment() > 0.0 {
            Ok(())
        } else {
            Err(Error::param(format!("invalid prior {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian { mean, .. } => *mean,
            Self::Bernoulli { p } => *p,
            Self::BernoulliGaussian { .. } => 0.0,
            Self::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
        }
    }

    /// `E beta^2`.
    pub fn second_moment(&self) -> f64 {
        match self {
            Self::Gaussian { mean, var } => mean * mean + var,
            Self::Bernoulli { p } => *p,
            Self::BernoulliGaussian { p, var } => p * var,
            Self::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * v * p).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian { mean, var } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
            Self::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < *p)),
            Self::BernoulliGaussian { p, var } => {
                let on = rng.random::<f64>() < *p;
                let z: f64 = StandardNormal.sample(rng);
                if on {
                    var.sqrt() * z
                } else {
                    0.0
                }
            }
            Self::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated prior has atoms")
            }
        }
    }

    /// Posterior mean and variance of `beta` given `beta + sqrt(tau) Z = r`.
    pub fn posterior(&self, r: f64, tau: f64) -> (f64, f64) {
        match self {
            Self::Gaussian { mean, var } => {
                let mean_post = (r * var + mean * tau) / (var + tau);
                (mean_post, var * tau / (var + tau))
            }
            Self::Bernoulli { p } => {
                // Log-odds of beta = 1.
                let logit = (p / (1.0 - p)).ln() + (2.0 * r - 1.0) / (2.0 * tau);
                let pi = logistic(logit);
                (pi, pi * (1.0 - pi))
            }
            Self::BernoulliGaussian { p, var } => {
                let total = var + tau;
                let logit = if *p < 1.0 {
                    (p / (1.0 - p)).ln() + 0.5 * (tau / total).ln() + 0.5 * r * r * (1.0 / tau - 1.0 / total)
                } else {
                    f64::INFINITY
                };
                let pi = logistic(logit);
                let m = r * var / total;
                let v = var * tau / total;
                (pi * m, pi * v + pi * (1.0 - pi) * m * m)
            }
            Self::Discrete { values, probs } => {
                let logw: Vec<f64> =
                    values.iter().zip(probs).map(|(v, p)| p.ln() - (r - v) * (r - v) / (2.0 * tau)).collect();
                let norm = log_sum_exp(&logw);
                let (mut m1, mut m2) = (0.0, 0.0);
                for (v, lw) in values.iter().zip(&logw) {
                    let w = (lw - norm).exp();
                    m1 += w * v;
                    m2 += w * v * v;
                }
                (m1, (m2 - m1 * m1).max(0.0))
            }
        }
    }

    /// Minimum mean squared error `E[beta - g_in(beta + sqrt(tau) G, tau)]^2`.
    pub fn mmse(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        if let Self::Gaussian { var, .. } = self {
            return Ok(var * tau / (var + tau));
        }
        // E over the marginal of r of the posterior variance, split by mixture
        // component so each integrand is a smooth function against N(0, 1).
        let comp = |center: f64, sd: f64| -> Result<f64> {
            integrate_1d(|z| norm_pdf(z) * self.posterior(center + sd * z, tau).1, -Z_RANGE, Z_RANGE, 1e-12)
        };
        let value = match self {
            Self::Gaussian { .. } => unreachable!(),
            Self::Bernoulli { p } => (1.0 - p) * comp(0.0, tau.sqrt())? + p * comp(1.0, tau.sqrt())?,
            Self::BernoulliGaussian { p, var } => {
                let off = if *p < 1.0 { (1.0 - p) * comp(0.0, tau.sqrt())? } else { 0.0 };
                off + p * comp(0.0, (var + tau).sqrt())?
            }
            Self::Discrete { values, probs } => {
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p * comp(*v, tau.sqrt())?;
                }
                acc
            }
        };
        Ok(value.clamp(0.0, self.variance()))
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("tau must be positive and finite, got {tau}")))
    }
}

/// Posterior mean `E[beta | beta + sqrt(tau) Z = r]`.
pub fn g_in_glm(r: f64, tau: f64, prior: &PriorSpec) -> Result<f64> {
    check_tau(tau)?;
    Ok(prior.posterior(r, tau).0)
}

/// State evolution update `E[beta - g_in(sqrt(tau) G + beta, tau)]^2`.
pub fn psi_update_glm(tau: f64, prior: &PriorSpec) -> Result<f64> {
    prior.mmse(tau)
}

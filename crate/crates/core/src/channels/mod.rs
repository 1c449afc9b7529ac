//! Memoryless channels `y = h(u, noise)` and their scalar calculus.
//!
//! Built-in channels have closed forms: AWGN is linear throughout, and the
//! erasure and symmetric binary channels share the sign-channel machinery.
//! User-defined channels plug in through [`CustomChannel`] and are handled by
//! nested quadrature. All information quantities are in nats.

mod generic;
mod sign;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate_1d, RngStream};

pub use generic::{CustomChannel, GaussianNoise, OutputAlphabet};
pub use sign::{SignOutput, SignTable};

/// Distance kept from the endpoints of the `sigma` range, where the joint
/// Gaussian law of `(P, Z0)` degenerates.
const SIGMA_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Bec,
    Bsc,
}

/// Serialized channel description: `{"kind": "bec", "param": 0.2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub param: f64,
}

#[derive(Clone)]
pub enum ChannelSpec {
    Awgn { noise_variance: f64 },
    Bec { erasure_prob: f64, table: SignTable },
    Bsc { flip_prob: f64, table: SignTable },
    Custom(Arc<dyn CustomChannel>),
}

impl fmt::Debug for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Awgn { noise_variance } => write!(f, "Awgn({noise_variance})"),
            Self::Bec { erasure_prob, .. } => write!(f, "Bec({erasure_prob})"),
            Self::Bsc { flip_prob, .. } => write!(f, "Bsc({flip_prob})"),
            Self::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Awgn { noise_variance } => write!(f, "awgn(noise_variance={noise_variance})"),
            Self::Bec { erasure_prob, .. } => write!(f, "bec(erasure_prob={erasure_prob})"),
            Self::Bsc { flip_prob, .. } => write!(f, "bsc(flip_prob={flip_prob})"),
            Self::Custom(c) => write!(f, "custom({})", c.name()),
        }
    }
}

impl ChannelSpec {
    pub fn awgn(noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::param(format!("AWGN noise variance must be positive, got {noise_variance}")));
        }
        Ok(Self::Awgn { noise_variance })
    }

    pub fn bec(erasure_prob: f64) -> Result<Self> {
        check_open_unit("erasure probability", erasure_prob)?;
        Ok(Self::Bec { erasure_prob, table: SignTable::erasure(erasure_prob) })
    }

    pub fn bsc(flip_prob: f64) -> Result<Self> {
        check_open_unit("flip probability", flip_prob)?;
        Ok(Self::Bsc { flip_prob, table: SignTable::symmetric(flip_prob) })
    }

    pub fn custom(channel: impl CustomChannel + 'static) -> Self {
        Self::Custom(Arc::new(channel))
    }

    pub fn from_config(config: &ChannelConfig) -> Result<Self> {
        match config.kind {
            ChannelKind::Awgn => Self::awgn(config.param),
            ChannelKind::Bec => Self::bec(config.param),
            ChannelKind::Bsc => Self::bsc(config.param),
        }
    }

    /// The serializable description; `None` for custom channels.
    pub fn to_config(&self) -> Option<ChannelConfig> {
        match *self {
            Self::Awgn { noise_variance } => Some(ChannelConfig { kind: ChannelKind::Awgn, param: noise_variance }),
            Self::Bec { erasure_prob, .. } => Some(ChannelConfig { kind: ChannelKind::Bec, param: erasure_prob }),
            Self::Bsc { flip_prob, .. } => Some(ChannelConfig { kind: ChannelKind::Bsc, param: flip_prob }),
            Self::Custom(_) => None,
        }
    }

    fn sign_table(&self) -> Option<&SignTable> {
        match self {
            Self::Bec { table, .. } | Self::Bsc { table, .. } => Some(table),
            _ => None,
        }
    }

    pub fn alphabet(&self) -> OutputAlphabet {
        match self {
            Self::Awgn { .. } => OutputAlphabet::Continuous,
            Self::Bec { .. } => OutputAlphabet::Discrete(vec![-1.0, 0.0, 1.0]),
            Self::Bsc { .. } => OutputAlphabet::Discrete(vec![-1.0, 1.0]),
            Self::Custom(c) => c.alphabet(),
        }
    }

    /// `ln P_out(y | z)`.
    pub fn log_likelihood(&self, y: f64, z: f64) -> f64 {
        match self {
            Self::Awgn { noise_variance: v } => -0.5 * ((y - z) * (y - z) / v + (2.0 * std::f64::consts::PI * v).ln()),
            Self::Bec { table, .. } | Self::Bsc { table, .. } => table.probability(y, z).ln(),
            Self::Custom(c) => c.log_likelihood(y, z),
        }
    }

    /// One channel output for input `u`. A zero input is read as positive.
    pub fn sample<R: Rng>(&self, u: f64, rng: &mut R) -> f64 {
        let sign = if u >= 0.0 { 1.0 } else { -1.0 };
        match self {
            Self::Awgn { noise_variance } => {
                let w: f64 = StandardNormal.sample(rng);
                u + noise_variance.sqrt() * w
            }
            Self::Bec { erasure_prob, .. } => {
                if rng.random::<f64>() < *erasure_prob {
                    0.0
                } else {
                    sign
                }
            }
            Self::Bsc { flip_prob, .. } => {
                if rng.random::<f64>() < *flip_prob {
                    -sign
                } else {
                    sign
                }
            }
            Self::Custom(c) => c.sample(u, rng),
        }
    }

    /// One output drawn from its own stream.
    pub fn sample_output(&self, u: f64, stream: &RngStream) -> f64 {
        self.sample(u, &mut stream.rng())
    }

    /// Passes a whole codeword through the channel using one stream.
    pub fn transmit(&self, x: &[f64], stream: &RngStream) -> Vec<f64> {
        let mut rng = stream.rng();
        x.iter().map(|&u| self.sample(u, &mut rng)).collect()
    }

    /// Output estimator: `(E[z | y] - p) / sigma` for `z ~ N(p, sigma)`.
    pub fn g_out(&self, p: f64, y: f64, sigma: f64) -> Result<f64> {
        check_sigma_positive(sigma)?;
        match self {
            Self::Awgn { noise_variance } => Ok((y - p) / (sigma + noise_variance)),
            Self::Bec { table, .. } | Self::Bsc { table, .. } => table.g_out(p, y, sigma),
            Self::Custom(c) => generic::Generic::new(c.as_ref())?.g_out(p, y, sigma),
        }
    }

    /// Derivative of [`Self::g_out`] in `p`.
    pub fn d_gout_dp(&self, p: f64, y: f64, sigma: f64) -> Result<f64> {
        check_sigma_positive(sigma)?;
        match self {
            Self::Awgn { noise_variance } => Ok(-1.0 / (sigma + noise_variance)),
            Self::Bec { table, .. } | Self::Bsc { table, .. } => table.d_gout_dp(p, y, sigma),
            Self::Custom(c) => generic::Generic::new(c.as_ref())?.d_gout_dp(p, y, sigma),
        }
    }

    /// `f_out(sigma) = -E d/dp g_out` for a unit-power input.
    pub fn f_out(&self, sigma: f64) -> Result<f64> {
        self.f_out_with_variance(sigma, 1.0)
    }

    /// `f_out` when the channel input `Z0` has variance `total_variance`
    /// and `sigma` lies in `[0, total_variance]`.
    pub fn f_out_with_variance(&self, sigma: f64, total_variance: f64) -> Result<f64> {
        if !(total_variance > 0.0 && total_variance.is_finite()) {
            return Err(Error::param(format!("input variance must be positive, got {total_variance}")));
        }
        if !(0.0..=total_variance).contains(&sigma) {
            return Err(Error::param(format!("sigma must lie in [0, {total_variance}], got {sigma}")));
        }
        if let Self::Awgn { noise_variance } = self {
            return Ok(1.0 / (sigma + noise_variance));
        }
        let s = sigma.clamp(SIGMA_CLAMP * total_variance, (1.0 - SIGMA_CLAMP) * total_variance);
        match self {
            Self::Custom(c) => generic::Generic::new(c.as_ref())?.f_out(s, total_variance),
            _ => self.sign_table().expect("sign channel").f_out(s, total_variance),
        }
    }

    /// Channel potential `Psi_out(sigma)`, with `f_out = -2 Psi_out'`.
    pub fn psi_out(&self, sigma: f64) -> Result<f64> {
        check_unit_sigma(sigma)?;
        if let Self::Awgn { noise_variance } = self {
            let e = std::f64::consts::E;
            return Ok(-0.5 * (2.0 * std::f64::consts::PI * e * (noise_variance + sigma)).ln());
        }
        let s = sigma.clamp(SIGMA_CLAMP, 1.0 - SIGMA_CLAMP);
        match self {
            Self::Custom(c) => generic::Generic::new(c.as_ref())?.psi_out(s),
            _ => self.sign_table().expect("sign channel").psi_out(s),
        }
    }

    /// `int_0^upper f_out(x) dx`, with the `1/sqrt(x)` endpoint behaviour of
    /// sign channels removed by substituting `x = u^2`.
    pub fn integrate_f_out(&self, upper: f64) -> Result<f64> {
        check_unit_sigma(upper)?;
        if let Self::Awgn { noise_variance } = self {
            return Ok((1.0 + upper / noise_variance).ln());
        }
        if upper == 0.0 {
            return Ok(0.0);
        }
        let mut failure = None;
        let value = integrate_1d(
            |u| match self.f_out(u * u) {
                Ok(f) => 2.0 * u * f,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            0.0,
            upper.sqrt(),
            1e-11,
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }

    /// Capacity `C = 1/2 int_0^1 f_out` in nats.
    pub fn capacity(&self) -> Result<f64> {
        Ok(0.5 * self.integrate_f_out(1.0)?)
    }

    /// `H(Y) - H(Y | Z)` for discrete-output channels; `None` otherwise.
    pub fn capacity_entropy(&self) -> Result<Option<f64>> {
        match self {
            Self::Awgn { .. } => Ok(None),
            Self::Bec { table, .. } | Self::Bsc { table, .. } => Ok(Some(table.capacity_entropy())),
            Self::Custom(c) => Ok(generic::Generic::new(c.as_ref())?.capacity_entropy()),
        }
    }
}

fn check_open_unit(what: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{what} must lie in (0, 1), got {value}")))
    }
}

fn check_sigma_positive(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("sigma must be positive, got {sigma}")))
    }
}

fn check_unit_sigma(sigma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&sigma) {
        Ok(())
    } else {
        Err(Error::param(format!("sigma must lie in [0, 1], got {sigma}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn awgn_g_out_example() {
        let ch = ChannelSpec::awgn(1.0).unwrap();
        assert_abs_diff_eq!(ch.g_out(0.2, 1.0, 0.5).unwrap(), 0.8 / 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ch.d_gout_dp(3.0, -1.0, 0.5).unwrap(), -1.0 / 1.5, epsilon = 1e-15);
    }

    #[test]
    fn erasure_output_carries_no_information() {
        let ch = ChannelSpec::bec(0.3).unwrap();
        for &p in &[-4.0, 0.0, 2.5] {
            assert_eq!(ch.g_out(p, 0.0, 0.3).unwrap(), 0.0);
            assert_eq!(ch.d_gout_dp(p, 0.0, 0.3).unwrap(), 0.0);
        }
    }

    #[test]
    fn uninformative_bsc_is_flat() {
        let ch = ChannelSpec::bsc(0.5).unwrap();
        assert_eq!(ch.g_out(0.7, 1.0, 0.2).unwrap(), 0.0);
        for &s in &[0.0, 0.4, 1.0] {
            assert_abs_diff_eq!(ch.f_out(s).unwrap(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(ch.psi_out(s).unwrap(), 0.5f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn parameter_errors() {
        assert!(ChannelSpec::awgn(0.0).unwrap_err().is_parameter());
        assert!(ChannelSpec::bec(1.0).unwrap_err().is_parameter());
        assert!(ChannelSpec::bsc(0.0).unwrap_err().is_parameter());
        let ch = ChannelSpec::bsc(0.1).unwrap();
        assert!(ch.g_out(0.0, 1.0, 0.0).unwrap_err().is_parameter());
        assert!(ch.f_out(1.5).unwrap_err().is_parameter());
        assert!(ch.psi_out(-0.1).unwrap_err().is_parameter());
    }

    #[test]
    fn config_round_trip() {
        let cfg: ChannelConfig = serde_json::from_str(r#"{"kind": "bsc", "param": 0.11}"#).unwrap();
        let ch = ChannelSpec::from_config(&cfg).unwrap();
        assert_eq!(ch.to_config(), Some(cfg));
        assert!(serde_json::from_str::<ChannelConfig>(r#"{"kind": "qam", "param": 1}"#).is_err());
    }

    #[test]
    fn zero_input_is_positive() {
        let ch = ChannelSpec::bsc(1e-300).unwrap();
        assert_eq!(ch.sample_output(0.0, &RngStream::new(1, 2)), 1.0);
    }
}

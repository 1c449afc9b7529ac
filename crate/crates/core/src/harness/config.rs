use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channels::{ChannelConfig, ChannelKind, ChannelSpec};
use crate::code_design::{SparcParams, DEFAULT_MEMORY_CAP_BYTES};
use crate::codec::TauMode;
use crate::error::{Error, Result};
use crate::state_evolution::{default_rho, SeOptions};

/// Code geometry before the rate is resolved against a channel. Exactly one
/// of `rate_ratio`, `rate_nats` and `n` fixes the rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    pub l: usize,
    pub m: usize,
    pub gamma: usize,
    pub omega: usize,
    /// Background level of the base matrix; the wave-analysis default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Rate as a fraction of capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_nats: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl CodeConfig {
    /// Target rate in nats for a channel of the given capacity.
    pub fn target_rate(&self, capacity: f64) -> Result<f64> {
        let given = [self.rate_ratio.is_some(), self.rate_nats.is_some(), self.n.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(Error::param("exactly one of rate_ratio, rate_nats and n must be given"));
        }
        let rate = match (self.rate_ratio, self.rate_nats, self.n) {
            (Some(ratio), _, _) => ratio * capacity,
            (_, Some(r), _) => r,
            (_, _, Some(n)) if n > 0 => self.l as f64 * (self.m as f64).ln() / n as f64,
            _ => return Err(Error::param("n must be positive")),
        };
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::param(format!("rate must be positive, got {rate}")));
        }
        Ok(rate)
    }

    /// Resolved parameters. `rho` falls back to the wave-analysis default,
    /// which needs the rate to be below capacity.
    pub fn resolve(&self, channel: &ChannelSpec) -> Result<SparcParams> {
        let rate = self.target_rate(channel.capacity()?)?;
        let rho = match self.rho {
            Some(r) => r,
            None => default_rho(rate, channel)?,
        };
        match self.n {
            Some(n) => SparcParams::with_n(self.l, self.m, self.gamma, self.omega, rho, n),
            None => SparcParams::new(self.l, self.m, self.gamma, self.omega, rho, rate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Code length; `L` follows so that the rate stays fixed.
    N,
    /// Rate as a fraction of capacity.
    RateRatio,
    M,
    Omega,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageChoice {
    /// Unseeded column blocks in memory if they fit under the cap,
    /// regeneration on demand otherwise.
    Auto,
    Dense,
    OnTheFly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub mode: TauMode,
    /// Iteration budget; the wave-analysis budget, else the state evolution
    /// cap, when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    pub f_stop: f64,
    pub storage: StorageChoice,
    pub memory_cap_bytes: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            mode: TauMode::StateEvolution,
            iterations: None,
            f_stop: 1e-6,
            storage: StorageChoice::Auto,
            memory_cap_bytes: DEFAULT_MEMORY_CAP_BYTES,
        }
    }
}

fn default_name() -> String {
    "experiment".into()
}

fn default_threshold() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub channel: ChannelConfig,
    pub code: CodeConfig,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub decoder: DecoderConfig,
    #[serde(default)]
    pub se: SeOptions,
    /// A trial is an error event when its unseeded section error rate
    /// exceeds this value.
    #[serde(default = "default_threshold")]
    pub error_threshold: f64,
}

impl ExperimentConfig {
    /// AWGN with unit noise variance, `G = 32`, `omega = 3`, `M = 64`,
    /// `L = 1024`, `R = 0.75 C`, 50 trials.
    pub fn desk_preset() -> Self {
        Self {
            name: "desk".into(),
            channel: ChannelConfig { kind: ChannelKind::Awgn, param: 1.0 },
            code: CodeConfig {
                l: 1024,
                m: 64,
                gamma: 32,
                omega: 3,
                rho: None,
                rate_ratio: Some(0.75),
                rate_nats: None,
                n: None,
            },
            trials: 50,
            master_seed: 1,
            sweep: None,
            output_dir: None,
            decoder: DecoderConfig::default(),
            se: SeOptions::default(),
            error_threshold: default_threshold(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::param("trials must be at least 1"));
        }
        if !(self.error_threshold >= 0.0 && self.error_threshold < 1.0) {
            return Err(Error::param(format!("error threshold {} outside [0, 1)", self.error_threshold)));
        }
        if !(self.decoder.f_stop >= 0.0 && self.decoder.f_stop < 1.0) {
            return Err(Error::param(format!("f_stop {} outside [0, 1)", self.decoder.f_stop)));
        }
        if self.se.t_max == 0 {
            return Err(Error::param("state evolution needs t_max >= 1"));
        }
        ChannelSpec::from_config(&self.channel)?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::param("sweep has no values"));
            }
            if sweep.values.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::param("sweep values must be strictly increasing"));
            }
            let integral = matches!(sweep.axis, SweepAxis::N | SweepAxis::M | SweepAxis::Omega);
            if sweep.values.iter().any(|&v| !v.is_finite() || v < 0.0 || (integral && v.fract() != 0.0)) {
                return Err(Error::param(format!("invalid value in the {:?} sweep", sweep.axis)));
            }
        }
        Ok(())
    }

    /// Code configuration at each sweep point, paired with the swept value.
    pub fn points(&self) -> Result<Vec<(Option<f64>, CodeConfig)>> {
        self.validate()?;
        let Some(sweep) = &self.sweep else {
            return Ok(vec![(None, self.code.clone())]);
        };
        let channel = ChannelSpec::from_config(&self.channel)?;
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut code = self.code.clone();
                match sweep.axis {
                    SweepAxis::N => {
                        // Keep the realized base rate: L = n R / ln M, rounded to a multiple of G.
                        let base = self.code.resolve(&channel)?;
                        let rate = base.rate_nats;
                        let g = code.gamma;
                        let l = (v * rate / (code.m as f64).ln() / g as f64).round().max(1.0) as usize * g;
                        code.rho = Some(base.rho);
                        code.l = l;
                        code.n = Some(v as usize);
                        code.rate_ratio = None;
                        code.rate_nats = None;
                    }
                    SweepAxis::RateRatio => {
                        code.rate_ratio = Some(v);
                        code.rate_nats = None;
                        code.n = None;
                    }
                    SweepAxis::M => code.m = v as usize,
                    SweepAxis::Omega => code.omega = v as usize,
                }
                Ok((Some(v), code))
            })
            .collect()
    }
}

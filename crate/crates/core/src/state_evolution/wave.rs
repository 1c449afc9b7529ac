//! Decoding-wave analysis: the gap function `h(Delta)`, the wave speed `g`,
//! the iteration budget and the single-shot versus wave classification.

use serde::{Deserialize, Serialize};

use crate::channels::ChannelSpec;
use crate::code_design::SparcParams;
use crate::error::{Error, Result};
use crate::numerics::find_root_increasing;

/// `h` solving `int_0^h f_out = (3/2) Delta`.
pub fn h_delta(gap: f64, channel: &ChannelSpec) -> Result<f64> {
    let target = 1.5 * gap;
    let total = channel.integrate_f_out(1.0)?;
    if !(gap > 0.0 && target < total) {
        return Err(Error::param(format!("gap {gap} is infeasible: need 0 < 1.5 gap < 2 C = {total}")));
    }
    let mut failure = None;
    let h = find_root_increasing(
        |h| match channel.integrate_f_out(h) {
            Ok(v) => v - target,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        0.0,
        1.0,
        1e-12,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(h),
    }
}

/// Left side of the wave-speed condition at integer `k`, or `None` when the
/// integration limit `2 rho + k (1 - rho) / (2 omega + 1)` leaves `[0, 1]`.
pub fn wave_condition_lhs(k: usize, omega: usize, rho: f64, channel: &ChannelSpec) -> Result<Option<f64>> {
    let frac = k as f64 / (2 * omega + 1) as f64;
    let upper = 2.0 * rho + frac * (1.0 - rho);
    if upper > 1.0 {
        return Ok(None);
    }
    Ok(Some(channel.integrate_f_out(upper)? - frac * (1.0 - rho) * channel.f_out(1.0)?))
}

/// Largest `k <= 2 omega + 1` meeting the wave-speed condition; zero when
/// only `k = 0` does.
pub fn wave_speed_g(omega: usize, rho: f64, gap: f64, channel: &ChannelSpec) -> Result<usize> {
    if omega < 1 {
        return Err(Error::param("wave analysis needs omega >= 1"));
    }
    let h = h_delta(gap, channel)?;
    if !(rho > 0.0 && rho < 0.5 * h) {
        return Err(Error::param(format!("rho = {rho} must lie in (0, h/2) = (0, {})", 0.5 * h)));
    }
    let mut g = 0;
    for k in 1..=2 * omega + 1 {
        if let Some(lhs) = wave_condition_lhs(k, omega, rho, channel)? {
            if lhs < 1.5 * gap {
                g = k;
            }
        }
    }
    Ok(g)
}

/// Iteration budget `ceil(gamma / 2g)`.
pub fn max_iters(gamma: usize, g: usize) -> Result<usize> {
    if g == 0 {
        return Err(Error::Undecodable("wave speed is zero".into()));
    }
    Ok(gamma.div_ceil(2 * g))
}

/// Decoded-section error level `M^{-k delta} / (delta sqrt(ln M))`.
pub fn f_m_delta(m: usize, delta: f64, k: f64) -> Result<f64> {
    if m < 2 || !(delta > 0.0 && delta < 0.5) || !(k > 0.0) {
        return Err(Error::param(format!(
            "need M >= 2, delta in (0, 1/2), k > 0; got M = {m}, delta = {delta}, k = {k}"
        )));
    }
    let ln_m = (m as f64).ln();
    Ok((-k * delta * ln_m).exp() / (delta * ln_m.sqrt()))
}

/// Number of leading column blocks whose error is at most `threshold`,
/// capped at `ceil(gamma / 2)`. By symmetry the same count applies from the
/// right end.
pub fn frontier(psi: &[f64], threshold: f64) -> usize {
    let half = psi.len().div_ceil(2);
    psi.iter().take(half).take_while(|&&p| p <= threshold).count()
}

/// Smallest second difference of `Psi_out` on an interior grid, a numerical
/// stand-in for the strong-convexity constant of the potential.
pub fn potential_convexity(channel: &ChannelSpec, points: usize) -> Result<f64> {
    let h = 1e-3;
    let mut min = f64::INFINITY;
    for i in 0..points {
        let s = 0.05 + 0.9 * i as f64 / (points.max(2) - 1) as f64;
        let d2 = (channel.psi_out(s + h)? - 2.0 * channel.psi_out(s)? + channel.psi_out(s - h)?) / (h * h);
        min = min.min(d2);
    }
    Ok(min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    SingleShot,
    Wave,
    Undecodable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveOptions {
    /// Exponent constant in `f_{M, delta}`.
    pub k: f64,
    /// Slack `delta`; the midpoint of its allowed interval when absent.
    pub delta: Option<f64>,
}

impl Default for WaveOptions {
    fn default() -> Self {
        Self { k: 1.0, delta: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveReport {
    pub capacity: f64,
    pub rate: f64,
    /// Capacity gap `C - R` in nats.
    pub gap: f64,
    pub delta: Option<f64>,
    pub h_delta: Option<f64>,
    pub rho: f64,
    pub rho_max: Option<f64>,
    /// Rate below which every section decodes in one iteration.
    pub single_shot_rate: Option<f64>,
    pub g: Option<usize>,
    pub t_iters: Option<usize>,
    pub f_m_delta: Option<f64>,
    pub k: f64,
    pub regime: Regime,
    pub warnings: Vec<String>,
}

/// Default background level `0.25 h(Delta) / 2` for a code at `rate`.
pub fn default_rho(rate: f64, channel: &ChannelSpec) -> Result<f64> {
    let gap = channel.capacity()? - rate;
    Ok(0.125 * h_delta(gap, channel)?)
}

pub fn regime_classify(params: &SparcParams, channel: &ChannelSpec, options: &WaveOptions) -> Result<WaveReport> {
    let capacity = channel.capacity()?;
    let rate = params.rate_nats;
    let gap = capacity - rate;
    let mut report = WaveReport {
        capacity,
        rate,
        gap,
        delta: None,
        h_delta: None,
        rho: params.rho,
        rho_max: None,
        single_shot_rate: None,
        g: None,
        t_iters: None,
        f_m_delta: None,
        k: options.k,
        regime: Regime::Undecodable,
        warnings: Vec::new(),
    };
    if gap <= 0.0 {
        report.warnings.push(format!("rate {rate} is not below capacity {capacity}"));
        return Ok(report);
    }
    let delta_max = (gap / (2.0 * rate)).min(0.5);
    let delta = options.delta.unwrap_or(0.5 * delta_max);
    if !(delta > 0.0 && delta < delta_max) {
        return Err(Error::param(format!("delta = {delta} must lie in (0, {delta_max})")));
    }
    report.delta = Some(delta);
    report.f_m_delta = Some(f_m_delta(params.m, delta, options.k)?);
    let h = h_delta(gap, channel)?;
    report.h_delta = Some(h);
    report.rho_max = Some(0.5 * h);
    let rho = params.rho;
    let rho_ok = rho > 0.0 && rho < 0.5 * h;
    if rho == 0.0 {
        report.warnings.push("rho = 0 lies outside the range covered by the wave analysis".into());
    } else if !rho_ok {
        report.warnings.push(format!("rho = {rho} is not below h/2 = {}", 0.5 * h));
    }
    let single_shot = (1.0 - rho) / (2.0 + delta) * channel.f_out(1.0)?;
    report.single_shot_rate = Some(single_shot);
    if rho_ok && params.omega >= 1 {
        let g = wave_speed_g(params.omega, rho, gap, channel)?;
        report.g = Some(g);
        if g >= 1 {
            report.t_iters = Some(max_iters(params.gamma, g)?);
        }
    } else if params.omega == 0 {
        report.warnings.push("omega = 0 leaves no coupling for a wave".into());
    }
    report.regime = if rate < single_shot {
        Regime::SingleShot
    } else if report.g.is_some_and(|g| g >= 1) {
        Regime::Wave
    } else {
        Regime::Undecodable
    };
    if report.f_m_delta.is_some_and(|f| f >= 1.0) {
        report.warnings.push(format!(
            "f_M_delta = {:.3} is not below one, so it does not certify decoding at M = {}",
            report.f_m_delta.unwrap_or_default(),
            params.m
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn h_delta_awgn_closed_form() {
        let ch = ChannelSpec::awgn(1.0).unwrap();
        assert_abs_diff_eq!(h_delta(0.2, &ch).unwrap(), (0.3f64).exp() - 1.0, epsilon = 1e-10);
        assert!(h_delta(1e-6, &ch).unwrap() < 1e-5);
        assert!(h_delta(0.0, &ch).unwrap_err().is_parameter());
        assert!(h_delta(0.5, &ch).unwrap_err().is_parameter());
    }

    #[test]
    fn max_iters_examples() {
        assert_eq!(max_iters(64, 4).unwrap(), 8);
        assert_eq!(max_iters(10, 5).unwrap(), 1);
        assert_eq!(max_iters(65, 4).unwrap(), 9);
        assert!(matches!(max_iters(8, 0), Err(Error::Undecodable(_))));
    }

    #[test]
    fn f_m_delta_examples() {
        let v = f_m_delta(512, 0.25, 1.0).unwrap();
        assert_abs_diff_eq!(v, 512f64.powf(-0.25) / (0.25 * 512f64.ln().sqrt()), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.33667, epsilon = 5e-5);
        assert!(f_m_delta(1024, 0.25, 1.0).unwrap() < v);
        assert!(f_m_delta(512, 0.0, 1.0).is_err());
    }

    #[test]
    fn frontier_counts_leading_blocks() {
        assert_eq!(frontier(&[0.0, 0.0, 0.5, 0.0, 0.9, 0.0], 0.1), 2);
        assert_eq!(frontier(&[0.0; 7], 0.1), 4);
    }
}

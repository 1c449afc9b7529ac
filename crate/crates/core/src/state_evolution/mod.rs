//! State evolution for SC-SPARCs under GAMP decoding, and the decoding-wave
//! analysis built on it.
//!
//! One step maps per-block errors `psi` to
//! `sigma_r = (1/G) sum_c W_rc psi_c`, `phi_r = 1 / f_out(sigma_r)`,
//! `tau_c = (R / ln M) [(1/G) sum_r W_rc / phi_r]^{-1}` and
//! `psi_c' = 1 - eps(tau_c)`, with seeded blocks held at zero.

mod eps;
mod wave;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channels::ChannelSpec;
use crate::code_design::{BaseMatrix, SparcParams};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub use eps::{eps_tau, eps_tau_semi_analytic, EpsSampler};
pub use wave::{
    default_rho, f_m_delta, frontier, h_delta, max_iters, potential_convexity, regime_classify, wave_condition_lhs,
    wave_speed_g, Regime, WaveOptions, WaveReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeOptions {
    /// Iteration cap.
    pub t_max: usize,
    /// Stop once every block error is at or below this value.
    pub stop_tol: f64,
    /// Monte Carlo samples per evaluation of `eps(tau)`.
    pub n_mc: usize,
}

impl Default for SeOptions {
    fn default() -> Self {
        Self { t_max: 100, stop_tol: 1e-6, n_mc: 100_000 }
    }
}

/// Quantities produced by one state evolution step.
#[derive(Debug, Clone, PartialEq)]
pub struct SeStep {
    pub sigma: Vec<f64>,
    pub phi: Vec<f64>,
    pub tau: Vec<f64>,
    pub psi_next: Vec<f64>,
    /// Monte Carlo standard error of each `psi_next` entry.
    pub psi_std_error: Vec<f64>,
}

/// Iterates of state evolution. `psi[t]` is the error entering step `t`,
/// and `sigma[t]`, `phi[t]`, `tau[t]` are computed from it; `psi` therefore
/// has one more entry than the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeTrajectory {
    pub gamma: usize,
    pub seeds: Vec<bool>,
    pub psi: Vec<Vec<f64>>,
    pub psi_std_error: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub tau: Vec<Vec<f64>>,
}

impl SeTrajectory {
    /// Number of steps taken.
    pub fn iterations(&self) -> usize {
        self.sigma.len()
    }

    /// `(1/G) sum_c psi_c^t`.
    pub fn mean_psi(&self, t: usize) -> f64 {
        self.psi[t].iter().sum::<f64>() / self.gamma as f64
    }

    /// Mean error over unseeded blocks.
    pub fn mean_psi_unseeded(&self, t: usize) -> f64 {
        let (sum, count) = self.psi[t]
            .iter()
            .zip(&self.seeds)
            .filter(|(_, &s)| !s)
            .fold((0.0, 0usize), |(s, n), (&p, _)| (s + p, n + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// `sigma_r^t (1 - sigma_r^t / sigma_r^{t-1})` for `t >= 1`.
    pub fn sigma_perp(&self, t: usize) -> Vec<f64> {
        perp(&self.sigma[t], &self.sigma[t - 1])
    }

    /// `tau_c^t (1 - tau_c^t / tau_c^{t-1})` for `t >= 1`.
    pub fn tau_perp(&self, t: usize) -> Vec<f64> {
        perp(&self.tau[t], &self.tau[t - 1])
    }

    /// Largest absolute gap between mirrored blocks over the whole run.
    pub fn max_asymmetry(&self) -> f64 {
        let g = self.gamma;
        self.psi.iter().flat_map(|psi| (0..g).map(move |c| (psi[c] - psi[g - 1 - c]).abs())).fold(0.0, f64::max)
    }

    /// Writes `t,c,psi,tau,r,sigma,phi` rows; block index `b` serves as
    /// both the column block `c` and the row block `r`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "c", "psi", "tau", "r", "sigma", "phi"])?;
        for t in 0..self.iterations() {
            for b in 0..self.gamma {
                w.write_record(&[
                    t.to_string(),
                    b.to_string(),
                    format!("{:e}", self.psi[t][b]),
                    format!("{:e}", self.tau[t][b]),
                    b.to_string(),
                    format!("{:e}", self.sigma[t][b]),
                    format!("{:e}", self.phi[t][b]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn perp(now: &[f64], before: &[f64]) -> Vec<f64> {
    now.iter().zip(before).map(|(&x, &y)| if y > 0.0 { x * (1.0 - x / y) } else { 0.0 }).collect()
}

/// Reusable state for repeated steps: the `eps` sampler is built once so
/// every step sees the same random numbers.
pub struct SeEngine<'a> {
    params: SparcParams,
    w: &'a BaseMatrix,
    channel: &'a ChannelSpec,
    seeds: Vec<bool>,
    sampler: EpsSampler,
}

impl<'a> SeEngine<'a> {
    pub fn new(
        params: &SparcParams,
        w: &'a BaseMatrix,
        channel: &'a ChannelSpec,
        n_mc: usize,
        stream: RngStream,
    ) -> Result<Self> {
        if w.gamma != params.gamma {
            return Err(Error::param(format!(
                "base matrix is {0}x{0} but the code has gamma = {1}",
                w.gamma, params.gamma
            )));
        }
        Ok(Self {
            params: *params,
            w,
            channel,
            seeds: params.seeds()?.mask(),
            sampler: EpsSampler::new(params.m, n_mc, stream)?,
        })
    }

    pub fn seeds(&self) -> &[bool] {
        &self.seeds
    }

    /// Initial errors: zero on seeds, one elsewhere.
    pub fn initial_psi(&self) -> Vec<f64> {
        self.seeds.iter().map(|&s| if s { 0.0 } else { 1.0 }).collect()
    }

    pub fn step(&self, psi: &[f64], iteration: usize) -> Result<SeStep> {
        let g = self.params.gamma;
        if psi.len() != g {
            return Err(Error::param(format!("psi has {} entries, expected {g}", psi.len())));
        }
        if let Some(bad) = psi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::param(format!("psi entries must lie in [0, 1], got {bad}")));
        }
        let gf = g as f64;
        let sigma: Vec<f64> =
            (0..g).map(|r| (self.w.row(r).iter().zip(psi).map(|(w, p)| w * p).sum::<f64>() / gf).min(1.0)).collect();
        let mut f = Vec::with_capacity(g);
        for (r, &s) in sigma.iter().enumerate() {
            let v = self.channel.f_out(s)?;
            if !(v > 0.0) {
                return Err(Error::Diverged {
                    iteration,
                    block: r,
                    message: format!("f_out({s}) = {v}: the channel carries no information"),
                });
            }
            f.push(v);
        }
        let phi: Vec<f64> = f.iter().map(|v| 1.0 / v).collect();
        let scale = self.params.rate_nats / (self.params.m as f64).ln();
        let tau: Vec<f64> = (0..g)
            .map(|c| {
                let info: f64 = (0..g).map(|r| self.w.get(r, c) * f[r]).sum::<f64>() / gf;
                scale / info
            })
            .collect();
        let mut psi_next = vec![0.0; g];
        let mut psi_std_error = vec![0.0; g];
        for c in 0..g {
            if self.seeds[c] {
                continue;
            }
            if !tau[c].is_finite() {
                return Err(Error::Diverged { iteration, block: c, message: format!("tau = {}", tau[c]) });
            }
            let e = self.sampler.eval(tau[c])?;
            psi_next[c] = (1.0 - e.mean).clamp(0.0, 1.0);
            psi_std_error[c] = e.std_error;
        }
        Ok(SeStep { sigma, phi, tau, psi_next, psi_std_error })
    }

    pub fn run(&self, options: &SeOptions) -> Result<SeTrajectory> {
        if options.t_max == 0 {
            return Err(Error::param("state evolution needs at least one iteration"));
        }
        let mut traj = SeTrajectory {
            gamma: self.params.gamma,
            seeds: self.seeds.clone(),
            psi: vec![self.initial_psi()],
            psi_std_error: vec![vec![0.0; self.params.gamma]],
            sigma: Vec::new(),
            phi: Vec::new(),
            tau: Vec::new(),
        };
        for t in 0..options.t_max {
            let step = self.step(traj.psi.last().expect("initial psi"), t)?;
            let done = step.psi_next.iter().all(|&p| p <= options.stop_tol);
            traj.sigma.push(step.sigma);
            traj.phi.push(step.phi);
            traj.tau.push(step.tau);
            traj.psi.push(step.psi_next);
            traj.psi_std_error.push(step.psi_std_error);
            if done {
                break;
            }
        }
        Ok(traj)
    }
}

/// One state evolution step with a fresh `eps` sampler.
pub fn se_step(
    psi: &[f64],
    w: &BaseMatrix,
    params: &SparcParams,
    channel: &ChannelSpec,
    n_mc: usize,
    stream: RngStream,
) -> Result<SeStep> {
    SeEngine::new(params, w, channel, n_mc, stream)?.step(psi, 0)
}

/// State evolution from the seeded initialization.
pub fn run_se(
    params: &SparcParams,
    w: &BaseMatrix,
    channel: &ChannelSpec,
    options: &SeOptions,
    stream: RngStream,
) -> Result<SeTrajectory> {
    SeEngine::new(params, w, channel, options.n_mc, stream)?.run(options)
}

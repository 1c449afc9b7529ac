//! Spatially coupled GAMP decoder.
//!
//! Iteration `t` computes
//! `p = A beta^{t-1} - sigma^t s^{t-1}`, `s = g_out(p, y, sigma^t)`,
//! `r = beta^{t-1} + tau^t A^T s` and `beta^t = g_in(r, tau^t)` sectionwise,
//! with `sigma` constant over row blocks, `tau` constant over column blocks
//! and the seed blocks of `beta` held at their known values. The update of
//! `r` uses `beta^{t-1}`, the estimate available when `s^t` is formed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{g_in_into, hard_decision, Message};
use crate::channels::ChannelSpec;
use crate::code_design::{BaseMatrix, DesignMatrix, SparcParams};
use crate::error::{Error, Result};
use crate::state_evolution::SeTrajectory;

/// Smallest `sigma` passed to the output estimator. Row blocks coupled only
/// to seeds have `sigma = 0` when the background level is zero; their `z`
/// is then known exactly and the floor changes nothing but the domain check.
const SIGMA_FLOOR: f64 = 1e-12;

/// How the per-block `sigma` and `tau` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    /// From an offline state evolution trajectory.
    StateEvolution,
    /// From the decoder's own estimate of the per-block error.
    Online,
}

#[derive(Debug, Clone, Copy)]
pub enum Schedule<'a> {
    StateEvolution(&'a SeTrajectory),
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderOptions {
    /// Maximum number of iterations.
    pub iterations: usize,
    /// Stop once the mean largest entry per section exceeds `1 - f_stop`.
    pub f_stop: f64,
    /// Keep every iterate in the run record.
    pub record_iterates: bool,
}

impl Default for DecoderOptions {
    fn default() -> Self {
        Self { iterations: 25, f_stop: 1e-6, record_iterates: false }
    }
}

/// Summary of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// `||beta^t - beta||^2 / L`, when the truth is known.
    pub mse_empirical: Option<f64>,
    /// Predicted error `(1/G) sum_c psi_c^{t+1}` for the state evolution schedule.
    pub mse_se: Option<f64>,
    /// Section error rate of the hard decision at this iteration.
    pub ser_running: Option<f64>,
    /// Mean over sections of the largest entry of `beta^t`.
    pub mean_max_mass: f64,
}

/// Full state of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSnapshot {
    pub p: Vec<f64>,
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderRun {
    pub iterations: usize,
    pub stopped_early: bool,
    pub beta: Vec<f64>,
    pub decoded: Message,
    pub records: Vec<IterationRecord>,
    pub iterates: Vec<IterateSnapshot>,
}

/// Decoder bound to one design matrix and channel.
pub struct Decoder<'a> {
    a: &'a DesignMatrix,
    channel: &'a ChannelSpec,
    params: SparcParams,
    w: &'a BaseMatrix,
    seeds: Vec<bool>,
    free: Vec<bool>,
}

impl<'a> Decoder<'a> {
    pub fn new(a: &'a DesignMatrix, channel: &'a ChannelSpec, params: &SparcParams, w: &'a BaseMatrix) -> Result<Self> {
        if a.n_rows() != params.n || a.n_cols() != params.n_cols() || a.gamma() != params.gamma {
            return Err(Error::param("design matrix does not match the code parameters"));
        }
        if w.gamma != params.gamma {
            return Err(Error::param("base matrix does not match the code parameters"));
        }
        let seeds = params.seeds()?.mask();
        let free = seeds.iter().map(|s| !s).collect();
        Ok(Self { a, channel, params: *params, w, seeds, free })
    }

    /// Runs the decoder on `y`. Only the seed blocks of `seeded` are read;
    /// `truth` is used for reporting alone.
    pub fn decode(
        &self,
        y: &[f64],
        seeded: &[f64],
        schedule: Schedule<'_>,
        options: &DecoderOptions,
        truth: Option<&[f64]>,
    ) -> Result<DecoderRun> {
        let p = &self.params;
        let (n, nc, m, g) = (p.n, p.n_cols(), p.m, p.gamma);
        if y.len() != n {
            return Err(Error::param(format!("observation has length {}, expected {n}", y.len())));
        }
        if seeded.len() != nc || truth.is_some_and(|t| t.len() != nc) {
            return Err(Error::param(format!("signal vectors must have length {nc}")));
        }
        if let Schedule::StateEvolution(se) = schedule {
            if se.gamma != g || se.iterations() < options.iterations {
                return Err(Error::param(format!(
                    "state evolution provides {} iterations for gamma = {}, decoder needs {} for gamma = {g}",
                    se.iterations(),
                    se.gamma,
                    options.iterations
                )));
            }
        }
        let cpb = p.cols_per_block();

        // beta^{-1}: known sections on the seeds, zero elsewhere.
        let mut beta = vec![0.0; nc];
        for c in (0..g).filter(|&c| self.seeds[c]) {
            beta[c * cpb..(c + 1) * cpb].copy_from_slice(&seeded[c * cpb..(c + 1) * cpb]);
        }
        let seed_part = self.a.matvec_masked(&beta, &self.seeds)?;
        let mut s = vec![0.0; n];
        let mut records = Vec::new();
        let mut iterates = Vec::new();
        let mut stopped_early = false;
        let mut done = 0;

        for t in 0..options.iterations {
            let (sigma, tau) = match schedule {
                Schedule::StateEvolution(se) => (se.sigma[t].clone(), se.tau[t].clone()),
                Schedule::Online => self.online_parameters(&beta, t)?,
            };

            let pv = output_step(self.a, self.channel, y, &beta, &seed_part, &self.free, &sigma, &mut s, t)?;
            let r = input_statistic(self.a, &s, &beta, &tau, &self.seeds, t)?;

            let mut next = beta.clone();
            next.par_chunks_mut(m).zip(r.par_chunks(m)).enumerate().try_for_each(|(sec, (out, rs))| {
                let c = sec / p.sections_per_block();
                if self.seeds[c] {
                    Ok(())
                } else {
                    g_in_into(rs, tau[c], out)
                }
            })?;
            beta = next;
            done = t + 1;

            let mean_max_mass =
                beta.par_chunks(m).map(|sec| sec.iter().copied().fold(0.0, f64::max)).sum::<f64>() / p.l as f64;
            let (mse_empirical, ser_running) = match truth {
                Some(tr) => {
                    let mse = beta.iter().zip(tr).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.l as f64;
                    let decided = hard_decision(&beta, m);
                    let truth_msg = hard_decision(tr, m);
                    let wrong = decided.indices.iter().zip(&truth_msg.indices).filter(|(a, b)| a != b).count();
                    (Some(mse), Some(wrong as f64 / p.l as f64))
                }
                None => (None, None),
            };
            let mse_se = match schedule {
                Schedule::StateEvolution(se) => Some(se.mean_psi(t + 1)),
                Schedule::Online => None,
            };
            records.push(IterationRecord { t, mse_empirical, mse_se, ser_running, mean_max_mass });
            if options.record_iterates {
                iterates.push(IterateSnapshot { p: pv, s: s.clone(), r, beta: beta.clone(), sigma, tau });
            }
            if mean_max_mass > 1.0 - options.f_stop {
                stopped_early = t + 1 < options.iterations;
                break;
            }
        }
        let decoded = hard_decision(&beta, m);
        Ok(DecoderRun { iterations: done, stopped_early, beta, decoded, records, iterates })
    }

    /// `sigma` and `tau` from the estimate `psi_c = (G / L) sum (1 - ||beta_sec||^2)`
    /// over the sections of block `c`.
    fn online_parameters(&self, beta: &[f64], t: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = &self.params;
        let g = p.gamma;
        let spb = p.sections_per_block();
        let cpb = p.cols_per_block();
        let psi: Vec<f64> = (0..g)
            .map(|c| {
                if self.seeds[c] {
                    return 0.0;
                }
                let block = &beta[c * cpb..(c + 1) * cpb];
                let kept: f64 = block.chunks(p.m).map(|sec| sec.iter().map(|v| v * v).sum::<f64>()).sum();
                ((spb as f64 - kept) / spb as f64).clamp(0.0, 1.0)
            })
            .collect();
        let gf = g as f64;
        let sigma: Vec<f64> =
            (0..g).map(|r| (self.w.row(r).iter().zip(&psi).map(|(w, x)| w * x).sum::<f64>() / gf).min(1.0)).collect();
        let mut f = Vec::with_capacity(g);
        for (r, &sr) in sigma.iter().enumerate() {
            let v = self.channel.f_out(sr)?;
            if !(v > 0.0) {
                return Err(Error::Diverged { iteration: t, block: r, message: format!("f_out({sr}) = {v}") });
            }
            f.push(v);
        }
        let scale = p.rate_nats / (p.m as f64).ln();
        let tau = (0..g).map(|c| scale * gf / (0..g).map(|r| self.w.get(r, c) * f[r]).sum::<f64>()).collect();
        Ok((sigma, tau))
    }
}

/// Output half of an iteration: returns
/// `p = A_free beta + seed_part - sigma s` and overwrites `s` with
/// `g_out(p, y, sigma)`, with `sigma` constant over row blocks.
#[allow(clippy::too_many_arguments)]
pub(crate) fn output_step(
    a: &DesignMatrix,
    channel: &ChannelSpec,
    y: &[f64],
    beta: &[f64],
    seed_part: &[f64],
    free: &[bool],
    sigma: &[f64],
    s: &mut [f64],
    t: usize,
) -> Result<Vec<f64>> {
    let rpb = a.n_rows() / a.gamma();
    let mut p = a.matvec_masked(beta, free)?;
    p.par_iter_mut().zip(seed_part).enumerate().for_each(|(i, (pi, sp))| {
        *pi += sp - sigma[i / rpb] * s[i];
    });
    let updated: Vec<Result<f64>> = p
        .par_iter()
        .zip(y)
        .enumerate()
        .map(|(i, (&pi, &yi))| channel.g_out(pi, yi, sigma[i / rpb].max(SIGMA_FLOOR)))
        .collect();
    for (i, v) in updated.into_iter().enumerate() {
        match v? {
            x if x.is_finite() => s[i] = x,
            x => {
                return Err(Error::Diverged {
                    iteration: t,
                    block: i / rpb,
                    message: format!("output estimate {x} at row {i}"),
                })
            }
        }
    }
    Ok(p)
}

/// Input half of an iteration: `r = beta + tau A^T s` on free blocks, with
/// `tau` constant over column blocks; seeded blocks carry `beta` unchanged.
pub(crate) fn input_statistic(
    a: &DesignMatrix,
    s: &[f64],
    beta: &[f64],
    tau: &[f64],
    seeds: &[bool],
    t: usize,
) -> Result<Vec<f64>> {
    let cpb = a.n_cols() / a.gamma();
    let free: Vec<bool> = seeds.iter().map(|s| !s).collect();
    let mut r = a.matvec_t_masked(s, &free)?;
    for (c, (rc, bc)) in r.chunks_mut(cpb).zip(beta.chunks(cpb)).enumerate() {
        if seeds[c] {
            rc.copy_from_slice(bc);
        } else {
            for (rj, bj) in rc.iter_mut().zip(bc) {
                *rj = bj + tau[c] * *rj;
            }
        }
    }
    if let Some(j) = r.iter().position(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            iteration: t,
            block: j / cpb,
            message: format!("input statistic {} at column {j}", r[j]),
        });
    }
    Ok(r)
}

/// Decodes `y` with parameters from a state evolution trajectory.
#[allow(clippy::too_many_arguments)]
pub fn gamp_decode(
    a: &DesignMatrix,
    y: &[f64],
    channel: &ChannelSpec,
    params: &SparcParams,
    w: &BaseMatrix,
    seeded: &[f64],
    se: &SeTrajectory,
    iterations: usize,
) -> Result<DecoderRun> {
    let options = DecoderOptions { iterations, ..Default::default() };
    Decoder::new(a, channel, params, w)?.decode(y, seeded, Schedule::StateEvolution(se), &options, Some(seeded))
}

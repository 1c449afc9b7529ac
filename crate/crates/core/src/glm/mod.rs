//! Spatially coupled GAMP for generalized linear models with separable
//! priors.
//!
//! The signal has `N` i.i.d. entries split into `G` column blocks; entries
//! of block `(r, c)` of the design matrix have variance `W_rc / (N / G)`.
//! The output variable `z = A beta` then has variance `G E[beta^2]`, and
//! state evolution reads `sigma_r = sum_c W_rc psi_c`,
//! `tau_c = [alpha sum_r W_rc f_out(sigma_r)]^{-1}` with `alpha = n / N`,
//! and `psi_c' = mmse(tau_c)`. Seeds follow the SPARC convention: the first
//! and last `4 omega` blocks are known to the decoder.

mod prior;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelSpec;
use crate::code_design::{BaseMatrix, DesignMatrix, DesignOptions, SeedSet, StorageMode};
use crate::codec::gamp::{input_statistic, output_step};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::state_evolution::{SeOptions, SeTrajectory};

pub use prior::{g_in_glm, psi_update_glm, PriorSpec};

/// Geometry of a coupled linear model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmParams {
    /// Signal length `N`.
    pub n_cols: usize,
    /// Number of measurements `n`.
    pub n: usize,
    pub gamma: usize,
    pub omega: usize,
    pub rho: f64,
}

impl GlmParams {
    /// `n` is `alpha N` rounded up to a multiple of `gamma`.
    pub fn new(n_cols: usize, alpha: f64, gamma: usize, omega: usize, rho: f64) -> Result<Self> {
        if gamma == 0 || n_cols == 0 || !n_cols.is_multiple_of(gamma) {
            return Err(Error::param(format!("N = {n_cols} must be a positive multiple of gamma = {gamma}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param(format!("sampling ratio must be positive, got {alpha}")));
        }
        let n = ((alpha * n_cols as f64).round() as usize).max(1).div_ceil(gamma) * gamma;
        let params = Self { n_cols, n, gamma, omega, rho };
        SeedSet::new(gamma, omega)?;
        BaseMatrix::new(gamma, omega, rho)?;
        Ok(params)
    }

    pub fn alpha(&self) -> f64 {
        self.n as f64 / self.n_cols as f64
    }

    pub fn cols_per_block(&self) -> usize {
        self.n_cols / self.gamma
    }

    pub fn base_matrix(&self) -> Result<BaseMatrix> {
        BaseMatrix::new(self.gamma, self.omega, self.rho)
    }

    pub fn seeds(&self) -> Result<SeedSet> {
        SeedSet::new(self.gamma, self.omega)
    }

    /// Design matrix with entry variances `W_rc / (N / G)`.
    pub fn design_matrix(&self, w: &BaseMatrix, stream: RngStream, options: &DesignOptions) -> Result<DesignMatrix> {
        DesignMatrix::from_profile(self.n, self.n_cols, w, self.gamma as f64 / self.n_cols as f64, stream, options)
    }
}

/// State evolution for the coupled model. The unseeded blocks start at the
/// prior mean, so `psi^0` is the prior variance there.
pub fn run_se_glm(
    params: &GlmParams,
    w: &BaseMatrix,
    channel: &ChannelSpec,
    prior: &PriorSpec,
    options: &SeOptions,
) -> Result<SeTrajectory> {
    if options.t_max == 0 {
        return Err(Error::param("state evolution needs at least one iteration"));
    }
    if w.gamma != params.gamma {
        return Err(Error::param("base matrix does not match the model"));
    }
    prior.validate()?;
    let g = params.gamma;
    let seeds = params.seeds()?.mask();
    let total_variance = g as f64 * prior.second_moment();
    let alpha = params.alpha();
    let psi0: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { prior.variance() }).collect();
    let mut traj = SeTrajectory {
        gamma: g,
        seeds: seeds.clone(),
        psi: vec![psi0],
        psi_std_error: vec![vec![0.0; g]],
        sigma: Vec::new(),
        phi: Vec::new(),
        tau: Vec::new(),
    };
    for t in 0..options.t_max {
        let psi = traj.psi.last().expect("initial psi");
        let sigma: Vec<f64> =
            (0..g).map(|r| w.row(r).iter().zip(psi).map(|(w, p)| w * p).sum::<f64>().min(total_variance)).collect();
        let mut f = Vec::with_capacity(g);
        for (r, &s) in sigma.iter().enumerate() {
            let v = channel.f_out_with_variance(s, total_variance)?;
            if !(v > 0.0) {
                return Err(Error::Diverged { iteration: t, block: r, message: format!("f_out({s}) = {v}") });
            }
            f.push(v);
        }
        let tau: Vec<f64> = (0..g).map(|c| 1.0 / (alpha * (0..g).map(|r| w.get(r, c) * f[r]).sum::<f64>())).collect();
        let mut next = vec![0.0; g];
        for c in (0..g).filter(|&c| !seeds[c]) {
            if !tau[c].is_finite() {
                return Err(Error::Diverged { iteration: t, block: c, message: format!("tau = {}", tau[c]) });
            }
            next[c] = prior.mmse(tau[c])?;
        }
        let done = next.iter().all(|&p| p <= options.stop_tol);
        traj.phi.push(f.iter().map(|v| 1.0 / v).collect());
        traj.sigma.push(sigma);
        traj.tau.push(tau);
        traj.psi.push(next);
        traj.psi_std_error.push(vec![0.0; g]);
        if done {
            break;
        }
    }
    Ok(traj)
}

/// Fixed point of the coupled recursion for a Gaussian prior and AWGN,
/// where every step is in closed form. Returns the per-block errors.
pub fn gaussian_fixed_point(
    params: &GlmParams,
    w: &BaseMatrix,
    prior_var: f64,
    noise_var: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let g = params.gamma;
    let seeds = params.seeds()?.mask();
    let alpha = params.alpha();
    let mut psi: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { prior_var }).collect();
    for _ in 0..100_000 {
        let f: Vec<f64> =
            (0..g).map(|r| 1.0 / (w.row(r).iter().zip(&psi).map(|(w, p)| w * p).sum::<f64>() + noise_var)).collect();
        let next: Vec<f64> = (0..g)
            .map(|c| {
                if seeds[c] {
                    return 0.0;
                }
                let tau = 1.0 / (alpha * (0..g).map(|r| w.get(r, c) * f[r]).sum::<f64>());
                prior_var * tau / (prior_var + tau)
            })
            .collect();
        let change = next.iter().zip(&psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        psi = next;
        if change <= tol {
            return Ok(psi);
        }
    }
    Err(Error::numerical("Gaussian fixed point did not converge"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmIterationRecord {
    pub t: usize,
    /// `||beta^t - beta||^2 / N`.
    pub mse_empirical: f64,
    /// `(1/G) sum_c psi_c^{t+1}`.
    pub mse_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmRun {
    pub iterations: usize,
    pub beta: Vec<f64>,
    pub records: Vec<GlmIterationRecord>,
}

/// Coupled GAMP with `sigma`, `tau` from `se`. Unseeded entries start at the
/// prior mean; seeded blocks are taken from `truth` and held fixed.
#[allow(clippy::too_many_arguments)]
pub fn gamp_decode_glm(
    a: &DesignMatrix,
    y: &[f64],
    channel: &ChannelSpec,
    params: &GlmParams,
    prior: &PriorSpec,
    truth: &[f64],
    se: &SeTrajectory,
    iterations: usize,
) -> Result<GlmRun> {
    let (n, nc, g) = (params.n, params.n_cols, params.gamma);
    if a.n_rows() != n || a.n_cols() != nc || a.gamma() != g {
        return Err(Error::param("design matrix does not match the model"));
    }
    if y.len() != n || truth.len() != nc {
        return Err(Error::param(format!("expected {n} observations and {nc} signal entries")));
    }
    if se.gamma != g || se.iterations() < iterations {
        return Err(Error::param(format!(
            "state evolution provides {} iterations, decoder needs {iterations}",
            se.iterations()
        )));
    }
    let cpb = params.cols_per_block();
    let seeds = params.seeds()?.mask();
    let free: Vec<bool> = seeds.iter().map(|s| !s).collect();
    let mut beta = vec![prior.mean(); nc];
    for c in (0..g).filter(|&c| seeds[c]) {
        beta[c * cpb..(c + 1) * cpb].copy_from_slice(&truth[c * cpb..(c + 1) * cpb]);
    }
    let seed_part = a.matvec_masked(&beta, &seeds)?;
    let mut s = vec![0.0; n];
    let mut records = Vec::with_capacity(iterations);
    for t in 0..iterations {
        let (sigma, tau) = (&se.sigma[t], &se.tau[t]);
        output_step(a, channel, y, &beta, &seed_part, &free, sigma, &mut s, t)?;
        let r = input_statistic(a, &s, &beta, tau, &seeds, t)?;
        beta.par_chunks_mut(cpb).zip(r.par_chunks(cpb)).enumerate().for_each(|(c, (out, rc))| {
            if !seeds[c] {
                for (o, &ri) in out.iter_mut().zip(rc) {
                    *o = prior.posterior(ri, tau[c]).0;
                }
            }
        });
        let mse = beta.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / nc as f64;
        records.push(GlmIterationRecord { t, mse_empirical: mse, mse_se: se.mean_psi(t + 1) });
    }
    Ok(GlmRun { iterations, beta, records })
}

/// One simulated instance: draws the matrix, signal and noise from `stream`
/// and decodes with `iterations` steps of `se`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_glm(
    params: &GlmParams,
    w: &BaseMatrix,
    channel: &ChannelSpec,
    prior: &PriorSpec,
    se: &SeTrajectory,
    iterations: usize,
    stream: RngStream,
    storage: StorageMode,
) -> Result<GlmRun> {
    let options = DesignOptions { storage, ..Default::default() };
    let a = params.design_matrix(w, stream.derive(0), &options)?;
    let mut rng = stream.derive(1).rng();
    let beta: Vec<f64> = (0..params.n_cols).map(|_| prior.sample(&mut rng)).collect();
    let y = channel.transmit(&a.matvec(&beta)?, &stream.derive(2));
    gamp_decode_glm(&a, &y, channel, params, prior, &beta, se, iterations)
}

//! The sectionwise success probability
//! `eps(tau) = E[ e^{U1/sqrt(tau) + 1/tau} / (e^{U1/sqrt(tau) + 1/tau} + sum_{j>=2} e^{Uj/sqrt(tau)}) ]`.
//!
//! Dividing through by the first term gives `1 / (1 + sum_j e^{(Uj - U1)/sqrt(tau) - 1/tau})`,
//! whose exponents are bounded above by `(Uj - U1)^2 / 4`, so no rescaling
//! is needed. A sampler reuses one fixed set of normal draws for every
//! `tau` (common random numbers), which makes `eps` a smooth deterministic
//! function of `tau` within a run.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{gaussian_expect_adaptive, McEstimate, RngStream, MIN_SAMPLES};

const CHUNK: usize = 1024;
/// Largest number of cached differences (256 MiB of `f64`).
const CACHE_LIMIT: usize = 1 << 25;

#[derive(Debug, Clone)]
pub struct EpsSampler {
    m: usize,
    n_samples: usize,
    stream: RngStream,
    cache: Option<Vec<f64>>,
}

impl EpsSampler {
    pub fn new(m: usize, n_samples: usize, stream: RngStream) -> Result<Self> {
        validate(m, n_samples)?;
        let mut sampler = Self { m, n_samples, stream, cache: None };
        if n_samples * (m - 1) <= CACHE_LIMIT {
            let mut all = Vec::with_capacity(n_samples * (m - 1));
            for k in 0..sampler.n_chunks() {
                all.extend(sampler.chunk_differences(k));
            }
            sampler.cache = Some(all);
        }
        Ok(sampler)
    }

    pub fn section_size(&self) -> usize {
        self.m
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    fn n_chunks(&self) -> usize {
        self.n_samples.div_ceil(CHUNK)
    }

    fn chunk_len(&self, k: usize) -> usize {
        CHUNK.min(self.n_samples - k * CHUNK)
    }

    /// `Uj - U1` for every sample of chunk `k`, row by row.
    fn chunk_differences(&self, k: usize) -> Vec<f64> {
        let mut rng = self.stream.derive(k as u64).rng();
        let len = self.chunk_len(k);
        let mut out = Vec::with_capacity(len * (self.m - 1));
        for _ in 0..len {
            let u1: f64 = StandardNormal.sample(&mut rng);
            for _ in 1..self.m {
                let u: f64 = StandardNormal.sample(&mut rng);
                out.push(u - u1);
            }
        }
        out
    }

    pub fn eval(&self, tau: f64) -> Result<McEstimate> {
        if !(tau > 0.0) {
            return Err(Error::param(format!("tau must be positive, got {tau}")));
        }
        let a = 1.0 / tau.sqrt();
        let b = 1.0 / tau;
        let width = self.m - 1;
        let chunk_sums = |diffs: &[f64]| -> (f64, f64) {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for row in diffs.chunks_exact(width) {
                let s: f64 = row.iter().map(|&d| (d * a - b).exp()).sum();
                let e = 1.0 / (1.0 + s);
                s1 += e;
                s2 += e * e;
            }
            (s1, s2)
        };
        let sums: Vec<(f64, f64)> = match &self.cache {
            Some(all) => all.par_chunks(CHUNK * width).map(chunk_sums).collect(),
            None => (0..self.n_chunks()).into_par_iter().map(|k| chunk_sums(&self.chunk_differences(k))).collect(),
        };
        let (s1, s2) = sums.iter().fold((0.0, 0.0), |(x, y), &(a, b)| (x + a, y + b));
        let n = self.n_samples as f64;
        let mean = s1 / n;
        let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
        Ok(McEstimate { mean, std_error: (var / n).sqrt(), n_samples: self.n_samples })
    }
}

/// Monte Carlo estimate of `eps(tau)` with `n_mc` samples.
pub fn eps_tau(tau: f64, m: usize, n_mc: usize, stream: RngStream) -> Result<McEstimate> {
    if !(tau > 0.0) {
        return Err(Error::param(format!("tau must be positive, got {tau}")));
    }
    validate(m, n_mc)?;
    EpsSampler { m, n_samples: n_mc, stream, cache: None }.eval(tau)
}

fn validate(m: usize, n_samples: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::param(format!("section size must be at least 2, got {m}")));
    }
    if n_samples < MIN_SAMPLES {
        return Err(Error::param(format!("need at least {MIN_SAMPLES} samples, got {n_samples}")));
    }
    Ok(())
}

/// Deterministic approximation of `eps(tau)`: condition on `U1` and replace
/// the competing sum by its mean plus a second-order correction from its
/// variance. Accurate when `(e^{1/tau} - 1) / (M - 1)` is small; meant as a
/// cross-check only.
pub fn eps_tau_semi_analytic(tau: f64, m: usize) -> Result<f64> {
    if !(tau > 0.0) || m < 2 {
        return Err(Error::param(format!("need tau > 0 and M >= 2, got tau = {tau}, M = {m}")));
    }
    let b = 1.0 / tau;
    let ln_rest = ((m - 1) as f64).ln();
    let ln_mean = ln_rest + 0.5 * b;
    let ln_expm1 = if b > 30.0 { b } else { b.exp_m1().ln() };
    let ln_var = ln_rest + b + ln_expm1;
    gaussian_expect_adaptive(
        |u1| {
            let a = u1 * b.sqrt() + b;
            let x = (ln_mean - a).exp();
            let v = (ln_var - 2.0 * a).exp();
            let value = 1.0 / (1.0 + x) + v / (1.0 + x).powi(3);
            value.clamp(0.0, 1.0)
        },
        1e-10,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate_1d, special};

    #[test]
    fn limits() {
        let s = RngStream::new(1, 0);
        let near_zero = eps_tau(1e-4, 16, 10_000, s).unwrap();
        assert!(near_zero.mean >= 1.0 - 1e-6);
        let flat = eps_tau(1e6, 16, 10_000, s).unwrap();
        assert!(flat.within(1.0 / 16.0, 4.0), "{flat:?}");
    }

    #[test]
    fn two_term_case_matches_quadrature() {
        // For M = 2 the expectation depends only on D = U2 - U1 ~ N(0, 2).
        let tau: f64 = 1.0;
        let exact = integrate_1d(
            |d| special::norm_pdf(d / 2f64.sqrt()) / 2f64.sqrt() / (1.0 + (d / tau.sqrt() - 1.0 / tau).exp()),
            -40.0,
            40.0,
            1e-12,
        )
        .unwrap();
        let est = eps_tau(tau, 2, 200_000, RngStream::new(4, 4)).unwrap();
        assert!(est.within(exact, 4.0), "{est:?} vs {exact}");
    }

    #[test]
    fn cached_and_streamed_samplers_agree() {
        let s = RngStream::new(9, 3);
        let cached = EpsSampler::new(8, 5000, s).unwrap();
        assert!(cached.cache.is_some());
        let streamed = EpsSampler { cache: None, ..cached.clone() };
        for &t in &[0.05, 0.3, 2.0] {
            assert_eq!(cached.eval(t).unwrap(), streamed.eval(t).unwrap());
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = RngStream::new(1, 1);
        assert!(eps_tau(0.0, 16, 1000, s).unwrap_err().is_parameter());
        assert!(eps_tau(1.0, 1, 1000, s).unwrap_err().is_parameter());
        assert!(eps_tau(1.0, 16, 10, s).unwrap_err().is_parameter());
    }
}

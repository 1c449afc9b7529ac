//! Reproducible Monte Carlo expectations over standard normal vectors.
//!
//! Samples are drawn in fixed-size chunks, each from its own derived stream,
//! and chunk statistics are merged in chunk order. The result is therefore
//! bit-identical for any rayon pool size.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use crate::error::{Error, Result};

const CHUNK: usize = 4096;
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl McEstimate {
    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

#[derive(Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * other.n / n,
            m2: self.m2 + other.m2 + delta * delta * self.n * other.n / n,
        }
    }
}

/// Sample mean of `f(U)` with `U ~ N(0, I_dim)`, with its standard error.
pub fn mc_expect<F>(f: F, dim: usize, n_samples: usize, stream: RngStream) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if dim == 0 {
        return Err(Error::param("Monte Carlo dimension must be positive"));
    }
    if n_samples < MIN_SAMPLES {
        return Err(Error::param(format!("Monte Carlo needs at least {MIN_SAMPLES} samples, got {n_samples}")));
    }
    let n_chunks = n_samples.div_ceil(CHUNK);
    let chunks: Vec<std::result::Result<Moments, usize>> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let start = k * CHUNK;
            let end = (start + CHUNK).min(n_samples);
            let mut rng = stream.derive(k as u64).rng();
            let mut u = vec![0.0; dim];
            let mut m = Moments { n: 0.0, mean: 0.0, m2: 0.0 };
            for idx in start..end {
                for x in u.iter_mut() {
                    *x = StandardNormal.sample(&mut rng);
                }
                let v = f(&u);
                if !v.is_finite() {
                    return Err(idx);
                }
                m.n += 1.0;
                let d = v - m.mean;
                m.mean += d / m.n;
                m.m2 += d * (v - m.mean);
            }
            Ok(m)
        })
        .collect();

    let mut total = Moments { n: 0.0, mean: 0.0, m2: 0.0 };
    for chunk in chunks {
        match chunk {
            Ok(m) => total = total.merge(m),
            Err(idx) => {
                return Err(Error::Numerical {
                    message: format!("integrand is not finite at sample {idx}"),
                    partial: None,
                    sample: Some(idx),
                })
            }
        }
    }
    let var = total.m2 / (total.n - 1.0);
    Ok(McEstimate { mean: total.mean, std_error: (var / total.n).sqrt(), n_samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream() -> RngStream {
        RngStream::new(2024, 5)
    }

    #[test]
    fn first_coordinate_has_zero_mean() {
        let e = mc_expect(|u| u[0], 1, 50_000, stream()).unwrap();
        assert!(e.within(0.0, 4.0), "{e:?}");
    }

    #[test]
    fn squared_norm_per_dimension_is_one() {
        let e = mc_expect(|u| u.iter().map(|x| x * x).sum::<f64>() / 8.0, 8, 20_000, stream()).unwrap();
        assert!(e.within(1.0, 4.0), "{e:?}");
    }

    #[test]
    fn positive_half_line_has_probability_half() {
        let e = mc_expect(|u| if u[0] > 0.0 { 1.0 } else { 0.0 }, 1, 40_000, stream()).unwrap();
        assert!(e.within(0.5, 4.0), "{e:?}");
    }

    #[test]
    fn bit_reproducible_across_pool_sizes() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_expect(|u| (u[0] * u[1]).exp().min(10.0), 2, 30_001, stream()).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn non_finite_sample_is_reported() {
        let err = mc_expect(|u| if u[0] > 3.0 { f64::NAN } else { 0.0 }, 1, 100_000, stream()).unwrap_err();
        match err {
            Error::Numerical { sample: Some(_), .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(mc_expect(|u| u[0], 1, 99, stream()).unwrap_err().is_parameter());
    }

    #[test]
    fn std_error_halves_when_samples_quadruple() {
        let mut ratios = Vec::new();
        for rep in 0..20u64 {
            let s = RngStream::new(77, rep);
            let small = mc_expect(|u| u[0] * u[0], 1, 2_000, s.derive(1)).unwrap();
            let large = mc_expect(|u| u[0] * u[0], 1, 8_000, s.derive(2)).unwrap();
            ratios.push(small.std_error / large.std_error);
        }
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(mean_ratio > 2.0 / 1.5 && mean_ratio < 2.0 * 1.5, "{mean_ratio}");
    }
}

//! Message encoding, the sectionwise denoiser and the GAMP decoder.

pub(crate) mod gamp;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code_design::{SeedSet, SparcParams};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub use gamp::{gamp_decode, Decoder, DecoderOptions, DecoderRun, IterateSnapshot, IterationRecord, Schedule, TauMode};

/// A message: one index per section, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub indices: Vec<usize>,
}

impl Message {
    pub fn new(indices: Vec<usize>, m: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(Error::param(format!("message index {bad} is out of range for M = {m}")));
        }
        Ok(Self { indices })
    }

    /// Builds a message from indices in `1..=M`.
    pub fn from_one_based(indices: &[usize], m: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > m) {
            return Err(Error::param(format!("message index {bad} is out of range 1..={m}")));
        }
        Ok(Self { indices: indices.iter().map(|i| i - 1).collect() })
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    /// Uniformly random message.
    pub fn random(l: usize, m: usize, stream: &RngStream) -> Self {
        let mut rng = stream.rng();
        Self { indices: (0..l).map(|_| rng.random_range(0..m)).collect() }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// One-hot signal vector of a message.
pub fn encode(msg: &Message, params: &SparcParams) -> Result<Vec<f64>> {
    if msg.len() != params.l {
        return Err(Error::param(format!("message has {} sections, expected {}", msg.len(), params.l)));
    }
    let m = params.m;
    let mut beta = vec![0.0; params.n_cols()];
    for (sec, &i) in msg.indices.iter().enumerate() {
        if i >= m {
            return Err(Error::param(format!("message index {i} is out of range for M = {m}")));
        }
        beta[sec * m + i] = 1.0;
    }
    Ok(beta)
}

/// Sectionwise posterior mean `softmax(r / tau)`.
pub fn g_in(r: &[f64], tau: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; r.len()];
    g_in_into(r, tau, &mut out)?;
    Ok(out)
}

pub(crate) fn g_in_into(r: &[f64], tau: f64, out: &mut [f64]) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::param(format!("tau must be positive, got {tau}")));
    }
    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(r) {
        *o = ((x - max) / tau).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// Per-section argmax; ties go to the lowest index.
pub fn hard_decision(beta: &[f64], m: usize) -> Message {
    let indices = beta
        .par_chunks(m)
        .map(|sec| {
            let mut best = 0;
            for (i, &v) in sec.iter().enumerate() {
                if v > sec[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    Message { indices }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionErrorRate {
    pub overall: f64,
    pub unseeded: f64,
}

/// Fraction of mismatched sections, over all sections and over the
/// sections outside the seed blocks.
pub fn section_error_rate(
    decoded: &Message,
    truth: &Message,
    seeds: &SeedSet,
    params: &SparcParams,
) -> Result<SectionErrorRate> {
    if decoded.len() != truth.len() || decoded.len() != params.l {
        return Err(Error::param(format!(
            "message lengths {} and {} do not match L = {}",
            decoded.len(),
            truth.len(),
            params.l
        )));
    }
    let mut wrong = 0usize;
    let mut wrong_free = 0usize;
    let mut free = 0usize;
    for (sec, (a, b)) in decoded.indices.iter().zip(&truth.indices).enumerate() {
        let seeded = seeds.contains(params.block_of_section(sec));
        if !seeded {
            free += 1;
        }
        if a != b {
            wrong += 1;
            if !seeded {
                wrong_free += 1;
            }
        }
    }
    Ok(SectionErrorRate {
        overall: wrong as f64 / params.l as f64,
        unseeded: if free == 0 { 0.0 } else { wrong_free as f64 / free as f64 },
    })
}

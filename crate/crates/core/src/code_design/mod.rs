//! Code geometry: rate bookkeeping, the coupled base matrix, boundary seeds
//! and the block-Gaussian design matrix.

mod design;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use design::{DesignMatrix, DesignOptions, StorageMode, DEFAULT_MEMORY_CAP_BYTES};

/// Geometry and rate of a spatially coupled SPARC.
///
/// `n` is always a multiple of `gamma`; `rate_nats` is the realized rate
/// `L ln M / n` after that rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparcParams {
    pub l: usize,
    pub m: usize,
    pub gamma: usize,
    pub omega: usize,
    pub rho: f64,
    pub n: usize,
    pub rate_nats: f64,
}

impl SparcParams {
    /// Parameters at a target rate; `n` is rounded to the nearest integer
    /// and then up to a multiple of `gamma`.
    pub fn new(l: usize, m: usize, gamma: usize, omega: usize, rho: f64, rate_nats: f64) -> Result<Self> {
        if !(rate_nats > 0.0 && rate_nats.is_finite()) {
            return Err(Error::param(format!("rate must be positive, got {rate_nats}")));
        }
        check_m(m)?;
        let n = ((l as f64) * (m as f64).ln() / rate_nats).round() as usize;
        Self::with_n(l, m, gamma, omega, rho, n)
    }

    /// Parameters at a given code length; `n` is rounded up to a multiple
    /// of `gamma`.
    pub fn with_n(l: usize, m: usize, gamma: usize, omega: usize, rho: f64, n: usize) -> Result<Self> {
        check_m(m)?;
        if gamma == 0 || l == 0 || !l.is_multiple_of(gamma) {
            return Err(Error::param(format!("gamma = {gamma} must divide L = {l}")));
        }
        if gamma <= 8 * omega {
            return Err(Error::param(format!("gamma = {gamma} must exceed 8 omega = {}", 8 * omega)));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::param(format!("rho must lie in [0, 1), got {rho}")));
        }
        let n = n.max(1).div_ceil(gamma) * gamma;
        let rate_nats = (l as f64) * (m as f64).ln() / n as f64;
        Ok(Self { l, m, gamma, omega, rho, n, rate_nats })
    }

    /// Total number of columns `N = M L`.
    pub fn n_cols(&self) -> usize {
        self.m * self.l
    }

    /// Sampling ratio `n / N`.
    pub fn alpha(&self) -> f64 {
        self.n as f64 / self.n_cols() as f64
    }

    pub fn rows_per_block(&self) -> usize {
        self.n / self.gamma
    }

    pub fn cols_per_block(&self) -> usize {
        self.n_cols() / self.gamma
    }

    pub fn sections_per_block(&self) -> usize {
        self.l / self.gamma
    }

    /// Column block holding section `l`.
    pub fn block_of_section(&self, section: usize) -> usize {
        section / self.sections_per_block()
    }

    pub fn effective_rate(&self) -> f64 {
        self.rate_nats * (1.0 - 8.0 * self.omega as f64 / self.gamma as f64)
    }

    pub fn base_matrix(&self) -> Result<BaseMatrix> {
        BaseMatrix::new(self.gamma, self.omega, self.rho)
    }

    pub fn seeds(&self) -> Result<SeedSet> {
        SeedSet::new(self.gamma, self.omega)
    }
}

fn check_m(m: usize) -> Result<()> {
    if m < 2 || !m.is_power_of_two() {
        Err(Error::param(format!("section size M must be a power of two >= 2, got {m}")))
    } else {
        Ok(())
    }
}

/// The `gamma x gamma` variance profile with band half-width `omega` and
/// background share `rho`. Every row averages to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMatrix {
    pub gamma: usize,
    pub omega: usize,
    pub rho: f64,
    /// Row-major entries `W_rc`.
    pub entries: Vec<f64>,
    /// Number of in-band columns of each row.
    pub band_counts: Vec<usize>,
}

impl BaseMatrix {
    pub fn new(gamma: usize, omega: usize, rho: f64) -> Result<Self> {
        if gamma < 2 * omega + 1 {
            return Err(Error::param(format!("gamma = {gamma} must be at least 2 omega + 1 = {}", 2 * omega + 1)));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::param(format!("rho must lie in [0, 1), got {rho}")));
        }
        let g = gamma as f64;
        let mut entries = vec![0.0; gamma * gamma];
        let mut band_counts = Vec::with_capacity(gamma);
        for r in 0..gamma {
            let lo = r.saturating_sub(omega);
            let hi = (r + omega).min(gamma - 1);
            let band = hi - lo + 1;
            band_counts.push(band);
            let off = gamma - band;
            // A row whose band covers every column has nowhere to put the
            // background share, so the band carries the full power.
            let (in_band, off_band) =
                if off == 0 { (g / band as f64, 0.0) } else { ((1.0 - rho) * g / band as f64, rho * g / off as f64) };
            for c in 0..gamma {
                entries[r * gamma + c] = if (lo..=hi).contains(&c) { in_band } else { off_band };
            }
        }
        Ok(Self { gamma, omega, rho, entries, band_counts })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.gamma + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.gamma..(r + 1) * self.gamma]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.gamma).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn in_band(&self, r: usize, c: usize) -> bool {
        r.abs_diff(c) <= self.omega
    }
}

/// Column blocks whose sections are known to the decoder: the first and
/// last `4 omega` blocks (0-based indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub gamma: usize,
    pub omega: usize,
    pub blocks: Vec<usize>,
}

impl SeedSet {
    pub fn new(gamma: usize, omega: usize) -> Result<Self> {
        if gamma <= 8 * omega {
            return Err(Error::param(format!("gamma = {gamma} must exceed 8 omega = {}", 8 * omega)));
        }
        let w = 4 * omega;
        let blocks = (0..w).chain(gamma - w..gamma).collect();
        Ok(Self { gamma, omega, blocks })
    }

    pub fn contains(&self, block: usize) -> bool {
        let w = 4 * self.omega;
        block < w || block >= self.gamma - w
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// One flag per column block, true when seeded.
    pub fn mask(&self) -> Vec<bool> {
        (0..self.gamma).map(|c| self.contains(c)).collect()
    }
}

/// Rate after discounting the seeded sections, `R (1 - 8 omega / gamma)`.
pub fn effective_rate(rate: f64, omega: usize, gamma: usize) -> Result<f64> {
    if gamma <= 8 * omega {
        return Err(Error::param(format!("gamma = {gamma} must exceed 8 omega = {}", 8 * omega)));
    }
    Ok(rate * (1.0 - 8.0 * omega as f64 / gamma as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn base_matrix_examples() {
        let w = BaseMatrix::new(12, 2, 0.0).unwrap();
        assert_eq!(w.band_counts[0], 3);
        assert_eq!(w.get(0, 0), 4.0);
        assert_eq!(w.get(0, 4), 0.0);
        let w = BaseMatrix::new(12, 2, 0.1).unwrap();
        assert_abs_diff_eq!(w.get(0, 0), 3.6, epsilon = 1e-15);
        assert_abs_diff_eq!(w.get(0, 4), 0.1 * 12.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn full_band_row_keeps_unit_average() {
        let w = BaseMatrix::new(5, 2, 0.3).unwrap();
        assert_eq!(w.band_counts[2], 5);
        assert_abs_diff_eq!(w.row_sums()[2], 5.0, epsilon = 1e-12);
        assert!(BaseMatrix::new(4, 2, 0.0).unwrap_err().is_parameter());
    }

    #[test]
    fn seed_examples() {
        let s = SeedSet::new(32, 2).unwrap();
        assert_eq!(s.blocks, (0..8).chain(24..32).collect::<Vec<_>>());
        let s = SeedSet::new(12, 1).unwrap();
        assert_eq!(s.blocks, vec![0, 1, 2, 3, 8, 9, 10, 11]);
        assert!(SeedSet::new(7, 0).unwrap().is_empty());
        assert!(SeedSet::new(16, 2).is_err());
    }

    #[test]
    fn effective_rate_examples() {
        assert_abs_diff_eq!(effective_rate(1.5, 6, 96).unwrap(), 0.75, epsilon = 1e-15);
        assert_eq!(effective_rate(0.4, 0, 10).unwrap(), 0.4);
        assert!(effective_rate(1.0, 2, 16).is_err());
    }

    #[test]
    fn n_rounds_up_to_gamma() {
        let p = SparcParams::new(64, 16, 16, 1, 0.0, 1.0).unwrap();
        assert_eq!(p.n % 16, 0);
        assert!(p.n >= (64.0 * 16f64.ln()).round() as usize);
        assert_abs_diff_eq!(p.rate_nats, 64.0 * 16f64.ln() / p.n as f64, epsilon = 1e-15);
        assert!(SparcParams::new(64, 12, 16, 1, 0.0, 1.0).is_err());
        assert!(SparcParams::new(60, 16, 16, 1, 0.0, 1.0).is_err());
    }
}

//! Block-Gaussian design matrix.
//!
//! Column `j` is a deterministic function of `(stream, j)`: a run of
//! standard normals from `stream.derive(j)` scaled by the standard deviation
//! of each row block. This lets any subset of column blocks be kept in
//! memory while the rest is regenerated on demand, with identical values.
//! Entries are stored as `f32`; products accumulate in `f64` in a fixed
//! order, so results do not depend on storage mode or thread count.
//! Row blocks with zero variance are neither generated nor stored.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BaseMatrix, SparcParams};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub const DEFAULT_MEMORY_CAP_BYTES: u64 = 3 << 30;

/// Rows handled per parallel task in `matvec`.
const ROW_CHUNK: usize = 2048;
/// Regenerated columns buffered at once in `matvec`.
const COLUMN_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageMode {
    /// Every column block in memory.
    Dense,
    /// Only the flagged column blocks in memory.
    Partial(Vec<bool>),
    /// Nothing in memory; columns regenerated on each product.
    OnTheFly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignOptions {
    pub storage: StorageMode,
    pub memory_cap_bytes: u64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { storage: StorageMode::Dense, memory_cap_bytes: DEFAULT_MEMORY_CAP_BYTES }
    }
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    n: usize,
    n_cols: usize,
    gamma: usize,
    rows_per_block: usize,
    cols_per_block: usize,
    /// Row-major `gamma x gamma` entry standard deviations.
    sd: Vec<f64>,
    stream: RngStream,
    /// Row blocks with nonzero variance, per column block.
    support: Vec<Vec<usize>>,
    /// Column-major storage per column block, when materialized. Each
    /// column holds only the rows of its support.
    blocks: Vec<Option<Vec<f32>>>,
}

impl DesignMatrix {
    /// Dense SPARC design matrix with entry variances `W_rc / L`.
    pub fn sample(params: &SparcParams, w: &BaseMatrix, stream: RngStream) -> Result<Self> {
        Self::sample_with(params, w, stream, &DesignOptions::default())
    }

    pub fn sample_with(
        params: &SparcParams,
        w: &BaseMatrix,
        stream: RngStream,
        options: &DesignOptions,
    ) -> Result<Self> {
        if w.gamma != params.gamma {
            return Err(Error::param(format!(
                "base matrix is {0}x{0} but the code has gamma = {1}",
                w.gamma, params.gamma
            )));
        }
        Self::from_profile(params.n, params.n_cols(), w, 1.0 / params.l as f64, stream, options)
    }

    /// Design matrix with entry variances `scale * W_rc` over an
    /// `n x n_cols` grid; both dimensions must be multiples of `gamma`.
    pub fn from_profile(
        n: usize,
        n_cols: usize,
        w: &BaseMatrix,
        scale: f64,
        stream: RngStream,
        options: &DesignOptions,
    ) -> Result<Self> {
        let gamma = w.gamma;
        if n == 0 || n_cols == 0 || !n.is_multiple_of(gamma) || !n_cols.is_multiple_of(gamma) {
            return Err(Error::param(format!(
                "matrix shape {n}x{n_cols} is not a positive multiple of gamma = {gamma}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::param(format!("variance scale must be positive, got {scale}")));
        }
        let keep: Vec<bool> = match &options.storage {
            StorageMode::Dense => vec![true; gamma],
            StorageMode::OnTheFly => vec![false; gamma],
            StorageMode::Partial(mask) if mask.len() == gamma => mask.clone(),
            StorageMode::Partial(mask) => {
                return Err(Error::param(format!("storage mask has {} entries, expected gamma = {gamma}", mask.len())))
            }
        };
        let cols_per_block = n_cols / gamma;
        let rows_per_block = n / gamma;
        let sd: Vec<f64> = w.entries.iter().map(|&v| (v * scale).sqrt()).collect();
        let support: Vec<Vec<usize>> =
            (0..gamma).map(|c| (0..gamma).filter(|&r| sd[r * gamma + c] > 0.0).collect()).collect();
        let required: u64 = (0..gamma)
            .filter(|&c| keep[c])
            .map(|c| (cols_per_block * support[c].len() * rows_per_block * std::mem::size_of::<f32>()) as u64)
            .sum();
        if required > options.memory_cap_bytes {
            return Err(Error::Resource { required_bytes: required, cap_bytes: options.memory_cap_bytes });
        }
        let mut matrix =
            Self { n, n_cols, gamma, rows_per_block, cols_per_block, sd, stream, support, blocks: vec![None; gamma] };
        for (c, &k) in keep.iter().enumerate() {
            let len = matrix.column_len(c);
            if k && len > 0 {
                let mut data = vec![0.0f32; cols_per_block * len];
                data.par_chunks_mut(len).enumerate().for_each(|(k, col)| {
                    matrix.fill_column(c * cols_per_block + k, col);
                });
                matrix.blocks[c] = Some(data);
            } else if k {
                matrix.blocks[c] = Some(Vec::new());
            }
        }
        Ok(matrix)
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    /// Entry variance in block `(r, c)`.
    pub fn variance(&self, r: usize, c: usize) -> f64 {
        let s = self.sd[r * self.gamma + c];
        s * s
    }

    pub fn is_materialized(&self, block: usize) -> bool {
        self.blocks[block].is_some()
    }

    /// Bytes held by materialized blocks.
    pub fn stored_bytes(&self) -> u64 {
        self.blocks.iter().flatten().map(|b| (b.len() * std::mem::size_of::<f32>()) as u64).sum()
    }

    /// Stored length of a column in block `c`.
    fn column_len(&self, c: usize) -> usize {
        self.support[c].len() * self.rows_per_block
    }

    /// Compact column `j`: the rows of its block's support, in order.
    fn fill_column(&self, j: usize, out: &mut [f32]) {
        let c = j / self.cols_per_block;
        let mut rng = self.stream.derive(j as u64).rng();
        for (&r, rows) in self.support[c].iter().zip(out.chunks_mut(self.rows_per_block)) {
            let sd = self.sd[r * self.gamma + c];
            for x in rows {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = (sd * z) as f32;
            }
        }
    }

    fn stored_column(&self, j: usize) -> Option<&[f32]> {
        let c = j / self.cols_per_block;
        let k = j % self.cols_per_block;
        let len = self.column_len(c);
        self.blocks[c].as_ref().map(|b| &b[k * len..(k + 1) * len])
    }

    /// Expands a compact column of block `c` to full length.
    fn expand(&self, c: usize, compact: &[f32]) -> Vec<f64> {
        let rpb = self.rows_per_block;
        let mut full = vec![0.0; self.n];
        for (&r, rows) in self.support[c].iter().zip(compact.chunks(rpb)) {
            for (o, &a) in full[r * rpb..(r + 1) * rpb].iter_mut().zip(rows) {
                *o = a as f64;
            }
        }
        full
    }

    /// Column `j` in full precision of its stored values.
    pub fn column(&self, j: usize) -> Vec<f64> {
        let c = j / self.cols_per_block;
        match self.stored_column(j) {
            Some(col) => self.expand(c, col),
            None => {
                let mut buf = vec![0.0f32; self.column_len(c)];
                self.fill_column(j, &mut buf);
                self.expand(c, &buf)
            }
        }
    }

    /// `A v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.matvec_blocks(v, None)
    }

    /// `A v` restricted to the column blocks flagged in `mask`.
    pub fn matvec_masked(&self, v: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
        self.check_mask(mask)?;
        self.matvec_blocks(v, Some(mask))
    }

    /// `A^T u`.
    pub fn matvec_t(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.matvec_t_blocks(u, None)
    }

    /// `A^T u` on the column blocks flagged in `mask`, zero elsewhere.
    pub fn matvec_t_masked(&self, u: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
        self.check_mask(mask)?;
        self.matvec_t_blocks(u, Some(mask))
    }

    fn check_mask(&self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.gamma {
            return Err(Error::param(format!("mask has {} entries, expected {}", mask.len(), self.gamma)));
        }
        Ok(())
    }

    fn matvec_blocks(&self, v: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
        if v.len() != self.n_cols {
            return Err(Error::param(format!("vector has length {}, expected {}", v.len(), self.n_cols)));
        }
        let mut y = vec![0.0; self.n];
        let mut buffer = Vec::new();
        for c in 0..self.gamma {
            if mask.is_some_and(|m| !m[c]) {
                continue;
            }
            let first = c * self.cols_per_block;
            let len = self.column_len(c);
            let active: Vec<usize> = (first..first + self.cols_per_block).filter(|&j| v[j] != 0.0).collect();
            if active.is_empty() || len == 0 {
                continue;
            }
            if let Some(block) = &self.blocks[c] {
                let cols: Vec<(&[f32], f64)> =
                    active.iter().map(|&j| (&block[(j - first) * len..(j - first + 1) * len], v[j])).collect();
                self.accumulate(c, &mut y, &cols);
            } else {
                for batch in active.chunks(COLUMN_BATCH) {
                    buffer.resize(batch.len() * len, 0.0f32);
                    buffer.par_chunks_mut(len).zip(batch).for_each(|(col, &j)| self.fill_column(j, col));
                    let cols: Vec<(&[f32], f64)> =
                        batch.iter().enumerate().map(|(k, &j)| (&buffer[k * len..(k + 1) * len], v[j])).collect();
                    self.accumulate(c, &mut y, &cols);
                }
            }
        }
        Ok(y)
    }

    fn matvec_t_blocks(&self, u: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
        if u.len() != self.n {
            return Err(Error::param(format!("vector has length {}, expected {}", u.len(), self.n)));
        }
        let mut out = vec![0.0; self.n_cols];
        for (c, chunk) in out.chunks_mut(self.cols_per_block).enumerate() {
            if mask.is_some_and(|m| !m[c]) {
                continue;
            }
            let first = c * self.cols_per_block;
            let len = self.column_len(c);
            if len == 0 {
                continue;
            }
            let rpb = self.rows_per_block;
            let gathered: Vec<f64> =
                self.support[c].iter().flat_map(|&r| &u[r * rpb..(r + 1) * rpb]).copied().collect();
            match &self.blocks[c] {
                Some(block) => {
                    chunk.par_iter_mut().zip(block.par_chunks(len)).for_each(|(o, col)| *o = dot(col, &gathered))
                }
                None => chunk.par_iter_mut().enumerate().for_each_init(
                    || vec![0.0f32; len],
                    |buf, (k, o)| {
                        self.fill_column(first + k, buf);
                        *o = dot(buf, &gathered);
                    },
                ),
            }
        }
        Ok(out)
    }
}

impl DesignMatrix {
    /// `y += sum_k v_k a_k` over compact columns of block `c`, with each
    /// row summed in column order.
    fn accumulate(&self, c: usize, y: &mut [f64], cols: &[(&[f32], f64)]) {
        let rpb = self.rows_per_block;
        let support = &self.support[c];
        let mut slot = vec![None; self.gamma];
        for (s, &r) in support.iter().enumerate() {
            slot[r] = Some(s);
        }
        y.par_chunks_mut(rpb).enumerate().for_each(|(r, block_rows)| {
            let Some(s) = slot[r] else { return };
            for (k, rows) in block_rows.chunks_mut(ROW_CHUNK).enumerate() {
                let start = s * rpb + k * ROW_CHUNK;
                let len = rows.len();
                for &(col, vj) in cols {
                    for (yi, &a) in rows.iter_mut().zip(&col[start..start + len]) {
                        *yi += vj * a as f64;
                    }
                }
            }
        });
    }
}

/// Dot product with eight fixed partial sums.
fn dot(a: &[f32], u: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut chunks_a = a.chunks_exact(8);
    let mut chunks_u = u.chunks_exact(8);
    for (ca, cu) in (&mut chunks_a).zip(&mut chunks_u) {
        for k in 0..8 {
            acc[k] += ca[k] as f64 * cu[k];
        }
    }
    let mut tail = 0.0;
    for (&x, &y) in chunks_a.remainder().iter().zip(chunks_u.remainder()) {
        tail += x as f64 * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (SparcParams, BaseMatrix) {
        let p = SparcParams::with_n(32, 4, 8, 0, 0.2, 64).unwrap();
        let w = p.base_matrix().unwrap();
        (p, w)
    }

    #[test]
    fn storage_modes_agree_bitwise() {
        let (p, w) = small();
        let s = RngStream::new(3, 0);
        let dense = DesignMatrix::sample(&p, &w, s).unwrap();
        let lazy = DesignMatrix::sample_with(
            &p,
            &w,
            s,
            &DesignOptions { storage: StorageMode::OnTheFly, ..Default::default() },
        )
        .unwrap();
        let v: Vec<f64> = (0..p.n_cols()).map(|j| ((j * 7) % 5) as f64 - 2.0).collect();
        let u: Vec<f64> = (0..p.n).map(|i| (i as f64).sin()).collect();
        assert_eq!(dense.matvec(&v).unwrap(), lazy.matvec(&v).unwrap());
        assert_eq!(dense.matvec_t(&u).unwrap(), lazy.matvec_t(&u).unwrap());
        assert_eq!(lazy.stored_bytes(), 0);
    }

    #[test]
    fn memory_cap_is_enforced() {
        let (p, w) = small();
        let opts = DesignOptions { storage: StorageMode::Dense, memory_cap_bytes: 100 };
        match DesignMatrix::sample_with(&p, &w, RngStream::new(1, 1), &opts) {
            Err(Error::Resource { required_bytes, cap_bytes }) => {
                assert_eq!(required_bytes, (p.n * p.n_cols() * 4) as u64);
                assert_eq!(cap_bytes, 100);
            }
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn shape_errors() {
        let (p, w) = small();
        let a = DesignMatrix::sample(&p, &w, RngStream::new(1, 1)).unwrap();
        assert!(a.matvec(&[1.0; 3]).unwrap_err().is_parameter());
        assert!(a.matvec_t(&[1.0; 3]).unwrap_err().is_parameter());
        assert!(a.matvec_masked(&vec![0.0; p.n_cols()], &[true]).is_err());
    }

    #[test]
    fn zero_blocks_are_skipped() {
        let p = SparcParams::with_n(64, 4, 16, 1, 0.0, 64).unwrap();
        let w = p.base_matrix().unwrap();
        let a = DesignMatrix::sample(&p, &w, RngStream::new(5, 0)).unwrap();
        let band: usize = (0..16).map(|c| (0..16).filter(|&r| w.get(r, c) > 0.0).count()).sum();
        assert_eq!(a.stored_bytes(), (band * (p.n / 16) * (p.n_cols() / 16) * 4) as u64);
        // Products agree with the expanded columns.
        let v: Vec<f64> = (0..p.n_cols()).map(|j| (j as f64 * 0.37).cos()).collect();
        let u: Vec<f64> = (0..p.n).map(|i| (i as f64 * 0.11).sin()).collect();
        let mut naive = vec![0.0; p.n];
        for (j, &vj) in v.iter().enumerate() {
            let col = a.column(j);
            assert!(col.iter().enumerate().all(|(i, &x)| x == 0.0 || w.get(i / 4, j / 16) > 0.0));
            for (y, x) in naive.iter_mut().zip(&col) {
                *y += vj * x;
            }
            let t = a.matvec_t(&u).unwrap()[j];
            let direct: f64 = col.iter().zip(&u).map(|(x, y)| x * y).sum();
            assert!((t - direct).abs() < 1e-12);
        }
        for (x, y) in a.matvec(&v).unwrap().iter().zip(&naive) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f32> = (0..13).map(|i| i as f32).collect();
        let u = vec![1.0; 13];
        assert_eq!(dot(&a, &u), 78.0);
    }
}

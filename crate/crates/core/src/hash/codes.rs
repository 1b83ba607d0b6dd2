use nalgebra::DMatrix;

use super::HashingModel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::pdv::PdvMatrix;

/// Longest code that fits the packed `u128` representation.
pub const MAX_PACKED_BITS: usize = 128;

/// `M x N` matrix of bits, one column per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodes {
    bits: usize,
    count: usize,
    data: Vec<u8>,
}

impl BinaryCodes {
    pub fn from_fn(bits: usize, count: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(bits * count);
        for n in 0..count {
            for m in 0..bits {
                data.push(f(m, n) as u8);
            }
        }
        Self { bits, count, data }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn get(&self, m: usize, n: usize) -> u8 {
        self.data[n * self.bits + m]
    }

    pub fn column(&self, n: usize) -> &[u8] {
        &self.data[n * self.bits..(n + 1) * self.bits]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(
            self.bits,
            self.count,
            self.data.iter().map(|&b| f64::from(b)),
        )
    }

    /// Per-bit mean over all columns.
    pub fn bit_means(&self) -> Vec<f64> {
        let mut sums = vec![0usize; self.bits];
        for col in self.data.chunks(self.bits) {
            for (s, &b) in sums.iter_mut().zip(col) {
                *s += b as usize;
            }
        }
        sums.into_iter()
            .map(|s| s as f64 / self.count as f64)
            .collect()
    }

    /// Column `n` packed with bit `m` at position `m`.
    pub fn packed(&self, n: usize) -> u128 {
        pack(self.column(n))
    }
}

pub(crate) fn pack(bits: &[u8]) -> u128 {
    bits.iter()
        .enumerate()
        .fold(0u128, |acc, (m, &b)| acc | (u128::from(b) << m))
}

/// `b_mn = 1` iff `w_mᵀ x_n >= 0`.
pub fn encode_with(w: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<BinaryCodes> {
    if w.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "projection has {} rows, PDVs have {}",
            w.nrows(),
            x.nrows()
        )));
    }
    let proj = linalg::tr_mul(w, x);
    Ok(BinaryCodes {
        bits: w.ncols(),
        count: x.ncols(),
        data: proj.iter().map(|&v| (v >= 0.0) as u8).collect(),
    })
}

pub fn encode(model: &HashingModel, x: &PdvMatrix) -> Result<BinaryCodes> {
    encode_with(model.projection(), x.matrix())
}

/// Codes packed into `u128`, one per sample, bit `m` at position `m`.
pub fn encode_packed(w: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<Vec<u128>> {
    if w.ncols() > MAX_PACKED_BITS {
        return Err(Error::InvalidArgument(format!(
            "{} bits exceed the packed limit of {MAX_PACKED_BITS}",
            w.ncols()
        )));
    }
    if w.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "projection has {} rows, PDVs have {}",
            w.nrows(),
            x.nrows()
        )));
    }
    let proj = linalg::tr_mul(w, x);
    let m = w.ncols();
    Ok(proj
        .as_slice()
        .chunks(m.max(1))
        .map(|col| {
            col.iter()
                .enumerate()
                .fold(0u128, |acc, (i, &v)| acc | (u128::from(v >= 0.0) << i))
        })
        .collect())
}

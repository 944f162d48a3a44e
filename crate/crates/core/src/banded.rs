//! Symmetric banded storage and in-place Cholesky factorization.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Lower band of a symmetric positive definite matrix, factorized in place
/// as `L Lᵀ` by [`BandedCholesky::factorize`].
#[derive(Debug, Clone, PartialEq)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// Row `i` holds columns `i - bw ..= i` at offsets `0 ..= bw`.
    data: Vec<f64>,
    factorized: bool,
}

impl BandedCholesky {
    /// Zero matrix of order `n` with half-bandwidth `bw`.
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        BandedCholesky { n, bw, data: vec![0.0; n * (bw + 1)], factorized: false }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry `(i, j)` of the lower triangle (`j ≤ i`).
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && i - j <= self.bw, "entry outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Entry `(i, j)` of the (unfactorized) symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Symmetric product `A x` (only valid before factorization).
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.idx(i, i)] * x[i];
        }
        y
    }

    pub fn is_factorized(&self) -> bool {
        self.factorized
    }

    pub fn factorize(&mut self) -> Result<()> {
        let bw = self.bw;
        for i in 0..self.n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let ri = self.idx(i, lo);
                let rj = self.idx(j, lo);
                let len = j - lo;
                let mut sum = self.data[self.idx(i, j)];
                let (a, b) = (&self.data[ri..ri + len], &self.data[rj..rj + len]);
                sum -= a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                let k = self.idx(i, j);
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::Singular { pivot: i });
                    }
                    self.data[k] = sqrt(sum);
                } else {
                    self.data[k] = sum / self.data[self.idx(j, j)];
                }
            }
        }
        self.factorized = true;
        Ok(())
    }

    /// Solves `A x = b` in place using the stored factor.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factorized, "matrix must be factorized before solving");
        let bw = self.bw;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for j in lo..i {
                s -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
        for i in (0..self.n).rev() {
            let x = b[i] / self.data[self.idx(i, i)];
            b[i] = x;
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                b[j] -= self.data[self.idx(i, j)] * x;
            }
        }
    }
}

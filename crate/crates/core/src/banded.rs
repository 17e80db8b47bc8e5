//! Banded Cholesky factorization for the SPD Newton systems.
//!
//! Grid numbering is row-major, so the stiffness pattern of a structured grid
//! has half-bandwidth `nx + 1` and no fill outside the band.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub(crate) struct BandedSpd {
    n: usize,
    bw: usize,
    // row i holds columns i-bw ..= i
    data: Vec<f64>,
}

impl BandedSpd {
    pub(crate) fn new(n: usize, bw: usize) -> Self {
        BandedSpd {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry `(i, j)`; only the lower triangle is stored, so the
    /// caller adds each symmetric pair once.
    #[inline]
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    #[cfg(test)]
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            return 0.0;
        }
        self.data[self.idx(r, c)]
    }

    /// In-place `L Lᵀ` factorization.
    pub(crate) fn factor(&mut self) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = self.data[self.idx(i, j)];
                let ri = self.idx(i, k0);
                let rj = self.idx(j, k0);
                for t in 0..(j - k0) {
                    s -= self.data[ri + t] * self.data[rj + t];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::LinearSolveFailure { row: i, pivot: s });
                    }
                    let d = self.idx(i, i);
                    self.data[d] = s.sqrt();
                } else {
                    let d = self.data[self.idx(j, j)];
                    let k = self.idx(i, j);
                    self.data[k] = s / d;
                }
            }
        }
        Ok(())
    }

    /// Solves with a factored matrix, overwriting `b`.
    pub(crate) fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let mut s = b[i];
            let r = self.idx(i, j0);
            for (t, bj) in b[j0..i].iter().enumerate() {
                s -= self.data[r + t] * bj;
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= self.data[self.idx(k, i)] * b[k];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
    }
}

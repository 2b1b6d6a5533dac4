//! Cholesky factorisation for symmetric positive definite matrices with a
//! narrow band, stored compactly.
//!
//! The enzyme microscale assembles `I + dt*D*(-L)` on a small lattice; its
//! half-bandwidth equals the lattice width, so the compact factorisation is
//! linear in the node count per solve.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix: entry `(i, j)` with `d = i - j <= bw`
/// lives at `band[i*(bw+1) + d]`; slots with `d > i` are ignored.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the symmetric matrix whose lower band is `band`. Fails on
    /// non-positive pivots, which means the input was not positive
    /// definite.
    pub fn factor(n: usize, bw: usize, band: &[f64]) -> Result<Self> {
        let stride = bw + 1;
        if band.len() != n * stride {
            return Err(Error::Solver(format!(
                "band storage holds {} entries, expected {} for n={n}, bandwidth={bw}",
                band.len(),
                n * stride
            )));
        }
        let mut l = band.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut sum = l[i * stride + (i - j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    sum -= l[i * stride + (i - k)] * l[j * stride + (j - k)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::Solver(format!(
                            "non-positive pivot {sum} at row {i}; matrix is not positive definite"
                        )));
                    }
                    l[i * stride] = sum.sqrt();
                } else {
                    l[i * stride + (i - j)] = sum / l[j * stride];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place via forward and back substitution.
    pub fn solve_into(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "right-hand side length mismatch");
        let stride = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut sum = b[i];
            for j in lo..i {
                sum -= self.l[i * stride + (i - j)] * b[j];
            }
            b[i] = sum / self.l[i * stride];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut sum = b[i];
            for j in i + 1..=hi {
                sum -= self.l[j * stride + (j - i)] * b[j];
            }
            b[i] = sum / self.l[i * stride];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_into(&mut x);
        x
    }
}

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cholesky factor `L` of a symmetric positive definite band matrix, stored by
/// rows of the lower band. One factorization serves any number of right-hand
/// sides.
#[derive(Clone, Debug)]
pub struct BandedCholesky<T> {
    n: usize,
    bw: usize,
    // row i holds L[i][i-bw ..= i] at offsets 0..=bw
    band: Vec<T>,
}

impl<T: Real> BandedCholesky<T> {
    /// Factors the matrix whose lower-band entries are produced by
    /// `entry(i, j)` for `i - bw <= j <= i`.
    pub fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> T) -> Result<Self> {
        let w = bw + 1;
        let mut band = vec![T::zero(); n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = entry(i, j);
                for k in k0..j {
                    sum -= band[i * w + k + bw - i] * band[j * w + k + bw - j];
                }
                if i == j {
                    if !(sum > T::zero()) {
                        return Err(Error::SingularSystem {
                            row: i,
                            pivot: sum.to_f64_lossy(),
                        });
                    }
                    band[i * w + bw] = sum.sqrt();
                } else {
                    band[i * w + j + bw - i] = sum / band[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, x: &mut [T]) {
        assert_eq!(x.len(), self.n, "right-hand side length");
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let mut s = x[i];
            for j in j0..i {
                s -= self.band[i * w + j + bw - i] * x[j];
            }
            x[i] = s / self.band[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= self.band[k * w + i + bw - k] * x[k];
            }
            x[i] = s / self.band[i * w + bw];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

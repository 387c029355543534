use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

use super::{Grid, PotentialCoeffs, SchrodingerOperator, SourceSpec};

/// Rectangular parameter window for a two-parameter potential family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandscapeWindow<T> {
    pub p1: (T, T),
    pub p2: (T, T),
    pub resolution: usize,
}

impl<T: Real> Default for LandscapeWindow<T> {
    /// `[-4, 6] x [5, 15]` at 41 points per axis: the truth `(1, 10)` lies on
    /// a grid node.
    fn default() -> Self {
        Self {
            p1: (T::lit(-4.0), T::lit(6.0)),
            p2: (T::lit(5.0), T::lit(15.0)),
            resolution: 41,
        }
    }
}

impl<T: Real> LandscapeWindow<T> {
    pub fn axis(&self, which: usize) -> Vec<T> {
        let (lo, hi) = if which == 0 { self.p1 } else { self.p2 };
        let n = self.resolution;
        (0..n)
            .map(|i| lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1))
            .collect()
    }
}

/// Loss values `values[(i, j)]` at `(p1[i], p2[j])`.
#[derive(Clone, Debug)]
pub struct Landscape<T> {
    pub p1: Vec<T>,
    pub p2: Vec<T>,
    pub values: Matrix<T>,
}

impl<T: Real> Landscape<T> {
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for i in 0..self.p1.len() {
            for j in 0..self.p2.len() {
                if self.values[(i, j)] < self.values[best] {
                    best = (i, j);
                }
            }
        }
        best
    }

    /// Writes `x1,x2,value` rows with `x1 = p1`, `x2 = p2`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x1,x2,value")?;
        for (i, a) in self.p1.iter().enumerate() {
            for (j, b) in self.p2.iter().enumerate() {
                writeln!(w, "{a},{b},{}", self.values[(i, j)])?;
            }
        }
        Ok(())
    }
}

/// Weighted squared misfit between noise-free data generated at `truth` and
/// model predictions over a parameter window:
/// `C(p) = Σ_i w_i (u_p(x_i) - u_truth(x_i))²`.
///
/// `sensors` are inner-node indices; `weights` default to `1/n` when `None`.
pub fn loss_landscape<T: Real>(
    grid: Grid<T>,
    truth: &PotentialCoeffs<T>,
    source: &SourceSpec<T>,
    sensors: &[usize],
    weights: Option<&[T]>,
    window: &LandscapeWindow<T>,
) -> Result<Landscape<T>> {
    if sensors.is_empty() {
        return Err(Error::EmptyDesign);
    }
    if truth.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: truth.len(),
        });
    }
    if window.resolution < 2 {
        return Err(invalid("resolution", "need at least 2 points per axis"));
    }
    if let Some(&s) = sensors.iter().find(|&&s| s >= grid.num_inner()) {
        return Err(Error::DimensionMismatch {
            expected: grid.num_inner(),
            got: s,
        });
    }
    let w: Vec<T> = match weights {
        Some(w) if w.len() != sensors.len() => {
            return Err(Error::DimensionMismatch {
                expected: sensors.len(),
                got: w.len(),
            })
        }
        Some(w) => w.to_vec(),
        None => vec![T::one() / T::from_usize_lossy(sensors.len()); sensors.len()],
    };
    let observe = |coeffs: PotentialCoeffs<T>| -> Result<Vec<T>> {
        let u = SchrodingerOperator::new(grid, coeffs)?.forward_inner(source);
        Ok(sensors.iter().map(|&s| u[s]).collect())
    };
    let data = observe(truth.clone())?;
    let p1 = window.axis(0);
    let p2 = window.axis(1);
    let cells: Vec<(usize, usize)> = (0..p1.len())
        .flat_map(|i| (0..p2.len()).map(move |j| (i, j)))
        .collect();
    let losses: Vec<T> = cells
        .par_iter()
        .map(|&(i, j)| {
            let pred = observe(truth.with_values(vec![p1[i], p2[j]])?)?;
            Ok(pred
                .iter()
                .zip(&data)
                .zip(&w)
                .map(|((a, b), &wi)| wi * (*a - *b) * (*a - *b))
                .sum())
        })
        .collect::<Result<_>>()?;
    Ok(Landscape {
        values: Matrix::from_row_major(p1.len(), p2.len(), losses),
        p1,
        p2,
    })
}

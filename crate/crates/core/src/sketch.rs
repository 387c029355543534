//! Randomized sketching of quasimatrix products `AᵀA` by importance-sampled
//! rows.
//!
//! A quasimatrix has one row per design point `u` in a (possibly continuous)
//! design space equipped with a base probability measure `μ`. Its Gram
//! product is `AᵀA = ∫ A_uᵀ A_u dμ(u)`. Drawing `c` points i.i.d. from a
//! density `π` (w.r.t. `μ`) and scaling each row by `1/√(c π(u))` gives a
//! `c × K` matrix `C` with `E[CᵀC] = AᵀA`. The density `π ∝ ‖A_u‖²`
//! minimizes the Frobenius error bound.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;

use crate::design::Fim;
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::Real;

/// Axis-aligned closed box of admissible design points.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignBox<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> DesignBox<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(invalid("bounds", "lower bound exceeds upper bound"));
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, lo: T, hi: T) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    /// Cartesian product of two boxes.
    pub fn product(&self, other: &Self) -> Self {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn center(&self) -> Vec<T> {
        let half = T::lit(0.5);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| (l + u) * half)
            .collect()
    }

    pub fn contains(&self, u: &[T]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&l, &h))| x >= l && x <= h)
    }

    /// Projects `u` onto the box. NaN coordinates map to the lower bound.
    pub fn clamp(&self, u: &mut [T]) {
        for (x, (&l, &h)) in u.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = if x.is_nan() { l } else { x.max(l).min(h) };
        }
    }
}

/// Provider of quasimatrix rows `u ↦ A_{u,:}`.
///
/// Implementations must be pure: the same `u` always yields the same row.
pub trait RowSource<T: Real>: Sync {
    /// Dimension `L` of a design point.
    fn design_dim(&self) -> usize;

    /// Row length `K`.
    fn num_params(&self) -> usize;

    fn bounds(&self) -> &DesignBox<T>;

    fn row(&self, u: &[T]) -> Result<Vec<T>>;

    /// `Φ(u) = -log ‖A_{u,:}‖²`; `+∞` where the row vanishes.
    fn log_potential(&self, u: &[T]) -> Result<T> {
        let r = self.row(u)?;
        Ok(-squared_norm(&r).ln())
    }
}

pub(crate) fn squared_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum()
}

/// A quasimatrix over a finite design set: explicit rows, their design
/// points and base weights. Queries at arbitrary `u` resolve to the nearest
/// stored point (Euclidean; ties go to the smaller index).
#[derive(Clone, Debug)]
pub struct Quasimatrix<T> {
    points: Vec<Vec<T>>,
    rows: Matrix<T>,
    base_weights: Vec<T>,
    bounds: DesignBox<T>,
}

impl<T: Real> Quasimatrix<T> {
    pub fn new(
        points: Vec<Vec<T>>,
        rows: Matrix<T>,
        base_weights: Vec<T>,
        bounds: DesignBox<T>,
    ) -> Result<Self> {
        if points.len() != rows.nrows() {
            return Err(Error::DimensionMismatch {
                expected: rows.nrows(),
                got: points.len(),
            });
        }
        if base_weights.len() != rows.nrows() {
            return Err(Error::DimensionMismatch {
                expected: rows.nrows(),
                got: base_weights.len(),
            });
        }
        if let Some(p) = points.iter().find(|p| p.len() != bounds.dim()) {
            return Err(Error::DimensionMismatch {
                expected: bounds.dim(),
                got: p.len(),
            });
        }
        if base_weights.iter().any(|&w| !(w >= T::zero()) || !w.is_finite()) {
            return Err(invalid("base_weights", "must be finite and nonnegative"));
        }
        Ok(Self {
            points,
            rows,
            base_weights,
            bounds,
        })
    }

    /// Rows with the uniform base measure `1/N`.
    pub fn uniform(points: Vec<Vec<T>>, rows: Matrix<T>, bounds: DesignBox<T>) -> Result<Self> {
        let n = rows.nrows();
        let w = T::one() / T::from_usize_lossy(n.max(1));
        Self::new(points, rows, vec![w; n], bounds)
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn rows(&self) -> &Matrix<T> {
        &self.rows
    }

    pub fn base_weights(&self) -> &[T] {
        &self.base_weights
    }

    /// Index of the stored point nearest to `u`.
    pub fn locate(&self, u: &[T]) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (i, p) in self.points.iter().enumerate() {
            let d: T = p.iter().zip(u).map(|(&a, &b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// `‖A‖_F² = Σ_i w_i ‖A_i‖²`.
    pub fn frobenius_sq(&self) -> T {
        self.rows
            .rows()
            .zip(&self.base_weights)
            .map(|(r, &w)| w * squared_norm(r))
            .sum()
    }

    /// `AᵀA = Σ_i w_i A_iᵀ A_i`, symmetrized.
    pub fn gram(&self) -> Matrix<T> {
        let k = self.rows.ncols();
        let mut g = Matrix::zeros(k, k);
        for (r, &w) in self.rows.rows().zip(&self.base_weights) {
            g.add_outer(r, w);
        }
        g.symmetrize();
        g
    }

    pub fn optimal_density(&self) -> Result<DensityField<T>> {
        optimal_density(self.points.clone(), &self.rows, &self.base_weights)
    }
}

impl<T: Real> RowSource<T> for Quasimatrix<T> {
    fn design_dim(&self) -> usize {
        self.bounds.dim()
    }

    fn num_params(&self) -> usize {
        self.rows.ncols()
    }

    fn bounds(&self) -> &DesignBox<T> {
        &self.bounds
    }

    fn row(&self, u: &[T]) -> Result<Vec<T>> {
        if u.len() != self.design_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.design_dim(),
                got: u.len(),
            });
        }
        if self.is_empty() {
            return Err(Error::EmptyDesign);
        }
        Ok(self.rows.row(self.locate(u)).to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalization<T> {
    /// Values are probability masses summing to one; `Z` is the constant
    /// they were divided by.
    Normalized(T),
    /// Only ratios of values are meaningful.
    Unnormalized,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Support<T> {
    /// Finitely many candidate points.
    Nodes,
    /// Values are samples of a density over a continuous box.
    Continuous(DesignBox<T>),
}

/// Sampling distribution over candidate design points.
///
/// `values[i]` is the probability mass of `points[i]`; the density with
/// respect to the base measure is `values[i] / base_weights[i]`.
#[derive(Clone, Debug)]
pub struct DensityField<T> {
    points: Vec<Vec<T>>,
    values: Vec<T>,
    base_weights: Vec<T>,
    normalization: Normalization<T>,
    support: Support<T>,
}

impl<T: Real> DensityField<T> {
    /// Normalizes nonnegative `masses` over discrete `points`.
    pub fn from_masses(points: Vec<Vec<T>>, masses: Vec<T>, base_weights: Vec<T>) -> Result<Self> {
        if masses.len() != points.len() || base_weights.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: masses.len().min(base_weights.len()),
            });
        }
        if masses.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
            return Err(invalid("density", "values must be finite and nonnegative"));
        }
        let z: T = masses.iter().copied().sum();
        if z <= T::zero() {
            return Err(Error::ZeroMass);
        }
        let values = masses.into_iter().map(|v| v / z).collect();
        Ok(Self {
            points,
            values,
            base_weights,
            normalization: Normalization::Normalized(z),
            support: Support::Nodes,
        })
    }

    /// Uniform distribution proportional to the base weights.
    pub fn proportional_to_base(points: Vec<Vec<T>>, base_weights: Vec<T>) -> Result<Self> {
        Self::from_masses(points, base_weights.clone(), base_weights)
    }

    /// Samples `‖A_u‖²` of a continuous design space at `points`, without
    /// normalization.
    pub fn unnormalized<S: RowSource<T>>(source: &S, points: Vec<Vec<T>>) -> Result<Self> {
        let values = points
            .iter()
            .map(|u| source.row(u).map(|r| squared_norm(&r)))
            .collect::<Result<Vec<_>>>()?;
        let n = points.len();
        Ok(Self {
            points,
            values,
            base_weights: vec![T::one(); n],
            normalization: Normalization::Unnormalized,
            support: Support::Continuous(source.bounds().clone()),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn base_weights(&self) -> &[T] {
        &self.base_weights
    }

    pub fn normalization(&self) -> Normalization<T> {
        self.normalization
    }

    pub fn support(&self) -> &Support<T> {
        &self.support
    }

    pub fn is_normalized(&self) -> bool {
        matches!(self.normalization, Normalization::Normalized(_))
    }

    /// Density `π(u_i)` w.r.t. the base measure.
    pub fn density_at(&self, i: usize) -> T {
        let w = self.base_weights[i];
        if w > T::zero() {
            self.values[i] / w
        } else {
            T::zero()
        }
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    /// Indices with positive probability.
    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.values[i] > T::zero()).collect()
    }

    /// CSV with header `u_1,…,u_L,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.points.first().map_or(0, Vec::len);
        let header: Vec<String> = (1..=dim).map(|i| format!("u_{i}")).collect();
        writeln!(w, "{},value", header.join(","))?;
        for (p, v) in self.points.iter().zip(&self.values) {
            for x in p {
                write!(w, "{x},")?;
            }
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

/// Optimal importance density `π̃ ∝ ‖A_u‖²` over a finite candidate set.
///
/// Masses are `w_i ‖A_i‖² / Z` with `Z = Σ w_i ‖A_i‖²`. Zero-norm candidates
/// receive mass zero and are never drawn.
pub fn optimal_density<T: Real>(
    points: Vec<Vec<T>>,
    rows: &Matrix<T>,
    base_weights: &[T],
) -> Result<DensityField<T>> {
    if base_weights.len() != rows.nrows() {
        return Err(Error::DimensionMismatch {
            expected: rows.nrows(),
            got: base_weights.len(),
        });
    }
    let total: T = base_weights.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(1e-8).max(T::epsilon() * T::lit(64.0)) {
        return Err(invalid("base_weights", format!("must sum to 1, got {total}")));
    }
    let masses: Vec<T> = rows
        .rows()
        .zip(base_weights)
        .map(|(r, &w)| w * squared_norm(r))
        .collect();
    if masses.iter().all(|&m| m == T::zero()) {
        return Err(Error::DegenerateQuasimatrix);
    }
    DensityField::from_masses(points, masses, base_weights.to_vec())
}

/// Result of the row-sampling sketch: the drawn points, their weights
/// `1/√(c π(u_j))` and the weighted rows `C_j = A_{u_j} / √(c π(u_j))`.
#[derive(Clone, Debug)]
pub struct SampledSketch<T> {
    pub points: Vec<Vec<T>>,
    /// Candidate index of each draw in the density's point list.
    pub indices: Vec<usize>,
    pub weights: Vec<T>,
    pub rows: Matrix<T>,
}

impl<T: Real> SampledSketch<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of times each candidate was drawn, as `(index, multiplicity)`
    /// sorted by index.
    pub fn multiplicities(&self) -> Vec<(usize, usize)> {
        let mut idx = self.indices.clone();
        idx.sort_unstable();
        let mut out: Vec<(usize, usize)> = Vec::new();
        for i in idx {
            match out.last_mut() {
                Some((j, m)) if *j == i => *m += 1,
                _ => out.push((i, 1)),
            }
        }
        out
    }
}

/// Draws `c` candidate indices i.i.d. (with replacement) from a normalized
/// discrete density. Draws come sequentially from one generator per call.
pub fn draw_indices<T: Real>(density: &DensityField<T>, c: usize, seed: u64) -> Result<Vec<usize>> {
    if !density.is_normalized() {
        return Err(Error::Unnormalized);
    }
    if c == 0 {
        return Err(invalid("c", "sample size must be at least 1"));
    }
    let weights: Vec<f64> = density.values().iter().map(|v| v.to_f64_lossy()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|_| Error::ZeroMass)?;
    let mut rng = rng::generator(seed, 0);
    Ok((0..c).map(|_| dist.sample(&mut rng)).collect())
}

/// Row-sampling sketch: `c` i.i.d. draws from `density`, each source row
/// scaled by `1/√(c π(u_j))`.
pub fn sketch_rows<T: Real, S: RowSource<T>>(
    source: &S,
    density: &DensityField<T>,
    c: usize,
    seed: u64,
) -> Result<SampledSketch<T>> {
    let indices = draw_indices(density, c, seed)?;
    let cf = T::from_usize_lossy(c);
    let evaluated: Vec<(Vec<T>, T)> = indices
        .par_iter()
        .map(|&i| {
            let pi = density.density_at(i);
            let weight = T::one() / (cf * pi).sqrt();
            let mut row = source.row(&density.points()[i])?;
            row.iter_mut().for_each(|x| *x *= weight);
            Ok((row, weight))
        })
        .collect::<Result<_>>()?;
    let k = source.num_params();
    let mut rows = Matrix::zeros(c, k);
    let mut weights = Vec::with_capacity(c);
    for (j, (row, w)) in evaluated.into_iter().enumerate() {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: row.len(),
            });
        }
        rows.row_mut(j).copy_from_slice(&row);
        weights.push(w);
    }
    let points = indices.iter().map(|&i| density.points()[i].clone()).collect();
    Ok(SampledSketch {
        points,
        indices,
        weights,
        rows,
    })
}

/// `CᵀC` of a sketch, symmetrized.
pub fn sketch_product<T: Real>(sketch: &SampledSketch<T>) -> Fim<T> {
    let k = sketch.rows.ncols();
    let mut m = Matrix::zeros(k, k);
    for r in sketch.rows.rows() {
        m.add_outer(r, T::one());
    }
    Fim::from_matrix(m)
}

fn check_bound_params<T: Real>(beta: T, delta: T) -> Result<()> {
    if !(beta > T::zero() && beta <= T::one()) {
        return Err(invalid("beta", "must lie in (0, 1]"));
    }
    if !(delta > T::zero() && delta < T::one()) {
        return Err(invalid("delta", "must lie in (0, 1)"));
    }
    Ok(())
}

/// High-probability Frobenius error bound for a `c`-row sketch:
/// `(1 + √(8 β⁻¹ ln δ⁻¹)) / √(β c) · ‖A‖_F²`.
pub fn frobenius_error_bound<T: Real>(frob_sq: T, beta: T, delta: T, c: usize) -> Result<T> {
    check_bound_params(beta, delta)?;
    let lead = T::one() + (T::lit(8.0) / beta * (T::one() / delta).ln()).sqrt();
    Ok(lead / (beta * T::from_usize_lossy(c)).sqrt() * frob_sq)
}

/// Smallest `c` for which the sketched Gram matrix is within `eps` in
/// Frobenius norm with probability `1 - delta`:
/// `⌈‖A‖_F⁴ (1 + √(8 β⁻¹ ln δ⁻¹))² / (β ε²)⌉`.
///
/// Choosing `eps < λ_min(AᵀA)` keeps the sketch positive definite; that
/// condition is left to the caller.
pub fn sample_size_bound<T: Real>(frob_sq: T, beta: T, eps: T, delta: T) -> Result<u64> {
    check_bound_params(beta, delta)?;
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(invalid("eps", "must be positive and finite"));
    }
    if !(frob_sq > T::zero()) || !frob_sq.is_finite() {
        return Err(invalid("frob_sq", "must be positive and finite"));
    }
    let (f, b, e, d) = (
        frob_sq.to_f64_lossy(),
        beta.to_f64_lossy(),
        eps.to_f64_lossy(),
        delta.to_f64_lossy(),
    );
    let lead = 1.0 + (8.0 / b * (1.0 / d).ln()).sqrt();
    let c = (f * f * lead * lead / (b * e * e)).ceil();
    if !(c.is_finite() && c < u64::MAX as f64) {
        return Err(invalid("eps", "sample size bound overflows"));
    }
    Ok((c as u64).max(1))
}

/// Fraction of `trials` independent sketches whose Frobenius error exceeds
/// [`frobenius_error_bound`].
pub fn concentration_trial<T: Real>(
    source: &Quasimatrix<T>,
    density: &DensityField<T>,
    beta: T,
    c: usize,
    delta: T,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    let exact = source.gram();
    let bound = frobenius_error_bound(source.frobenius_sq(), beta, delta, c)?;
    let failures = (0..trials)
        .into_par_iter()
        .map(|t| {
            let sk = sketch_rows(source, density, c, rng::derive_seed(seed, t as u64))?;
            let err = exact.sub(&sketch_product(&sk).matrix).frobenius_norm();
            Ok(usize::from(err > bound))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(failures as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line_box(n: usize) -> DesignBox<f64> {
        DesignBox::cube(1, 0.0, (n.max(1) - 1) as f64).unwrap()
    }

    fn source(rows: &[&[f64]]) -> Quasimatrix<f64> {
        let n = rows.len();
        let points = (0..n).map(|i| vec![i as f64]).collect();
        Quasimatrix::uniform(points, Matrix::from_rows(rows), line_box(n)).unwrap()
    }

    #[test]
    fn equal_norms_give_uniform_density() {
        let q = source(&[&[1.0, 0.0], &[0.0, 1.0], &[0.6, 0.8]]);
        let d = q.optimal_density().unwrap();
        for &v in d.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn squared_norms_one_and_three() {
        let q = source(&[&[1.0, 0.0], &[1.0, 2.0f64.sqrt()]]);
        let d = q.optimal_density().unwrap();
        assert!((d.values()[0] - 0.25).abs() < 1e-15);
        assert!((d.values()[1] - 0.75).abs() < 1e-15);
        match d.normalization() {
            Normalization::Normalized(z) => assert!((z - 2.0).abs() < 1e-15),
            Normalization::Unnormalized => panic!("expected normalized"),
        }
    }

    #[test]
    fn all_zero_rows_are_degenerate() {
        let q = source(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(q.optimal_density(), Err(Error::DegenerateQuasimatrix)));
    }

    #[test]
    fn base_weights_must_sum_to_one() {
        let rows = Matrix::from_rows(&[[1.0], [2.0]]);
        let err = optimal_density(vec![vec![0.0], vec![1.0]], &rows, &[0.5, 0.6]).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "base_weights", .. }));
    }

    #[test]
    fn zero_norm_candidates_are_never_drawn() {
        let q = source(&[&[0.0], &[1.0], &[0.0]]);
        let d = q.optimal_density().unwrap();
        assert_eq!(d.support_indices(), vec![1]);
        let idx = draw_indices(&d, 50, 3).unwrap();
        assert!(idx.iter().all(|&i| i == 1));
    }

    #[test]
    fn one_point_support_reproduces_product_exactly() {
        let q = Quasimatrix::new(
            vec![vec![0.0]],
            Matrix::from_rows(&[[3.0, -1.0, 2.0]]),
            vec![1.0],
            line_box(1),
        )
        .unwrap();
        let d = q.optimal_density().unwrap();
        for c in [1, 2, 7] {
            let sk = sketch_rows(&q, &d, c, 11).unwrap();
            let s = 1.0 / (c as f64).sqrt();
            for r in sk.rows.rows() {
                assert_eq!(r, &[3.0 * s, -s, 2.0 * s]);
            }
            let p = sketch_product(&sk).matrix;
            let err = p.sub(&q.gram()).frobenius_norm();
            assert!(err < 1e-12, "c={c} err={err}");
        }
    }

    #[test]
    fn sketch_rows_are_weighted_raw_rows() {
        let q = source(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.0]]);
        let d = q.optimal_density().unwrap();
        let sk = sketch_rows(&q, &d, 9, 5).unwrap();
        for j in 0..sk.len() {
            let raw = q.rows().row(sk.indices[j]);
            let expect = 1.0 / (9.0 * d.density_at(sk.indices[j])).sqrt();
            assert_eq!(sk.weights[j], expect);
            for (a, b) in sk.rows.row(j).iter().zip(raw) {
                assert_eq!(*a, b * expect);
            }
        }
    }

    #[test]
    fn sketch_mean_matches_exact_product() {
        // Oracle: the exact product (1/3)[[2,1],[1,2]] computed directly.
        let q = source(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let exact = q.gram();
        let expect = [[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((exact[(i, j)] - expect[i][j]).abs() < 1e-15);
            }
        }
        let uniform = DensityField::proportional_to_base(q.points().to_vec(), q.base_weights().to_vec()).unwrap();
        let seeds = 200;
        let samples: Vec<Matrix<f64>> = (0..seeds)
            .map(|s| sketch_product(&sketch_rows(&q, &uniform, 2000, s).unwrap()).matrix)
            .collect();
        for i in 0..2 {
            for j in 0..2 {
                let vals: Vec<f64> = samples.iter().map(|m| m[(i, j)]).collect();
                let mean = vals.iter().sum::<f64>() / seeds as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (seeds as f64 - 1.0);
                let se = (var / seeds as f64).sqrt();
                assert!((mean - expect[i][j]).abs() <= 3.0 * se, "entry ({i},{j}): {mean} vs {}", expect[i][j]);
            }
        }
    }

    #[test]
    fn single_row_product_is_rank_one() {
        let q = Quasimatrix::new(vec![vec![0.0]], Matrix::from_rows(&[[1.0, 2.0]]), vec![1.0], line_box(1)).unwrap();
        let d = q.optimal_density().unwrap();
        let f = sketch_product(&sketch_rows(&q, &d, 1, 0).unwrap());
        assert_eq!(f.matrix, Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]));
        assert!(f.lambda_min.abs() < 1e-12);
    }

    #[test]
    fn orthonormal_rows_give_identity() {
        let s = 0.5f64.sqrt();
        let sk = SampledSketch {
            points: vec![vec![0.0]; 2],
            indices: vec![0, 1],
            weights: vec![1.0; 2],
            rows: Matrix::from_rows(&[[s, s], [s, -s]]),
        };
        let f = sketch_product(&sk);
        assert!(f.matrix.sub(&Matrix::identity(2)).frobenius_norm() < 1e-15);
    }

    #[test]
    fn product_matches_triple_loop() {
        let data = [
            [0.3, -1.2, 2.0],
            [1.5, 0.7, -0.4],
            [-0.9, 0.1, 0.8],
            [2.2, -0.5, 0.05],
            [0.0, 1.1, -1.7],
        ];
        let sk = SampledSketch {
            points: vec![vec![0.0]; 5],
            indices: (0..5).collect(),
            weights: vec![1.0; 5],
            rows: Matrix::from_rows(&data),
        };
        let f = sketch_product(&sk);
        for a in 0..3 {
            for b in 0..3 {
                let mut s = 0.0f64;
                for row in &data {
                    s += row[a] * row[b];
                }
                assert!((f.matrix[(a, b)] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sample_size_bound_closed_form() {
        let e = std::f64::consts::E;
        assert_eq!(sample_size_bound(1.0, 1.0, 1.0, 1.0 / e).unwrap(), 15);
    }

    #[test]
    fn halving_eps_quadruples_bound() {
        let a = sample_size_bound(3.0, 1.0, 0.1, 0.05).unwrap() as f64;
        let b = sample_size_bound(3.0, 1.0, 0.05, 0.05).unwrap() as f64;
        assert!((b / a - 4.0).abs() < 1e-3);
    }

    #[test]
    fn beta_quarter_growth_factor() {
        let delta: f64 = 0.05;
        let l = (1.0 / delta).ln();
        let expect = 4.0 * (1.0 + (32.0 * l).sqrt()).powi(2) / (1.0 + (8.0 * l).sqrt()).powi(2);
        let a = sample_size_bound(10.0, 1.0, 0.01, delta).unwrap() as f64;
        let b = sample_size_bound(10.0, 0.25, 0.01, delta).unwrap() as f64;
        assert!((b / a - expect).abs() / expect < 1e-5);
    }

    #[test]
    fn bound_rejects_out_of_range_parameters() {
        assert!(sample_size_bound(1.0, 0.0, 1.0, 0.1).is_err());
        assert!(sample_size_bound(1.0, 1.5, 1.0, 0.1).is_err());
        assert!(sample_size_bound(1.0, 1.0, 0.0, 0.1).is_err());
        assert!(sample_size_bound(1.0, 1.0, 1.0, 1.0).is_err());
        assert!(sample_size_bound(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn zero_trials_is_an_error() {
        let q = source(&[&[1.0], &[2.0]]);
        let d = q.optimal_density().unwrap();
        assert!(matches!(concentration_trial(&q, &d, 1.0, 4, 0.1, 0, 1), Err(Error::NoTrials)));
    }

    #[test]
    fn unnormalized_density_cannot_be_sketched() {
        let q = source(&[&[1.0], &[2.0]]);
        let d = DensityField::unnormalized(&q, q.points().to_vec()).unwrap();
        assert!(matches!(sketch_rows(&q, &d, 3, 0), Err(Error::Unnormalized)));
    }

    #[test]
    fn density_csv_has_header() {
        let q = source(&[&[1.0], &[1.0]]);
        let mut buf = Vec::new();
        q.optimal_density().unwrap().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "u_1,value\n0,0.5\n1,0.5\n");
    }

    #[test]
    fn box_clamp_is_idempotent_on_admissible_points() {
        let b = DesignBox::cube(2, -1.0, 1.0).unwrap();
        let mut u = vec![0.25, -1.0];
        b.clamp(&mut u);
        assert_eq!(u, vec![0.25, -1.0]);
        let mut v = vec![3.0, f64::NAN];
        b.clamp(&mut v);
        assert_eq!(v, vec![1.0, -1.0]);
    }

    proptest! {
        #[test]
        fn density_is_scale_invariant(
            entries in proptest::collection::vec(-5.0f64..5.0, 12),
            s in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        ) {
            prop_assume!(entries.iter().any(|x| x.abs() > 1e-3));
            let rows = Matrix::from_row_major(4, 3, entries.clone());
            let scaled = Matrix::from_row_major(4, 3, entries.iter().map(|x| x * s).collect());
            let pts: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
            let w = vec![0.25; 4];
            let a = optimal_density(pts.clone(), &rows, &w).unwrap();
            let b = optimal_density(pts, &scaled, &w).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn sketch_product_is_symmetric_psd(
            entries in proptest::collection::vec(-5.0f64..5.0, 18),
            c in 1usize..40,
            seed in any::<u64>(),
        ) {
            prop_assume!(entries.iter().any(|x| x.abs() > 1e-3));
            let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
            let q = Quasimatrix::uniform(pts, Matrix::from_row_major(6, 3, entries), line_box(6)).unwrap();
            let d = q.optimal_density().unwrap();
            let f = sketch_product(&sketch_rows(&q, &d, c, seed).unwrap());
            prop_assert!(f.matrix.is_symmetric());
            prop_assert!(f.lambda_min >= -1e-10 * f.lambda_max.max(0.0));
        }
    }
}

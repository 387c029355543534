//! Fisher information of full and down-sampled designs, and design reports.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::rng;
use crate::scalar::Real;
use crate::sketch::{draw_indices, DensityField, Quasimatrix, RowSource};

/// Symmetric Fisher information matrix with its eigen summary.
#[derive(Clone, Debug)]
pub struct Fim<T> {
    pub matrix: Matrix<T>,
    /// Ascending.
    pub eigenvalues: Vec<T>,
    pub lambda_min: T,
    pub lambda_max: T,
    /// `λ_min / λ_max`, clipped to `[0, 1]`; zero when `λ_max <= 0`.
    pub c_inv: T,
}

impl<T: Real> Fim<T> {
    /// Symmetrizes `m` and computes its spectrum.
    pub fn from_matrix(mut m: Matrix<T>) -> Self {
        m.symmetrize();
        let eigenvalues = SymmetricEigen::new(&m).values;
        let lambda_min = eigenvalues.first().copied().unwrap_or_else(T::zero);
        let lambda_max = eigenvalues.last().copied().unwrap_or_else(T::zero);
        let c_inv = if lambda_max > T::zero() {
            (lambda_min / lambda_max).max(T::zero()).min(T::one())
        } else {
            T::zero()
        };
        Self {
            matrix: m,
            eigenvalues,
            lambda_min,
            lambda_max,
            c_inv,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `‖self - other‖_F`.
    pub fn frobenius_deviation(&self, other: &Self) -> T {
        self.matrix.sub(&other.matrix).frobenius_norm()
    }
}

/// How measurements of a design are weighted.
#[derive(Clone, Debug, PartialEq)]
pub enum Weighting<T> {
    /// Reweighted data: point `j` contributes `J_jᵀ J_j / (c π(u_j))`.
    Density(Vec<T>),
    /// Plain average: `J_jᵀ J_j / c`.
    Unweighted,
}

/// A finite set of design points with their sampling densities.
#[derive(Clone, Debug, PartialEq)]
pub struct Design<T> {
    pub points: Vec<Vec<T>>,
    pub weighting: Weighting<T>,
}

impl<T: Real> Design<T> {
    pub fn weighted(points: Vec<Vec<T>>, pis: Vec<T>) -> Result<Self> {
        if pis.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: pis.len(),
            });
        }
        Ok(Self {
            points,
            weighting: Weighting::Density(pis),
        })
    }

    pub fn unweighted(points: Vec<Vec<T>>) -> Self {
        Self {
            points,
            weighting: Weighting::Unweighted,
        }
    }

    /// Snaps `particles` to the quasimatrix's candidate points and attaches
    /// the density of `density` there. `density` must be defined over the
    /// same candidate list.
    pub fn reweighted_on(
        source: &Quasimatrix<T>,
        density: &DensityField<T>,
        particles: &[Vec<T>],
    ) -> Result<Self> {
        if density.len() != source.len() {
            return Err(Error::DimensionMismatch {
                expected: source.len(),
                got: density.len(),
            });
        }
        let (points, pis) = particles
            .iter()
            .map(|p| {
                let i = source.locate(p);
                (source.points()[i].clone(), density.density_at(i))
            })
            .unzip();
        Self::weighted(points, pis)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-point data weights: `1/(c π_j)` or `1/c`.
    pub fn data_weights(&self) -> Result<Vec<T>> {
        if self.is_empty() {
            return Err(Error::EmptyDesign);
        }
        let c = T::from_usize_lossy(self.len());
        match &self.weighting {
            Weighting::Unweighted => Ok(vec![T::one() / c; self.len()]),
            Weighting::Density(pis) => pis
                .iter()
                .enumerate()
                .map(|(j, &pi)| {
                    if pi > T::zero() && pi.is_finite() {
                        Ok(T::one() / (c * pi))
                    } else {
                        Err(Error::ZeroProbability(j))
                    }
                })
                .collect(),
        }
    }
}

/// FIM of the full design: `Σ_i w_i J_iᵀ J_i` under the base weights.
pub fn full_fim<T: Real>(source: &Quasimatrix<T>) -> Fim<T> {
    Fim::from_matrix(source.gram())
}

/// FIM of a finite design, reweighted by its sampling densities.
pub fn design_fim<T: Real, S: RowSource<T>>(source: &S, design: &Design<T>) -> Result<Fim<T>> {
    let weights = design.data_weights()?;
    let k = source.num_params();
    let mut m = Matrix::zeros(k, k);
    for (p, w) in design.points.iter().zip(weights) {
        let row = source.row(p)?;
        m.add_outer(&row, w);
    }
    Ok(Fim::from_matrix(m))
}

/// Reweighted FIM of a random design of `c` i.i.d. draws from `density`.
///
/// Uses the same draws as [`crate::sketch::sketch_rows`] for the same seed,
/// but accumulates by multiplicity, so it stays cheap for very large `c`.
pub fn sampled_fim<T: Real>(
    source: &Quasimatrix<T>,
    density: &DensityField<T>,
    c: usize,
    seed: u64,
) -> Result<Fim<T>> {
    let mut counts = vec![0usize; density.len()];
    for i in draw_indices(density, c, seed)? {
        counts[i] += 1;
    }
    let k = source.rows().ncols();
    let cf = T::from_usize_lossy(c);
    let mut m = Matrix::zeros(k, k);
    for (i, &n) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let w = T::from_usize_lossy(n) / (cf * density.density_at(i));
        m.add_outer(source.rows().row(i), w);
    }
    Ok(Fim::from_matrix(m))
}

/// Outcome of the probabilistic sensitivity guarantee over many random
/// designs of a fixed size.
#[derive(Clone, Copy, Debug)]
pub struct GuaranteeCheck {
    pub c: u64,
    pub designs: usize,
    /// Designs violating `λ_min^c >= λ_min - ε`.
    pub lambda_failures: usize,
    /// Designs violating `c_inv^c >= c_inv (λ_min - ε) / (λ_min + ε)`.
    pub c_inv_failures: usize,
}

impl GuaranteeCheck {
    pub fn lambda_failure_rate(&self) -> f64 {
        self.lambda_failures as f64 / self.designs as f64
    }

    pub fn c_inv_failure_rate(&self) -> f64 {
        self.c_inv_failures as f64 / self.designs as f64
    }
}

/// Draws `designs` random designs of size `c` from `density` and counts how
/// many violate the eigenvalue and conditioning guarantees for tolerance
/// `eps` relative to the full FIM.
pub fn check_guarantee<T: Real>(
    source: &Quasimatrix<T>,
    density: &DensityField<T>,
    c: u64,
    eps: T,
    designs: usize,
    seed: u64,
) -> Result<GuaranteeCheck> {
    use rayon::prelude::*;

    if designs == 0 {
        return Err(Error::NoTrials);
    }
    let full = full_fim(source);
    let lam_floor = full.lambda_min - eps;
    let cinv_floor = full.c_inv * (full.lambda_min - eps) / (full.lambda_min + eps);
    let outcomes = (0..designs)
        .into_par_iter()
        .map(|t| {
            let f = sampled_fim(source, density, c as usize, rng::derive_seed(seed, t as u64))?;
            Ok((f.lambda_min < lam_floor, f.c_inv < cinv_floor))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GuaranteeCheck {
        c,
        designs,
        lambda_failures: outcomes.iter().filter(|o| o.0).count(),
        c_inv_failures: outcomes.iter().filter(|o| o.1).count(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    FixedSource,
    SourceDesign,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::FixedSource => "fixed-source",
            Mode::SourceDesign => "source-design",
        })
    }
}

/// Initial distribution an arm starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InitKind {
    Normal,
    Uniform,
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitKind::Normal => "normal",
            InitKind::Uniform => "uniform",
        })
    }
}

/// Design-producing method; declaration order is the table order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Full,
    Initial,
    Eks,
    Cbs,
    Greedy,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Full => "full",
            Method::Initial => "init",
            Method::Eks => "eks",
            Method::Cbs => "cbs",
            Method::Greedy => "greedy",
        })
    }
}

/// One line of a design comparison.
#[derive(Clone, Debug)]
pub struct DesignReport<T> {
    pub scenario: String,
    pub mode: Mode,
    pub init: Option<InitKind>,
    pub method: Method,
    pub c: usize,
    /// Absent in source-design mode, where only `c_inv` is comparable.
    pub lambda_min: Option<T>,
    pub c_inv: T,
    pub frob_dev: Option<T>,
    pub seed: u64,
    /// Path of the iteration trace, if one was written.
    pub trace: Option<String>,
}

impl<T: Real> DesignReport<T> {
    /// Label used in the `method` column, e.g. `normal-eks` or `full`.
    pub fn method_label(&self) -> String {
        match self.init {
            Some(init) => format!("{init}-{}", self.method),
            None => self.method.to_string(),
        }
    }

    fn sort_key(&self) -> (&str, Mode, Option<InitKind>, Method, u64) {
        (&self.scenario, self.mode, self.init, self.method, self.seed)
    }

    pub fn is_finite(&self) -> bool {
        self.c_inv.is_finite()
            && self.lambda_min.map_or(true, |x| x.is_finite())
            && self.frob_dev.map_or(true, |x| x.is_finite())
    }
}

/// Reports sorted by scenario, then mode, initial distribution and method.
#[derive(Clone, Debug)]
pub struct ReportTable<T> {
    pub rows: Vec<DesignReport<T>>,
}

pub const REPORT_HEADER: &str = "scenario,mode,method,c,lambda_min,c_inv,frob_dev,seed";

impl<T: Real> ReportTable<T> {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{REPORT_HEADER}")?;
        for r in &self.rows {
            let opt = |x: Option<T>| x.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.scenario,
                r.mode,
                r.method_label(),
                r.c,
                opt(r.lambda_min),
                r.c_inv,
                opt(r.frob_dev),
                r.seed
            )?;
        }
        Ok(())
    }
}

pub fn compare_designs<T: Real>(mut reports: Vec<DesignReport<T>>) -> ReportTable<T> {
    reports.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    ReportTable { rows: reports }
}

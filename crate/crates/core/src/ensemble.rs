//! Interacting-particle samplers over a design box: ensemble Kalman sampling
//! (EKS), consensus-based sampling (CBS), plain resampling, and a greedy
//! wrapper that only keeps proposals improving a design criterion.
//!
//! Particles target the density `∝ ‖J_u‖²`, i.e. the potential
//! `Φ(u) = -log ‖J_u‖²` of a [`RowSource`].

use std::fmt;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design::Fim;
use crate::error::{invalid, Error, Result};
use crate::linalg::{sqrt_psd, Matrix};
use crate::rng;
use crate::scalar::Real;
use crate::sketch::{squared_norm, DensityField, DesignBox, RowSource};

const EKS_TAG: u64 = 0xE45;
const CBS_TAG: u64 = 0xCB5;
const RESAMPLE_TAG: u64 = 0x5A3;
const INIT_TAG: u64 = 0x1A1;

/// `c` particles in an `L`-dimensional design space.
///
/// Randomness for step `k` comes from a generator derived from `(seed, k)`,
/// so a step is a pure function of the ensemble value.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble<T> {
    particles: Vec<Vec<T>>,
    step_index: u64,
    seed: u64,
}

impl<T: Real> Ensemble<T> {
    /// Builds an ensemble at step 0. All particles must share one dimension.
    pub fn new(particles: Vec<Vec<T>>, seed: u64) -> Result<Self> {
        let dim = particles.first().map_or(0, Vec::len);
        if let Some(p) = particles.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        Ok(Self {
            particles,
            step_index: 0,
            seed,
        })
    }

    /// Draws `c` particles from `proposal`, clamped to `bounds`.
    pub fn sample(proposal: &Proposal<T>, c: usize, bounds: &DesignBox<T>, seed: u64) -> Result<Self> {
        let mut g = rng::generator(rng::derive_seed(seed, INIT_TAG), 0);
        let particles = proposal.draw(&mut g, c, bounds)?;
        Self::new(particles, seed)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles.first().map_or(0, Vec::len)
    }

    pub fn particles(&self) -> &[Vec<T>] {
        &self.particles
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same particles, step counter advanced by one.
    pub fn advanced(&self) -> Self {
        Self {
            particles: self.particles.clone(),
            step_index: self.step_index + 1,
            seed: self.seed,
        }
    }

    fn successor(&self, particles: Vec<Vec<T>>) -> Self {
        Self {
            particles,
            step_index: self.step_index + 1,
            seed: self.seed,
        }
    }

    fn step_rng(&self, tag: u64) -> ChaCha8Rng {
        rng::generator(rng::derive_seed(self.seed, tag), self.step_index)
    }

    pub fn clamp_to(&mut self, bounds: &DesignBox<T>) {
        for p in &mut self.particles {
            bounds.clamp(p);
        }
    }

    pub fn mean(&self) -> Vec<T> {
        let c = T::from_usize_lossy(self.len());
        let mut m = vec![T::zero(); self.dim()];
        for p in &self.particles {
            for (a, &x) in m.iter_mut().zip(p) {
                *a += x;
            }
        }
        m.iter_mut().for_each(|a| *a /= c);
        m
    }

    /// Writes `particle,coord_1,…,coord_L` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "particle")?;
        for l in 1..=self.dim() {
            write!(w, ",coord_{l}")?;
        }
        writeln!(w)?;
        for (j, p) in self.particles.iter().enumerate() {
            write!(w, "{j}")?;
            for x in p {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    fn require(&self, needed: usize) -> Result<()> {
        if self.len() < needed {
            return Err(Error::TooFewParticles {
                needed,
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Empirical covariance `(1/c) Σ (u_j - ū)(u_j - ū)ᵀ`.
pub fn empirical_covariance<T: Real>(particles: &[Vec<T>]) -> Matrix<T> {
    let weights = vec![T::one() / T::from_usize_lossy(particles.len()); particles.len()];
    weighted_moments(particles, &weights).1
}

/// Weighted mean and covariance; weights must sum to one. Offsets are taken
/// from the first particle so that coinciding particles give exactly zero
/// spread.
fn weighted_moments<T: Real>(particles: &[Vec<T>], weights: &[T]) -> (Vec<T>, Matrix<T>) {
    if particles.is_empty() {
        return (Vec::new(), Matrix::zeros(0, 0));
    }
    let dim = particles[0].len();
    let shift = centered_mean(particles, weights);
    let mut cov = Matrix::zeros(dim, dim);
    for (p, &w) in particles.iter().zip(weights) {
        let d: Vec<T> = p
            .iter()
            .zip(&particles[0])
            .zip(&shift)
            .map(|((&x, &x0), &s)| (x - x0) - s)
            .collect();
        cov.add_outer(&d, w);
    }
    cov.symmetrize();
    // a convex combination; clamping to the coordinate range only removes rounding
    let mean = (0..dim)
        .map(|l| {
            let (lo, hi) = particles
                .iter()
                .fold((particles[0][l], particles[0][l]), |(lo, hi), p| (lo.min(p[l]), hi.max(p[l])));
            (particles[0][l] + shift[l]).max(lo).min(hi)
        })
        .collect();
    (mean, cov)
}

/// `Σ w_j (v_j - v_0)`.
fn centered_mean<T: Real>(vs: &[Vec<T>], weights: &[T]) -> Vec<T> {
    let dim = vs.first().map_or(0, Vec::len);
    let mut m = vec![T::zero(); dim];
    for (v, &w) in vs.iter().zip(weights) {
        for ((a, &x), &x0) in m.iter_mut().zip(v).zip(&vs[0]) {
            *a += w * (x - x0);
        }
    }
    m
}

fn eval_rows<T: Real, S: RowSource<T>>(source: &S, particles: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    particles.par_iter().map(|p| source.row(p)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EksParams<T> {
    pub dt0: T,
    pub eps: T,
}

impl<T: Real> Default for EksParams<T> {
    fn default() -> Self {
        Self {
            dt0: T::one(),
            eps: T::lit(1e-8),
        }
    }
}

/// EKS drift coefficients
/// `D_{jj'} = 2 (J_{j'} - J̄)·J_j / (c ‖J_j‖²)`, so the drift of particle
/// `j` is `Σ_{j'} D_{jj'} u_{j'}`.
pub fn eks_drift_matrix<T: Real>(rows: &[Vec<T>]) -> Result<Matrix<T>> {
    let c = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    let cf = T::from_usize_lossy(c);
    let shift = if k == 0 {
        Vec::new()
    } else {
        centered_mean(rows, &vec![T::one() / cf; c])
    };
    let two = T::lit(2.0);
    let mut d = Matrix::zeros(c, c);
    for (j, rj) in rows.iter().enumerate() {
        let norm = squared_norm(rj);
        if !(norm > T::zero()) {
            return Err(Error::ParticleInDegenerateRegion(j));
        }
        for (jp, rjp) in rows.iter().enumerate() {
            let dot: T = rjp
                .iter()
                .zip(&rows[0])
                .zip(&shift)
                .zip(rj)
                .map(|(((&a, &a0), &s), &b)| ((a - a0) - s) * b)
                .sum();
            d[(j, jp)] = two * dot / (cf * norm);
        }
    }
    Ok(d)
}

/// One Euler-Maruyama step of EKS with adaptive step `dt0 / (‖D‖_F + eps)`.
pub fn eks_step<T: Real, S: RowSource<T>>(e: &Ensemble<T>, source: &S, params: &EksParams<T>) -> Result<Ensemble<T>> {
    e.require(2)?;
    if !(params.dt0 > T::zero()) || !(params.eps > T::zero()) {
        return Err(invalid("dt0/eps", "must be positive"));
    }
    let rows = eval_rows(source, &e.particles)?;
    let d = eks_drift_matrix(&rows)?;
    let dt = params.dt0 / (d.frobenius_norm() + params.eps);
    let root = sqrt_psd(&empirical_covariance(&e.particles));
    let noise_scale = (T::lit(2.0) * dt).sqrt();
    let mut g = e.step_rng(EKS_TAG);
    let dim = e.dim();
    let mut next = Vec::with_capacity(e.len());
    for (j, p) in e.particles.iter().enumerate() {
        let zeta = rng::standard_normal::<T, _>(&mut g, dim);
        let kick = root.matvec(&zeta);
        let mut q = p.clone();
        for l in 0..dim {
            // rows of D sum to zero, so shifting by u_0 leaves the drift unchanged
            let drift: T = (0..e.len())
                .map(|jp| d[(j, jp)] * (e.particles[jp][l] - e.particles[0][l]))
                .sum();
            q[l] += dt * drift + noise_scale * kick[l];
        }
        source.bounds().clamp(&mut q);
        next.push(q);
    }
    Ok(e.successor(next))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CbsParams<T> {
    pub beta: T,
    pub dt: T,
}

impl<T: Real> Default for CbsParams<T> {
    fn default() -> Self {
        Self {
            beta: T::one(),
            dt: T::lit(0.3),
        }
    }
}

/// Weighted mean and covariance with weights `∝ exp(-β Φ(u_j))`.
///
/// Particles with a vanishing row get zero weight; if every row vanishes the
/// weights fall back to uniform.
pub fn cbs_weighted_moments<T: Real, S: RowSource<T>>(
    e: &Ensemble<T>,
    source: &S,
    beta: T,
) -> Result<(Vec<T>, Matrix<T>)> {
    e.require(2)?;
    if !(beta >= T::zero()) {
        return Err(invalid("beta", "must be non-negative"));
    }
    let log_w: Vec<T> = if beta == T::zero() {
        vec![T::zero(); e.len()]
    } else {
        eval_rows(source, &e.particles)?
            .iter()
            .map(|r| beta * squared_norm(r).ln())
            .collect()
    };
    Ok(weighted_moments(&e.particles, &normalized_weights(&log_w)))
}

fn normalized_weights<T: Real>(log_w: &[T]) -> Vec<T> {
    let max = log_w
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        let c = T::from_usize_lossy(log_w.len());
        return vec![T::one() / c; log_w.len()];
    }
    let w: Vec<T> = log_w
        .iter()
        .map(|&x| if x.is_finite() { (x - max).exp() } else { T::zero() })
        .collect();
    let total: T = w.iter().copied().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// One exponential-integrator CBS step.
pub fn cbs_step<T: Real, S: RowSource<T>>(e: &Ensemble<T>, source: &S, params: &CbsParams<T>) -> Result<Ensemble<T>> {
    if !(params.dt >= T::zero()) {
        return Err(invalid("dt", "must be non-negative"));
    }
    let (mean, cov) = cbs_weighted_moments(e, source, params.beta)?;
    let root = sqrt_psd(&cov);
    let decay = (-params.dt).exp();
    let spread = ((T::one() - (-T::lit(2.0) * params.dt).exp()) * (T::one() + params.beta)).sqrt();
    let mut g = e.step_rng(CBS_TAG);
    let dim = e.dim();
    let next = e
        .particles
        .iter()
        .map(|p| {
            let zeta = rng::standard_normal::<T, _>(&mut g, dim);
            let kick = root.matvec(&zeta);
            let mut q: Vec<T> = (0..dim)
                .map(|l| decay * p[l] + (T::one() - decay) * mean[l] + spread * kick[l])
                .collect();
            source.bounds().clamp(&mut q);
            q
        })
        .collect();
    Ok(e.successor(next))
}

/// One-dimensional law for a single design coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoordinateLaw<T> {
    Point(T),
    Normal { mean: T, sd: T },
    Uniform { lo: T, hi: T },
}

impl<T: Real> CoordinateLaw<T> {
    fn draw<R: Rng + ?Sized>(&self, g: &mut R) -> T {
        match *self {
            CoordinateLaw::Point(x) => x,
            CoordinateLaw::Normal { mean, sd } => mean + sd * rng::standard_normal::<T, _>(g, 1)[0],
            CoordinateLaw::Uniform { lo, hi } => lo + (hi - lo) * T::lit(g.random::<f64>()),
        }
    }
}

/// Where fresh particles come from.
#[derive(Clone, Debug)]
pub enum Proposal<T> {
    /// Independent coordinates.
    Coordinates(Vec<CoordinateLaw<T>>),
    /// Support points of a normalized density, drawn by mass.
    Density(DensityField<T>),
}

impl<T: Real> Proposal<T> {
    /// Isotropic Gaussian at the box center.
    pub fn normal(bounds: &DesignBox<T>, sd: T) -> Self {
        Proposal::Coordinates(
            bounds
                .center()
                .into_iter()
                .map(|mean| CoordinateLaw::Normal { mean, sd })
                .collect(),
        )
    }

    pub fn uniform(bounds: &DesignBox<T>) -> Self {
        Proposal::Coordinates(
            bounds
                .lower()
                .iter()
                .zip(bounds.upper())
                .map(|(&lo, &hi)| CoordinateLaw::Uniform { lo, hi })
                .collect(),
        )
    }

    pub fn point(u: &[T]) -> Self {
        Proposal::Coordinates(u.iter().map(|&x| CoordinateLaw::Point(x)).collect())
    }

    fn draw<R: Rng + ?Sized>(&self, g: &mut R, c: usize, bounds: &DesignBox<T>) -> Result<Vec<Vec<T>>> {
        let mut out = match self {
            Proposal::Coordinates(laws) => {
                if laws.len() != bounds.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: bounds.dim(),
                        got: laws.len(),
                    });
                }
                (0..c)
                    .map(|_| laws.iter().map(|l| l.draw(g)).collect())
                    .collect::<Vec<Vec<T>>>()
            }
            Proposal::Density(field) => {
                if !field.is_normalized() {
                    return Err(Error::Unnormalized);
                }
                let masses: Vec<f64> = field.values().iter().map(|v| v.to_f64_lossy()).collect();
                let dist = WeightedIndex::new(&masses).map_err(|_| Error::ZeroMass)?;
                (0..c)
                    .map(|_| field.points()[dist.sample(g)].clone())
                    .collect()
            }
        };
        for p in &mut out {
            bounds.clamp(p);
        }
        Ok(out)
    }
}

/// Replaces every particle by a fresh draw from `proposal`.
pub fn resample_step<T: Real>(e: &Ensemble<T>, proposal: &Proposal<T>, bounds: &DesignBox<T>) -> Result<Ensemble<T>> {
    let mut g = e.step_rng(RESAMPLE_TAG);
    let particles = proposal.draw(&mut g, e.len(), bounds)?;
    Ok(e.successor(particles))
}

/// Ensemble update used inside the greedy loop.
#[derive(Clone, Debug)]
pub enum UpdateRule<T> {
    Eks(EksParams<T>),
    Cbs(CbsParams<T>),
    Resample(Proposal<T>),
}

impl<T: Real> UpdateRule<T> {
    pub fn apply<S: RowSource<T>>(&self, e: &Ensemble<T>, source: &S) -> Result<Ensemble<T>> {
        match self {
            UpdateRule::Eks(p) => eks_step(e, source, p),
            UpdateRule::Cbs(p) => cbs_step(e, source, p),
            UpdateRule::Resample(p) => resample_step(e, p, source.bounds()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Criterion {
    MinEigenvalue,
    InverseConditionNumber,
}

impl Criterion {
    pub fn value<T: Real>(&self, fim: &Fim<T>) -> T {
        match self {
            Criterion::MinEigenvalue => fim.lambda_min,
            Criterion::InverseConditionNumber => fim.c_inv,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::MinEigenvalue => "min_eigenvalue",
            Criterion::InverseConditionNumber => "inverse_condition_number",
        })
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "min_eigenvalue" | "lambda_min" => Ok(Criterion::MinEigenvalue),
            "inverse_condition_number" | "c_inv" => Ok(Criterion::InverseConditionNumber),
            _ => Err(invalid("criterion", format!("unknown criterion `{s}`"))),
        }
    }
}

/// Design criterion: maps an ensemble to the FIM of its induced design and
/// scores it. `reference` is the full-design FIM, when available.
pub struct GreedyCriterion<'a, T> {
    pub tag: Criterion,
    pub evaluator: Box<dyn Fn(&Ensemble<T>) -> Result<Fim<T>> + Sync + 'a>,
    pub reference: Option<Fim<T>>,
}

impl<'a, T: Real> GreedyCriterion<'a, T> {
    pub fn new(
        tag: Criterion,
        evaluator: impl Fn(&Ensemble<T>) -> Result<Fim<T>> + Sync + 'a,
        reference: Option<Fim<T>>,
    ) -> Self {
        Self {
            tag,
            evaluator: Box::new(evaluator),
            reference,
        }
    }

    fn entry(&self, iteration: usize, e: &Ensemble<T>, accepted: bool) -> Result<(TraceEntry<T>, Fim<T>)> {
        let fim = (self.evaluator)(e)?;
        let entry = TraceEntry {
            iteration,
            q: self.tag.value(&fim),
            lambda_min: fim.lambda_min,
            c_inv: fim.c_inv,
            frob_dev: self.reference.as_ref().map(|r| fim.frobenius_deviation(r)),
            accepted,
        };
        Ok((entry, fim))
    }
}

/// State of the greedy loop after one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry<T> {
    pub iteration: usize,
    pub q: T,
    pub lambda_min: T,
    pub c_inv: T,
    pub frob_dev: Option<T>,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct GreedyOutcome<T> {
    pub ensemble: Ensemble<T>,
    pub fim: Fim<T>,
    /// Entry 0 is the initial ensemble, then one entry per proposal.
    pub trace: Vec<TraceEntry<T>>,
    pub accepted: usize,
}

pub const TRACE_HEADER: &str = "iteration,Q,lambda_min,c_inv,frob_dev,accepted";

pub fn write_trace_csv<T: Real, W: Write>(trace: &[TraceEntry<T>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for t in trace {
        let dev = t.frob_dev.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            t.iteration, t.q, t.lambda_min, t.c_inv, dev, t.accepted
        )?;
    }
    Ok(())
}

/// Runs `iterations` proposals, keeping each one only if it strictly improves
/// the criterion. A rejected proposal still advances the step counter, so the
/// next proposal uses fresh randomness.
pub fn greedy_iterate<T: Real>(
    e: Ensemble<T>,
    mut propose: impl FnMut(&Ensemble<T>) -> Result<Ensemble<T>>,
    crit: &GreedyCriterion<'_, T>,
    iterations: usize,
) -> Result<GreedyOutcome<T>> {
    let (first, mut fim) = crit.entry(0, &e, false)?;
    let mut current = e;
    let mut best = first.q;
    let mut trace = vec![first];
    let mut accepted = 0;
    for it in 1..=iterations {
        let candidate = propose(&current)?;
        let cand_fim = (crit.evaluator)(&candidate)?;
        let q = crit.tag.value(&cand_fim);
        let take = q > best;
        if take {
            best = q;
            fim = cand_fim;
            current = Ensemble {
                step_index: current.step_index + 1,
                ..candidate
            };
            accepted += 1;
        } else {
            current = current.advanced();
        }
        trace.push(TraceEntry {
            iteration: it,
            q: best,
            lambda_min: fim.lambda_min,
            c_inv: fim.c_inv,
            frob_dev: crit.reference.as_ref().map(|r| fim.frobenius_deviation(r)),
            accepted: take,
        });
        log::debug!("greedy iteration {it}: Q = {best} (accepted: {take})");
    }
    Ok(GreedyOutcome {
        ensemble: current,
        fim,
        trace,
        accepted,
    })
}

/// Row source given by a closure over a box; handy for synthetic problems.
pub struct FnRows<T, F> {
    bounds: DesignBox<T>,
    num_params: usize,
    f: F,
}

impl<T: Real, F: Fn(&[T]) -> Vec<T> + Sync> FnRows<T, F> {
    pub fn new(bounds: DesignBox<T>, num_params: usize, f: F) -> Self {
        Self { bounds, num_params, f }
    }
}

impl<T: Real, F: Fn(&[T]) -> Vec<T> + Sync> RowSource<T> for FnRows<T, F> {
    fn design_dim(&self) -> usize {
        self.bounds.dim()
    }

    fn num_params(&self) -> usize {
        self.num_params
    }

    fn bounds(&self) -> &DesignBox<T> {
        &self.bounds
    }

    fn row(&self, u: &[T]) -> Result<Vec<T>> {
        if u.len() != self.bounds.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.bounds.dim(),
                got: u.len(),
            });
        }
        let r = (self.f)(u);
        if r.len() != self.num_params {
            return Err(Error::DimensionMismatch {
                expected: self.num_params,
                got: r.len(),
            });
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(lo: f64, hi: f64) -> DesignBox<f64> {
        DesignBox::cube(1, lo, hi).unwrap()
    }

    fn identity_rows(dim: usize) -> FnRows<f64, impl Fn(&[f64]) -> Vec<f64> + Sync> {
        FnRows::new(DesignBox::cube(dim, -10.0, 10.0).unwrap(), dim, |u: &[f64]| u.to_vec())
    }

    fn ens(ps: &[&[f64]], seed: u64) -> Ensemble<f64> {
        Ensemble::new(ps.iter().map(|p| p.to_vec()).collect(), seed).unwrap()
    }

    #[test]
    fn eks_two_particles_by_hand() {
        // rows J(u) = u at u = 1, 2: J̄ = 1.5
        let src = FnRows::new(line(-10.0, 10.0), 1, |u: &[f64]| vec![u[0]]);
        let e = ens(&[&[1.0], &[2.0]], 11);
        let d = eks_drift_matrix(&[vec![1.0], vec![2.0]]).unwrap();
        // D[j][j'] = 2 (J_j' - 1.5) J_j / (2 J_j²) = (J_j' - 1.5) / J_j
        let hand: [[f64; 2]; 2] = [[-0.5, 0.5], [-0.25, 0.25]];
        for j in 0..2 {
            for jp in 0..2 {
                assert!((d[(j, jp)] - hand[j][jp]).abs() < 1e-12);
            }
        }
        let next = eks_step(&e, &src, &EksParams::default()).unwrap();
        let fro = (0.25f64 + 0.25 + 0.0625 + 0.0625).sqrt();
        let dt = 1.0 / (fro + 1e-8);
        // covariance of {1, 2} with 1/c is 0.25, root 0.5
        let mut g = rng::generator(rng::derive_seed(11, EKS_TAG), 0);
        let z: Vec<f64> = rng::standard_normal(&mut g, 2);
        let expect = [
            1.0 + dt * (-0.5 * 1.0 + 0.5 * 2.0) + (2.0 * dt).sqrt() * 0.5 * z[0],
            2.0 + dt * (-0.25 * 1.0 + 0.25 * 2.0) + (2.0 * dt).sqrt() * 0.5 * z[1],
        ];
        for (p, x) in next.particles().iter().zip(expect) {
            assert!((p[0] - x).abs() < 1e-12, "{} vs {x}", p[0]);
        }
        assert_eq!(next.step_index(), 1);
    }

    #[test]
    fn eks_identical_particles_stay_put() {
        let src = identity_rows(2);
        let e = ens(&[&[0.3, -0.2][..]; 5], 3);
        let next = eks_step(&e, &src, &EksParams::default()).unwrap();
        assert_eq!(next.particles(), e.particles());
    }

    #[test]
    fn eks_rejects_degenerate_particles_and_small_ensembles() {
        let src = identity_rows(2);
        let e = ens(&[&[0.0, 0.0], &[1.0, 1.0]], 3);
        assert!(matches!(
            eks_step(&e, &src, &EksParams::default()),
            Err(Error::ParticleInDegenerateRegion(0))
        ));
        let e = ens(&[&[1.0, 1.0]], 3);
        assert!(matches!(
            eks_step(&e, &src, &EksParams::default()),
            Err(Error::TooFewParticles { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn cbs_beta_zero_gives_plain_moments() {
        let src = identity_rows(2);
        let e = ens(&[&[1.0, 0.0], &[3.0, 2.0], &[2.0, 7.0]], 0);
        let (m, c) = cbs_weighted_moments(&e, &src, 0.0).unwrap();
        assert!(m.iter().zip(e.mean()).all(|(a, b)| (a - b).abs() < 1e-14));
        let plain = empirical_covariance(e.particles());
        assert!(c.sub(&plain).frobenius_norm() < 1e-12);
    }

    #[test]
    fn cbs_large_beta_concentrates_on_minimizer() {
        // Φ = -log‖u‖²: smallest at the particle farthest from the origin
        let src = identity_rows(1);
        let e = ens(&[&[1.0], &[2.0], &[-3.0], &[0.5]], 0);
        let (m, _) = cbs_weighted_moments(&e, &src, 1e6).unwrap();
        assert!((m[0] + 3.0).abs() < 1e-6);
    }

    #[test]
    fn cbs_symmetric_pair() {
        let src = identity_rows(2);
        let e = ens(&[&[1.0, 2.0], &[-1.0, -2.0]], 0);
        let (m, c) = cbs_weighted_moments(&e, &src, 1.0).unwrap();
        assert!(m.iter().all(|x| x.abs() < 1e-15));
        let half = [1.0, 2.0];
        for i in 0..2 {
            for j in 0..2 {
                assert!((c[(i, j)] - half[i] * half[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cbs_zero_step_and_collapsed_ensemble_are_fixed() {
        let src = identity_rows(2);
        let e = ens(&[&[1.0, 2.0], &[-1.0, 0.5], &[0.2, 0.1]], 9);
        let next = cbs_step(&e, &src, &CbsParams { beta: 1.0, dt: 0.0 }).unwrap();
        assert_eq!(next.particles(), e.particles());
        let e = ens(&[&[0.4, -0.7][..]; 4], 9);
        let next = cbs_step(&e, &src, &CbsParams::default()).unwrap();
        for p in next.particles() {
            assert!((p[0] - 0.4).abs() < 1e-15 && (p[1] + 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn resample_point_mass() {
        let b = DesignBox::cube(2, -1.0, 1.0).unwrap();
        let e = ens(&[&[0.0, 0.0][..]; 6], 1);
        let next = resample_step(&e, &Proposal::point(&[0.25, -0.5]), &b).unwrap();
        assert!(next.particles().iter().all(|p| p == &[0.25, -0.5]));
    }

    #[test]
    fn uniform_proposal_mean_near_center() {
        // mean of n uniforms on [-1, 3] per coordinate: sd = 4/√12/√n
        let b = DesignBox::new(vec![-1.0f64, 0.0], vec![3.0, 1.0]).unwrap();
        let n = 20_000;
        let e = Ensemble::sample(&Proposal::uniform(&b), n, &b, 42).unwrap();
        let m = e.mean();
        let se = [4.0 / 12f64.sqrt() / (n as f64).sqrt(), 1.0 / 12f64.sqrt() / (n as f64).sqrt()];
        assert!((m[0] - 1.0).abs() < 3.0 * se[0]);
        assert!((m[1] - 0.5).abs() < 3.0 * se[1]);
    }

    #[test]
    fn density_proposal_draws_support_points() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        let field = DensityField::from_masses(pts, vec![0.0, 0.25, 0.75], vec![1.0 / 3.0; 3]).unwrap();
        let b = line(0.0, 2.0);
        let e = Ensemble::sample(&Proposal::Density(field), 4000, &b, 5).unwrap();
        let ones = e.particles().iter().filter(|p| p[0] == 1.0).count() as f64;
        assert!(e.particles().iter().all(|p| p[0] != 0.0));
        assert!((ones / 4000.0 - 0.25).abs() < 3.0 * (0.25f64 * 0.75 / 4000.0).sqrt());
    }

    fn greedy_crit<'a>() -> GreedyCriterion<'a, f64> {
        // score: spread of the first coordinate
        GreedyCriterion::new(
            Criterion::MinEigenvalue,
            |e: &Ensemble<f64>| {
                let c = empirical_covariance(e.particles());
                Ok(Fim::from_matrix(Matrix::from_rows(&[[c[(0, 0)]]])))
            },
            None,
        )
    }

    #[test]
    fn identity_rule_never_accepts() {
        let e = ens(&[&[0.0], &[1.0], &[3.0]], 2);
        let out = greedy_iterate(e.clone(), |e| Ok(e.clone()), &greedy_crit(), 7).unwrap();
        assert_eq!(out.accepted, 0);
        assert_eq!(out.trace.len(), 8);
        assert!(out.trace.iter().all(|t| t.q == out.trace[0].q && !t.accepted));
        assert_eq!(out.ensemble.particles(), e.particles());
        assert_eq!(out.ensemble.step_index(), 7);
    }

    #[test]
    fn greedy_trace_is_monotone_and_reproducible() {
        let b = line(-1.0, 1.0);
        let rule = UpdateRule::Resample(Proposal::uniform(&b));
        let src = FnRows::new(b.clone(), 1, |u: &[f64]| vec![1.0 + u[0]]);
        let e = Ensemble::sample(&Proposal::uniform(&b), 5, &b, 8).unwrap();
        let run = || greedy_iterate(e.clone(), |e| rule.apply(e, &src), &greedy_crit(), 30).unwrap();
        let a = run();
        let b2 = run();
        assert!(a.trace.windows(2).all(|w| w[1].q >= w[0].q));
        assert!(a.accepted > 0);
        assert_eq!(a.ensemble, b2.ensemble);
        let mut buf = Vec::new();
        write_trace_csv(&a.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,Q,lambda_min,c_inv,frob_dev,accepted\n0,"));
        assert_eq!(text.lines().count(), 32);
    }

    #[test]
    fn ensemble_csv_layout() {
        let e = ens(&[&[0.5, 1.5], &[2.0, -1.0]], 0);
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "particle,coord_1,coord_2\n0,0.5,1.5\n1,2,-1\n"
        );
    }

    #[test]
    fn criterion_parsing() {
        assert_eq!("c_inv".parse::<Criterion>().unwrap(), Criterion::InverseConditionNumber);
        assert_eq!("min-eigenvalue".parse::<Criterion>().unwrap(), Criterion::MinEigenvalue);
        assert!("trace".parse::<Criterion>().is_err());
    }

    fn particles_strategy(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-0.9f64..0.9, dim), 2..8)
    }

    proptest! {
        #[test]
        fn cbs_mean_in_convex_hull(ps in particles_strategy(2), beta in 0.0f64..50.0) {
            let src = FnRows::new(DesignBox::cube(2, -1.0, 1.0).unwrap(), 2, |u: &[f64]| vec![1.0 + u[0], 2.0 - u[1] * u[0]]);
            let e = Ensemble::new(ps.clone(), 0).unwrap();
            let (m, _) = cbs_weighted_moments(&e, &src, beta).unwrap();
            for l in 0..2 {
                let lo = ps.iter().map(|p| p[l]).fold(f64::INFINITY, f64::min);
                let hi = ps.iter().map(|p| p[l]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(m[l] >= lo && m[l] <= hi);
            }
        }

        #[test]
        fn covariance_is_shift_invariant(ps in particles_strategy(3), a in prop::collection::vec(-5.0f64..5.0, 3)) {
            let shifted: Vec<Vec<f64>> = ps.iter().map(|p| p.iter().zip(&a).map(|(x, s)| x + s).collect()).collect();
            let d = empirical_covariance(&ps).sub(&empirical_covariance(&shifted)).frobenius_norm();
            prop_assert!(d < 1e-12);
        }

        #[test]
        fn steps_are_reproducible_and_stay_in_box(ps in particles_strategy(2), seed in any::<u64>()) {
            let b = DesignBox::cube(2, -1.0, 1.0).unwrap();
            let src = FnRows::new(b.clone(), 2, |u: &[f64]| vec![1.5 + u[0], 1.0 + u[1] * u[1]]);
            let e = Ensemble::new(ps, seed).unwrap();
            for rule in [UpdateRule::Eks(EksParams::default()), UpdateRule::Cbs(CbsParams::default())] {
                let a = rule.apply(&e, &src).unwrap();
                let again = rule.apply(&e, &src).unwrap();
                prop_assert_eq!(&a, &again);
                prop_assert!(a.particles().iter().all(|p| b.contains(p)));
            }
        }

        #[test]
        fn clamping_is_idempotent(ps in particles_strategy(2)) {
            let b = DesignBox::cube(2, -1.0, 1.0).unwrap();
            let mut e = Ensemble::new(ps, 0).unwrap();
            let before = e.clone();
            e.clamp_to(&b);
            prop_assert_eq!(e, before);
        }
    }
}

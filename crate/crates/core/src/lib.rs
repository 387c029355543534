//! Randomized sketching of Fisher information matrices for optimal
//! experimental design, with particle samplers for the sampling density and
//! a finite-difference Schrödinger-type forward model.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.
//!
//! ```
//! use fimsketch_core::{full_fim, sketch_product, sketch_rows, Grid, Preset, SchrodingerProblem64, SourceSpec};
//!
//! # fn main() -> fimsketch_core::Result<()> {
//! let problem = SchrodingerProblem64::new(Grid::new(12)?, Preset::SystemC.coeffs(), SourceSpec::Constant(1e4))?;
//! let q = problem.full_quasimatrix()?;
//! let density = q.optimal_density()?;
//! let sketch = sketch_product(&sketch_rows(&q, &density, 18, 7)?);
//! assert!(sketch.lambda_min.is_finite() && full_fim(&q).lambda_min > 0.0);
//! # Ok(())
//! # }
//! ```

pub mod design;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod schrodinger;
pub mod sketch;

pub use design::{
    check_guarantee, compare_designs, design_fim, full_fim, sampled_fim, Design, DesignReport, Fim,
    GuaranteeCheck, InitKind, Method, Mode, ReportTable, Weighting, REPORT_HEADER,
};
pub use ensemble::{
    cbs_step, cbs_weighted_moments, eks_step, empirical_covariance, greedy_iterate, resample_step,
    write_trace_csv, CbsParams, CoordinateLaw, Criterion, EksParams, Ensemble, FnRows, GreedyCriterion,
    GreedyOutcome, Proposal, TraceEntry, UpdateRule, TRACE_HEADER,
};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use scalar::Real;
pub use schrodinger::{
    loss_landscape, DesignPoint, Field, Grid, Landscape, LandscapeWindow, PotentialCoeffs, Preset,
    SchrodingerOperator, SchrodingerProblem, Sensor, SourceDesignRows, SourceSpec,
};
pub use sketch::{
    concentration_trial, draw_indices, frobenius_error_bound, optimal_density, sample_size_bound,
    sketch_product, sketch_rows, DensityField, DesignBox, Normalization, Quasimatrix, RowSource,
    SampledSketch, Support,
};

pub type Matrix64 = Matrix<f64>;
pub type Fim64 = Fim<f64>;
pub type Design64 = Design<f64>;
pub type DesignBox64 = DesignBox<f64>;
pub type Quasimatrix64 = Quasimatrix<f64>;
pub type DensityField64 = DensityField<f64>;
pub type Ensemble64 = Ensemble<f64>;
pub type Grid64 = Grid<f64>;
pub type PotentialCoeffs64 = PotentialCoeffs<f64>;
pub type SchrodingerProblem64 = SchrodingerProblem<f64>;
pub type SourceDesignRows64 = SourceDesignRows<f64>;
pub type DesignReport64 = DesignReport<f64>;

pub type Matrix32 = Matrix<f32>;
pub type Fim32 = Fim<f32>;
pub type Quasimatrix32 = Quasimatrix<f32>;
pub type DensityField32 = DensityField<f32>;
pub type Ensemble32 = Ensemble<f32>;
pub type SchrodingerProblem32 = SchrodingerProblem<f32>;

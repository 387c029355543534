//! Finite-difference model of `(-Δ + p) u = γ` on `[-1, 1]²` with zero
//! Dirichlet data, and the sensitivity rows of sensor readings w.r.t. the
//! potential coefficients.

mod grid;
mod landscape;
mod potential;
mod rows;
mod solver;

pub use grid::Grid;
pub use landscape::{loss_landscape, Landscape, LandscapeWindow};
pub use potential::{cosine_basis, CosineMode, PotentialCoeffs, Preset, SourceSpec};
pub use rows::{DesignPoint, SchrodingerProblem, Sensor, SourceDesignRows};
pub use solver::{Field, SchrodingerOperator};

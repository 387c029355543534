//! Small dense and banded kernels used by the sketching and PDE code.

mod banded;
mod dense;
mod eigen;

pub use banded::BandedCholesky;
pub use dense::Matrix;
pub use eigen::{sqrt_psd, SymmetricEigen};

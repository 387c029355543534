use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

use super::Grid;

/// `φ(x) = cos(k1 π x1) cos(k2 π x2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CosineMode {
    pub k1: u32,
    pub k2: u32,
}

impl CosineMode {
    pub fn eval<T: Real>(&self, x1: T, x2: T) -> T {
        let pi = T::lit(PI);
        (T::lit(f64::from(self.k1)) * pi * x1).cos() * (T::lit(f64::from(self.k2)) * pi * x2).cos()
    }
}

/// The `(m+1)²` modes with `k1, k2 ∈ {0..=m}`, ordered `k1`-major.
pub fn cosine_basis(max_order: u32) -> Vec<CosineMode> {
    (0..=max_order)
        .flat_map(|k1| (0..=max_order).map(move |k2| CosineMode { k1, k2 }))
        .collect()
}

/// Potential `p(x) = offset + Σ_k values[k] φ_k(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialCoeffs<T> {
    pub values: Vec<T>,
    pub basis: Vec<CosineMode>,
    pub offset: T,
}

impl<T: Real> PotentialCoeffs<T> {
    pub fn new(values: Vec<T>, basis: Vec<CosineMode>, offset: T) -> Result<Self> {
        if values.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: values.len(),
            });
        }
        Ok(Self { values, basis, offset })
    }

    /// Coefficients on the `3 × 3` cosine basis, given as the row-major
    /// matrix `[k1][k2]`.
    pub fn cosine9(values: [f64; 9]) -> Self {
        Self {
            values: values.iter().map(|&v| T::lit(v)).collect(),
            basis: cosine_basis(2),
            offset: T::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn eval(&self, x1: T, x2: T) -> T {
        self.offset
            + self
                .values
                .iter()
                .zip(&self.basis)
                .map(|(&c, m)| c * m.eval(x1, x2))
                .sum::<T>()
    }

    /// Multiplies the coefficients (not the offset) by `alpha`.
    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * alpha).collect(),
            ..self.clone()
        }
    }

    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(values, self.basis.clone(), self.offset)
    }

    /// Smallest nodal value on the grid.
    pub fn min_on(&self, grid: &Grid<T>) -> T {
        (0..grid.num_nodes())
            .map(|n| {
                let [x1, x2] = grid.node_coords(n);
                self.eval(x1, x2)
            })
            .fold(T::infinity(), T::min)
    }

    /// Logs a warning if the potential is negative at a node.
    pub fn check_admissible(&self, grid: &Grid<T>) -> bool {
        let m = self.min_on(grid);
        if m < T::zero() {
            log::warn!("potential is negative on the grid (min {m}); solution may lose positivity");
            false
        } else {
            true
        }
    }
}

/// Named ground-truth parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    SystemA,
    SystemB,
    SystemC,
    SystemD,
    /// Two-parameter family `p1 cos(π x1) + p2 cos(π x2) + 12` at `(1, 10)`.
    Landscape2d,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::SystemA,
        Preset::SystemB,
        Preset::SystemC,
        Preset::SystemD,
        Preset::Landscape2d,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::SystemA => "systemA",
            Preset::SystemB => "systemB",
            Preset::SystemC => "systemC",
            Preset::SystemD => "systemD",
            Preset::Landscape2d => "landscape2d",
        }
    }

    pub fn coeffs<T: Real>(&self) -> PotentialCoeffs<T> {
        match self {
            Preset::SystemA => PotentialCoeffs::cosine9([13.6, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0]),
            Preset::SystemB => PotentialCoeffs::cosine9([5.856, 0.103, 3.168, 3.7441, 2.493, 1.124, 0.9902, 3.803, 0.846]),
            Preset::SystemC => PotentialCoeffs::cosine9([11.0, 8.889, 7.778, 6.667, 5.556, 4.444, 3.333, 2.222, 1.111]),
            Preset::SystemD => PotentialCoeffs::cosine9([10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            Preset::Landscape2d => PotentialCoeffs {
                values: vec![T::one(), T::lit(10.0)],
                basis: vec![CosineMode { k1: 1, k2: 0 }, CosineMode { k1: 0, k2: 1 }],
                offset: T::lit(12.0),
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid("scenario", format!("unknown preset `{s}`")))
    }
}

/// Right-hand side `γ` of the forward problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SourceSpec<T> {
    Constant(T),
    /// `γ(x) = g1 x1 + g2 x2 + offset`.
    Linear { g1: T, g2: T, offset: T },
}

impl<T: Real> SourceSpec<T> {
    pub const DEFAULT_LINEAR_OFFSET: f64 = 10.0;

    pub fn linear(g1: T, g2: T) -> Self {
        SourceSpec::Linear {
            g1,
            g2,
            offset: T::lit(Self::DEFAULT_LINEAR_OFFSET),
        }
    }

    pub fn eval(&self, x1: T, x2: T) -> T {
        match *self {
            SourceSpec::Constant(g) => g,
            SourceSpec::Linear { g1, g2, offset } => g1 * x1 + g2 * x2 + offset,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_mode_basis_order() {
        let b = cosine_basis(2);
        assert_eq!(b.len(), 9);
        assert_eq!(b[1], CosineMode { k1: 0, k2: 1 });
        assert_eq!(b[3], CosineMode { k1: 1, k2: 0 });
    }

    #[test]
    fn presets_parse_and_are_nonnegative() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            let c: PotentialCoeffs<f64> = p.coeffs();
            let g = Grid::new(30).unwrap();
            assert!(c.min_on(&g) >= 0.0, "{p}");
        }
        assert!("systemE".parse::<Preset>().is_err());
    }

    #[test]
    fn system_d_is_constant_ten() {
        let c: PotentialCoeffs<f64> = Preset::SystemD.coeffs();
        assert_eq!(c.eval(0.3, -0.7), 10.0);
        assert_eq!(c.scaled(0.1).eval(0.0, 0.0), 1.0);
    }

    #[test]
    fn linear_source_with_box_parameters_is_positive() {
        for g1 in [-2.0, 2.0] {
            for g2 in [-2.0, 2.0] {
                let s = SourceSpec::linear(g1, g2);
                for x in [-1.0, 1.0] {
                    for y in [-1.0, 1.0] {
                        assert!(s.eval(x, y) > 0.0);
                    }
                }
            }
        }
    }
}

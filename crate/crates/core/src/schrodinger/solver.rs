use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{BandedCholesky, Matrix};
use crate::scalar::Real;

use super::{Grid, PotentialCoeffs, SourceSpec};

/// Nodal values on every grid node (boundary included).
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    pub grid: Grid<T>,
    pub values: Vec<T>,
}

impl<T: Real> Field<T> {
    /// Embeds inner-node values, zero on the boundary.
    pub fn from_inner(grid: Grid<T>, inner: &[T]) -> Self {
        let mut values = vec![T::zero(); grid.num_nodes()];
        for (i, &v) in inner.iter().enumerate() {
            values[grid.inner_to_node(i)] = v;
        }
        Self { grid, values }
    }

    pub fn inner(&self) -> Vec<T> {
        (0..self.grid.num_inner())
            .map(|i| self.values[self.grid.inner_to_node(i)])
            .collect()
    }

    pub fn at(&self, x1: T, x2: T) -> T {
        self.values[self.grid.inner_to_node(self.grid.snap(x1, x2))]
    }

    /// CSV with header `x1,x2,value`, one line per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x1,x2,value")?;
        for (n, v) in self.values.iter().enumerate() {
            let [x1, x2] = self.grid.node_coords(n);
            writeln!(w, "{x1},{x2},{v}")?;
        }
        Ok(())
    }
}

/// Five-point finite-difference discretization of `-Δ + p` with homogeneous
/// Dirichlet conditions, factored once.
///
/// The matrix is symmetric positive definite for `p >= 0`, so the same
/// factorization serves forward solves for every source and adjoint solves
/// for every sensor.
#[derive(Clone, Debug)]
pub struct SchrodingerOperator<T> {
    grid: Grid<T>,
    coeffs: PotentialCoeffs<T>,
    potential: Vec<T>,
    /// `K × N_inner` basis values at inner nodes.
    basis_values: Matrix<T>,
    factor: BandedCholesky<T>,
}

impl<T: Real> SchrodingerOperator<T> {
    pub fn new(grid: Grid<T>, coeffs: PotentialCoeffs<T>) -> Result<Self> {
        coeffs.check_admissible(&grid);
        let n = grid.num_inner();
        let m = grid.inner_per_side();
        let points: Vec<[T; 2]> = (0..n).map(|i| grid.inner_coords(i)).collect();
        let potential: Vec<T> = points.iter().map(|&[a, b]| coeffs.eval(a, b)).collect();
        let mut basis_values = Matrix::zeros(coeffs.len(), n);
        for (k, mode) in coeffs.basis.iter().enumerate() {
            for (i, &[a, b]) in points.iter().enumerate() {
                basis_values[(k, i)] = mode.eval(a, b);
            }
        }
        let inv_h2 = T::one() / (grid.spacing() * grid.spacing());
        let four = T::lit(4.0);
        let factor = BandedCholesky::factor(n, m, |i, j| {
            if i == j {
                four * inv_h2 + potential[i]
            } else if (i - j == 1 && i % m != 0) || i - j == m {
                -inv_h2
            } else {
                T::zero()
            }
        })?;
        Ok(Self {
            grid,
            coeffs,
            potential,
            basis_values,
            factor,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn coeffs(&self) -> &PotentialCoeffs<T> {
        &self.coeffs
    }

    pub fn num_params(&self) -> usize {
        self.coeffs.len()
    }

    pub fn basis_values(&self) -> &Matrix<T> {
        &self.basis_values
    }

    /// Applies the discrete operator to inner-node values.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let m = self.grid.inner_per_side();
        let n = self.grid.num_inner();
        assert_eq!(x.len(), n);
        let inv_h2 = T::one() / (self.grid.spacing() * self.grid.spacing());
        (0..n)
            .map(|i| {
                let (i1, i2) = (i / m, i % m);
                let mut s = T::lit(4.0) * x[i];
                if i1 > 0 {
                    s -= x[i - m];
                }
                if i1 + 1 < m {
                    s -= x[i + m];
                }
                if i2 > 0 {
                    s -= x[i - 1];
                }
                if i2 + 1 < m {
                    s -= x[i + 1];
                }
                s * inv_h2 + self.potential[i] * x[i]
            })
            .collect()
    }

    /// Solves for inner-node values given an inner-node right-hand side.
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        self.factor.solve(rhs)
    }

    /// Forward solution on inner nodes for an arbitrary source function.
    pub fn solve_with(&self, source: impl Fn(T, T) -> T) -> Vec<T> {
        let rhs: Vec<T> = (0..self.grid.num_inner())
            .map(|i| {
                let [a, b] = self.grid.inner_coords(i);
                source(a, b)
            })
            .collect();
        self.solve(&rhs)
    }

    pub fn forward_inner(&self, source: &SourceSpec<T>) -> Vec<T> {
        self.solve_with(|a, b| source.eval(a, b))
    }

    pub fn solve_forward(&self, source: &SourceSpec<T>) -> Field<T> {
        Field::from_inner(self.grid, &self.forward_inner(source))
    }

    /// Adjoint field for a sensor at inner node `inner`: discrete delta load
    /// `-1/h²`, so that `h² Σ_n g_n v_n = -v(x)` for the pairing.
    pub fn adjoint_inner(&self, inner: usize) -> Vec<T> {
        let h = self.grid.spacing();
        let mut rhs = vec![T::zero(); self.grid.num_inner()];
        rhs[inner] = -T::one() / (h * h);
        self.factor.solve_in_place(&mut rhs);
        rhs
    }

    /// Adjoint field for a sensor at grid node `node`; boundary nodes are
    /// rejected.
    pub fn solve_adjoint(&self, node: usize) -> Result<Field<T>> {
        let inner = self.grid.node_to_inner(node).ok_or(Error::BoundaryNode(node))?;
        Ok(Field::from_inner(self.grid, &self.adjoint_inner(inner)))
    }

    /// Sensitivity row `[J]_k = h² Σ_n g_n φ_k(ξ_n) u_n` from inner-node
    /// adjoint and forward values.
    pub fn row_from_fields(&self, adjoint: &[T], forward: &[T]) -> Vec<T> {
        let h2 = self.grid.spacing() * self.grid.spacing();
        let gu: Vec<T> = adjoint.iter().zip(forward).map(|(&g, &u)| g * u).collect();
        (0..self.num_params())
            .map(|k| {
                self.basis_values
                    .row(k)
                    .iter()
                    .zip(&gu)
                    .map(|(&phi, &w)| phi * w)
                    .sum::<T>()
                    * h2
            })
            .collect()
    }
}

use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::sketch::DesignBox;

/// Uniform lattice on `[-1, 1]²` with `nx` cells per direction.
///
/// Nodes are indexed `a * (nx + 1) + b` for coordinates
/// `(x1, x2) = (-1 + a h, -1 + b h)`. Inner nodes (the unknowns of the
/// Dirichlet problem) are indexed `i1 * (nx - 1) + i2` with `a = i1 + 1`,
/// `b = i2 + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid<T> {
    nx: usize,
    h: T,
}

impl<T: Real> Grid<T> {
    pub fn new(nx: usize) -> Result<Self> {
        if nx < 4 {
            return Err(invalid("nx", format!("need at least 4 cells per direction, got {nx}")));
        }
        Ok(Self {
            nx,
            h: T::lit(2.0) / T::from_usize_lossy(nx),
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn spacing(&self) -> T {
        self.h
    }

    pub fn nodes_per_side(&self) -> usize {
        self.nx + 1
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.nx + 1)
    }

    pub fn inner_per_side(&self) -> usize {
        self.nx - 1
    }

    pub fn num_inner(&self) -> usize {
        (self.nx - 1) * (self.nx - 1)
    }

    pub fn coord(&self, lattice_index: usize) -> T {
        -T::one() + T::from_usize_lossy(lattice_index) * self.h
    }

    pub fn node_coords(&self, node: usize) -> [T; 2] {
        let s = self.nodes_per_side();
        [self.coord(node / s), self.coord(node % s)]
    }

    pub fn inner_coords(&self, inner: usize) -> [T; 2] {
        let m = self.inner_per_side();
        [self.coord(inner / m + 1), self.coord(inner % m + 1)]
    }

    pub fn inner_to_node(&self, inner: usize) -> usize {
        let m = self.inner_per_side();
        (inner / m + 1) * self.nodes_per_side() + inner % m + 1
    }

    /// Inner index of a node, `None` on the boundary.
    pub fn node_to_inner(&self, node: usize) -> Option<usize> {
        let s = self.nodes_per_side();
        let (a, b) = (node / s, node % s);
        if node >= self.num_nodes() || a == 0 || b == 0 || a == self.nx || b == self.nx {
            None
        } else {
            Some((a - 1) * self.inner_per_side() + b - 1)
        }
    }

    fn snap_axis(&self, x: T) -> usize {
        // nearest inner lattice index; exact midpoints go to the lower one
        let t = (x + T::one()) / self.h - T::one();
        let k = (t - T::lit(0.5)).ceil();
        let max = T::from_usize_lossy(self.inner_per_side() - 1);
        let k = if k.is_nan() { T::zero() } else { k.max(T::zero()).min(max) };
        k.to_usize().unwrap_or(0)
    }

    /// Nearest inner node to `(x1, x2)`; ties toward the smaller index.
    pub fn snap(&self, x1: T, x2: T) -> usize {
        self.snap_axis(x1) * self.inner_per_side() + self.snap_axis(x2)
    }

    pub fn inner_points(&self) -> Vec<Vec<T>> {
        (0..self.num_inner()).map(|i| self.inner_coords(i).to_vec()).collect()
    }

    /// Box spanned by the inner nodes, `[-1 + h, 1 - h]²`.
    pub fn sensor_box(&self) -> DesignBox<T> {
        DesignBox::cube(2, -T::one() + self.h, T::one() - self.h).expect("nx >= 4")
    }
}

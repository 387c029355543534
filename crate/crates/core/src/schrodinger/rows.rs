use std::collections::HashMap;
use std::sync::{Arc, Mutex, PoisonError};

use rayon::prelude::*;

use crate::design::{full_fim, Fim};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::sketch::{DesignBox, Quasimatrix, RowSource};

use super::{Grid, PotentialCoeffs, SchrodingerOperator, SourceSpec};

/// Sensor location: an inner node, or a position snapped to the nearest one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sensor<T> {
    Node(usize),
    Position(T, T),
}

/// One experiment: where to measure and which source drives the system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignPoint<T> {
    pub sensor: Sensor<T>,
    pub source: SourceSpec<T>,
}

/// Forward model at a fixed potential: one factorization, one forward
/// solution for the problem's source.
#[derive(Clone, Debug)]
pub struct SchrodingerProblem<T> {
    operator: Arc<SchrodingerOperator<T>>,
    source: SourceSpec<T>,
    forward: Arc<Vec<T>>,
}

impl<T: Real> SchrodingerProblem<T> {
    pub fn new(grid: Grid<T>, coeffs: PotentialCoeffs<T>, source: SourceSpec<T>) -> Result<Self> {
        let operator = Arc::new(SchrodingerOperator::new(grid, coeffs)?);
        let forward = Arc::new(operator.forward_inner(&source));
        Ok(Self {
            operator,
            source,
            forward,
        })
    }

    pub fn operator(&self) -> &SchrodingerOperator<T> {
        &self.operator
    }

    pub fn grid(&self) -> &Grid<T> {
        self.operator.grid()
    }

    pub fn source(&self) -> &SourceSpec<T> {
        &self.source
    }

    pub fn num_params(&self) -> usize {
        self.operator.num_params()
    }

    /// Forward solution on inner nodes for the problem's source.
    pub fn forward(&self) -> &[T] {
        &self.forward
    }

    pub fn sensor_index(&self, sensor: Sensor<T>) -> Result<usize> {
        let g = self.grid();
        match sensor {
            Sensor::Node(i) if i < g.num_inner() => Ok(i),
            Sensor::Node(i) => Err(Error::DimensionMismatch {
                expected: g.num_inner(),
                got: i,
            }),
            Sensor::Position(a, b) => Ok(g.snap(a, b)),
        }
    }

    /// Gradient of the measurement `u_p(x)` w.r.t. the potential
    /// coefficients, via one adjoint solve.
    pub fn sensitivity_row(&self, d: &DesignPoint<T>) -> Result<Vec<T>> {
        let inner = self.sensor_index(d.sensor)?;
        let adjoint = self.operator.adjoint_inner(inner);
        if d.source == self.source {
            Ok(self.operator.row_from_fields(&adjoint, &self.forward))
        } else {
            let forward = self.operator.forward_inner(&d.source);
            Ok(self.operator.row_from_fields(&adjoint, &forward))
        }
    }

    /// Rows at every inner node with the uniform base measure `1/N`.
    pub fn full_quasimatrix(&self) -> Result<Quasimatrix<T>> {
        let g = *self.grid();
        let n = g.num_inner();
        let rows: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let adjoint = self.operator.adjoint_inner(i);
                self.operator.row_from_fields(&adjoint, &self.forward)
            })
            .collect();
        Quasimatrix::uniform(g.inner_points(), Matrix::from_rows(&rows), g.sensor_box())
    }

    pub fn full_fim(&self) -> Result<Fim<T>> {
        Ok(full_fim(&self.full_quasimatrix()?))
    }
}

type Cache<K, T> = Mutex<HashMap<K, Arc<Vec<T>>>>;

/// Rows over the joint design space `(x1, x2, g1, g2)`: sensor position and
/// linear-source parameters `γ(x) = g1 x1 + g2 x2 + offset`.
///
/// Forward solutions are cached per source parameter pair quantized to
/// `1e-6`; the solve itself uses the quantized pair so that rows are a pure
/// function of the query.
#[derive(Debug)]
pub struct SourceDesignRows<T> {
    operator: Arc<SchrodingerOperator<T>>,
    offset: T,
    bounds: DesignBox<T>,
    forward_cache: Cache<(i64, i64), T>,
    adjoint_cache: Cache<usize, T>,
}

const QUANTUM: f64 = 1e-6;
const FORWARD_CACHE_CAPACITY: usize = 4096;

impl<T: Real> SourceDesignRows<T> {
    pub fn new(grid: Grid<T>, coeffs: PotentialCoeffs<T>) -> Result<Self> {
        let operator = Arc::new(SchrodingerOperator::new(grid, coeffs)?);
        Ok(Self::from_operator(operator))
    }

    pub fn from_operator(operator: Arc<SchrodingerOperator<T>>) -> Self {
        let source_box = DesignBox::cube(2, T::lit(-2.0), T::lit(2.0)).expect("valid box");
        let bounds = operator.grid().sensor_box().product(&source_box);
        Self {
            operator,
            offset: T::lit(SourceSpec::<T>::DEFAULT_LINEAR_OFFSET),
            bounds,
            forward_cache: Mutex::default(),
            adjoint_cache: Mutex::default(),
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        self.operator.grid()
    }

    fn quantize(v: T) -> i64 {
        (v.to_f64_lossy() / QUANTUM).round() as i64
    }

    fn forward(&self, g1: T, g2: T) -> Arc<Vec<T>> {
        let key = (Self::quantize(g1), Self::quantize(g2));
        if let Some(f) = self.forward_cache.lock().unwrap_or_else(PoisonError::into_inner).get(&key) {
            return Arc::clone(f);
        }
        let source = SourceSpec::Linear {
            g1: T::lit(key.0 as f64 * QUANTUM),
            g2: T::lit(key.1 as f64 * QUANTUM),
            offset: self.offset,
        };
        let f = Arc::new(self.operator.forward_inner(&source));
        let mut cache = self.forward_cache.lock().unwrap_or_else(PoisonError::into_inner);
        if cache.len() >= FORWARD_CACHE_CAPACITY {
            cache.clear();
        }
        Arc::clone(cache.entry(key).or_insert(f))
    }

    fn adjoint(&self, inner: usize) -> Arc<Vec<T>> {
        if let Some(a) = self.adjoint_cache.lock().unwrap_or_else(PoisonError::into_inner).get(&inner) {
            return Arc::clone(a);
        }
        let a = Arc::new(self.operator.adjoint_inner(inner));
        let mut cache = self.adjoint_cache.lock().unwrap_or_else(PoisonError::into_inner);
        Arc::clone(cache.entry(inner).or_insert(a))
    }

    /// Row for a design point with a linear source. Source parameters outside
    /// `[-2, 2]²` are clamped with a warning.
    pub fn source_design_row(&self, d: &DesignPoint<T>) -> Result<Vec<T>> {
        let SourceSpec::Linear { g1, g2, .. } = d.source else {
            return Err(crate::error::invalid("source", "source design needs a linear source"));
        };
        let (x1, x2) = match d.sensor {
            Sensor::Position(a, b) => (a, b),
            Sensor::Node(i) => {
                let [a, b] = self.grid().inner_coords(i);
                (a, b)
            }
        };
        self.row(&[x1, x2, g1, g2])
    }
}

impl<T: Real> RowSource<T> for SourceDesignRows<T> {
    fn design_dim(&self) -> usize {
        4
    }

    fn num_params(&self) -> usize {
        self.operator.num_params()
    }

    fn bounds(&self) -> &DesignBox<T> {
        &self.bounds
    }

    fn row(&self, u: &[T]) -> Result<Vec<T>> {
        if u.len() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, got: u.len() });
        }
        let two = T::lit(2.0);
        let clip = |g: T| {
            if g.abs() > two {
                log::warn!("source parameter {g} outside [-2, 2]; clamped");
            }
            g.max(-two).min(two)
        };
        let inner = self.grid().snap(u[0], u[1]);
        let forward = self.forward(clip(u[2]), clip(u[3]));
        let adjoint = self.adjoint(inner);
        Ok(self.operator.row_from_fields(&adjoint, &forward))
    }
}

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::{gaussian_vector, AffineChart, ParamSet, RANK_TOL};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, orthonormal_columns};
use crate::real::{gaussian_matrix, Real};
use crate::repspec::RepSpec;
use crate::signal::Signal;

/// Largest accepted condition number of a user-supplied basis.
const MAX_BASIS_CONDITION: f64 = 1e8;

/// An `M`-dimensional linear subspace of `V` with an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPrior<T: Real> {
    spec: RepSpec,
    basis: DMatrix<T>,
}

impl<T: Real> LinearPrior<T> {
    /// Span of `m` standard Gaussian signals.
    pub fn generic<R: Rng + ?Sized>(spec: &RepSpec, m: usize, rng: &mut R) -> Result<Self> {
        let d = spec.ambient_dim();
        if m == 0 || m > d {
            return Err(Error::OutOfRange(format!("subspace dimension {m} not in 1..={d}")));
        }
        let g = gaussian_matrix::<T, R>(d, m, rng);
        Self::from_matrix(spec, &g)
    }

    /// Span of the given signals, which must be linearly independent.
    pub fn from_signals(spec: &RepSpec, signals: &[Signal<T>]) -> Result<Self> {
        let d = spec.ambient_dim();
        let mut m = DMatrix::zeros(d, signals.len());
        for (j, s) in signals.iter().enumerate() {
            if s.spec() != spec {
                return Err(Error::ShapeMismatch(format!("basis signal {j} has spec {}", s.spec())));
            }
            m.set_column(j, &s.to_flat());
        }
        Self::from_matrix(spec, &m)
    }

    pub fn from_matrix(spec: &RepSpec, columns: &DMatrix<T>) -> Result<Self> {
        let d = spec.ambient_dim();
        if columns.nrows() != d || columns.ncols() == 0 || columns.ncols() > d {
            return Err(Error::OutOfRange(format!(
                "basis of shape {:?} for ambient dimension {d}",
                columns.shape()
            )));
        }
        let cond = condition_number(columns);
        if cond >= MAX_BASIS_CONDITION {
            return Err(Error::OutOfRange(format!("basis condition number {cond:e} too large")));
        }
        let basis = orthonormal_columns(columns, RANK_TOL);
        Ok(Self { spec: spec.clone(), basis })
    }

    pub fn spec(&self) -> &RepSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthonormal basis, one column per direction.
    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn basis_signals(&self) -> Vec<Signal<T>> {
        self.basis
            .column_iter()
            .map(|c| Signal::from_slice(&self.spec, c.as_slice()).expect("basis matches spec"))
            .collect()
    }

    /// Coordinates of the orthogonal projection of `x` onto the subspace.
    pub fn coordinates(&self, x: &Signal<T>) -> DVector<T> {
        self.basis.transpose() * x.to_flat()
    }

    /// Distance from `x` to the subspace.
    pub fn residual(&self, x: &Signal<T>) -> T {
        let v = x.to_flat();
        (&v - &self.basis * (self.basis.transpose() * &v)).norm()
    }

    pub fn chart(&self) -> AffineChart<T> {
        AffineChart {
            spec: self.spec.clone(),
            anchor: DVector::zeros(self.spec.ambient_dim()),
            directions: self.basis.clone(),
        }
    }

    pub(crate) fn transformed(&self, a: &DMatrix<T>) -> Self {
        Self {
            spec: self.spec.clone(),
            basis: orthonormal_columns(&(a * &self.basis), RANK_TOL),
        }
    }
}

impl<T: Real> ParamSet<T> for LinearPrior<T> {
    fn spec(&self) -> &RepSpec {
        &self.spec
    }

    fn param_dim(&self) -> usize {
        self.basis.ncols()
    }

    fn decode(&self, theta: &DVector<T>) -> DVector<T> {
        &self.basis * theta
    }

    fn jacobian(&self, _theta: &DVector<T>) -> DMatrix<T> {
        self.basis.clone()
    }

    fn sample_params(&self, rng: &mut dyn RngCore) -> DVector<T> {
        gaussian_vector(self.param_dim(), rng)
    }
}

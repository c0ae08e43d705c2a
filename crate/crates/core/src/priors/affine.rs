use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::{gaussian_vector, AffineChart, ParamSet, RANK_TOL};
use crate::error::{Error, Result};
use crate::linalg::orthonormal_columns;
use crate::real::Real;
use crate::repspec::RepSpec;
use crate::signal::Signal;

/// `anchor + Σ t_i d_i`, optionally restricted to a box of coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePrior<T: Real> {
    spec: RepSpec,
    anchor: DVector<T>,
    directions: DMatrix<T>,
    bounds: Option<Vec<(T, T)>>,
}

impl<T: Real> AffinePrior<T> {
    pub fn new(anchor: &Signal<T>, directions: &[Signal<T>], bounds: Option<Vec<(T, T)>>) -> Result<Self> {
        let spec = anchor.spec().clone();
        let d = spec.ambient_dim();
        if directions.is_empty() {
            return Err(Error::EmptyChart);
        }
        let mut m = DMatrix::zeros(d, directions.len());
        for (j, s) in directions.iter().enumerate() {
            if s.spec() != &spec {
                return Err(Error::ShapeMismatch(format!("direction {j} has spec {}", s.spec())));
            }
            m.set_column(j, &s.to_flat());
        }
        if let Some(b) = &bounds {
            if b.len() != directions.len() {
                return Err(Error::ShapeMismatch(format!("{} bounds for {} directions", b.len(), directions.len())));
            }
            if b.iter().any(|(lo, hi)| lo.partial_cmp(hi).is_none_or(|o| o.is_gt())) {
                return Err(Error::OutOfRange("empty coefficient interval".into()));
            }
        }
        Ok(Self {
            spec,
            anchor: anchor.to_flat(),
            directions: m,
            bounds,
        })
    }

    pub fn spec(&self) -> &RepSpec {
        &self.spec
    }

    pub fn bounds(&self) -> Option<&[(T, T)]> {
        self.bounds.as_deref()
    }

    /// Dimension of the affine span.
    pub fn dim(&self) -> usize {
        orthonormal_columns(&self.directions, RANK_TOL).ncols()
    }

    /// The piece through the point with coefficients `theta`.
    pub fn chart_at(&self, theta: &DVector<T>) -> Result<AffineChart<T>> {
        Ok(AffineChart {
            spec: self.spec.clone(),
            anchor: self.decode(theta),
            directions: orthonormal_columns(&self.directions, RANK_TOL),
        })
    }

    /// The full affine span, `A + V` with `V = A − A`.
    pub fn hull_chart(&self) -> AffineChart<T> {
        AffineChart {
            spec: self.spec.clone(),
            anchor: self.anchor.clone(),
            directions: orthonormal_columns(&self.directions, RANK_TOL),
        }
    }

    pub(crate) fn transformed(&self, a: &DMatrix<T>) -> Self {
        Self {
            spec: self.spec.clone(),
            anchor: a * &self.anchor,
            directions: a * &self.directions,
            bounds: self.bounds.clone(),
        }
    }
}

impl<T: Real> ParamSet<T> for AffinePrior<T> {
    fn spec(&self) -> &RepSpec {
        &self.spec
    }

    fn param_dim(&self) -> usize {
        self.directions.ncols()
    }

    fn decode(&self, theta: &DVector<T>) -> DVector<T> {
        &self.anchor + &self.directions * theta
    }

    fn jacobian(&self, _theta: &DVector<T>) -> DMatrix<T> {
        self.directions.clone()
    }

    fn project(&self, theta: &mut DVector<T>) {
        if let Some(b) = &self.bounds {
            for (v, (lo, hi)) in theta.iter_mut().zip(b) {
                *v = v.clamp(*lo, *hi);
            }
        }
    }

    fn sample_params(&self, rng: &mut dyn RngCore) -> DVector<T> {
        match &self.bounds {
            Some(b) => DVector::from_iterator(
                b.len(),
                b.iter().map(|(lo, hi)| *lo + (*hi - *lo) * T::lit(rng.random::<f64>())),
            ),
            None => gaussian_vector(self.param_dim(), rng),
        }
    }
}

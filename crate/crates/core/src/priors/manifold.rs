use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::{gaussian_vector, AffineChart, ParamSet, RANK_TOL};
use crate::error::{Error, Result};
use crate::linalg::orthonormal_columns;
use crate::real::Real;
use crate::repspec::RepSpec;

/// A smooth parametrization `θ ↦ x ∈ V` with an analytic Jacobian.
pub trait SmoothMap<T: Real>: Send + Sync {
    fn intrinsic_dim(&self) -> usize;

    fn param_dim(&self) -> usize;

    /// Flattened point of `V`.
    fn eval(&self, theta: &DVector<T>) -> DVector<T>;

    fn jacobian(&self, theta: &DVector<T>) -> DMatrix<T>;

    fn sample(&self, rng: &mut dyn RngCore) -> DVector<T>;

    fn project(&self, _theta: &mut DVector<T>) {}
}

#[derive(Clone)]
pub enum ManifoldFamily<T: Real> {
    /// Radius-`radius` sphere of dimension `dim` in the first `dim + 1`
    /// coordinates, parametrized by an unnormalized vector `u ↦ r·u/‖u‖`.
    Sphere { dim: usize, radius: T },
    /// Torus of revolution in the first three coordinates, parametrized by
    /// two angles.
    Torus { major: T, minor: T },
    Custom(Arc<dyn SmoothMap<T>>),
}

impl<T: Real> fmt::Debug for ManifoldFamily<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldFamily::Sphere { dim, radius } => write!(f, "Sphere {{ dim: {dim}, radius: {radius} }}"),
            ManifoldFamily::Torus { major, minor } => write!(f, "Torus {{ major: {major}, minor: {minor} }}"),
            ManifoldFamily::Custom(m) => write!(f, "Custom {{ dim: {} }}", m.intrinsic_dim()),
        }
    }
}

/// A parametrized manifold followed by a linear map on `V`.
#[derive(Debug, Clone)]
pub struct ManifoldPrior<T: Real> {
    spec: RepSpec,
    family: ManifoldFamily<T>,
    embed: DMatrix<T>,
    well_situated: bool,
    homogeneous: bool,
}

impl<T: Real> ManifoldPrior<T> {
    pub fn sphere(spec: &RepSpec, dim: usize, radius: T) -> Result<Self> {
        let d = spec.ambient_dim();
        if dim == 0 || dim + 1 > d {
            return Err(Error::OutOfRange(format!("sphere of dimension {dim} in ambient {d}")));
        }
        if radius <= T::zero() {
            return Err(Error::OutOfRange(format!("sphere radius {radius}")));
        }
        Ok(Self {
            spec: spec.clone(),
            family: ManifoldFamily::Sphere { dim, radius },
            embed: DMatrix::identity(d, d),
            well_situated: true,
            homogeneous: false,
        })
    }

    pub fn torus(spec: &RepSpec, major: T, minor: T) -> Result<Self> {
        let d = spec.ambient_dim();
        if d < 3 {
            return Err(Error::OutOfRange(format!("torus needs ambient dimension 3, got {d}")));
        }
        if !(minor > T::zero() && major > minor) {
            return Err(Error::OutOfRange(format!("torus radii {major}, {minor}")));
        }
        Ok(Self {
            spec: spec.clone(),
            family: ManifoldFamily::Torus { major, minor },
            embed: DMatrix::identity(d, d),
            well_situated: true,
            homogeneous: false,
        })
    }

    /// User parametrization; the flags are taken as given.
    pub fn custom(spec: &RepSpec, map: Arc<dyn SmoothMap<T>>, well_situated: bool, homogeneous: bool) -> Self {
        let d = spec.ambient_dim();
        Self {
            spec: spec.clone(),
            family: ManifoldFamily::Custom(map),
            embed: DMatrix::identity(d, d),
            well_situated,
            homogeneous,
        }
    }

    pub fn spec(&self) -> &RepSpec {
        &self.spec
    }

    pub fn family(&self) -> &ManifoldFamily<T> {
        &self.family
    }

    pub fn embed(&self) -> &DMatrix<T> {
        &self.embed
    }

    pub fn intrinsic_dim(&self) -> usize {
        match &self.family {
            ManifoldFamily::Sphere { dim, .. } => *dim,
            ManifoldFamily::Torus { .. } => 2,
            ManifoldFamily::Custom(m) => m.intrinsic_dim(),
        }
    }

    pub fn well_situated_flag(&self) -> bool {
        self.well_situated
    }

    pub fn homogeneous_flag(&self) -> bool {
        self.homogeneous
    }

    /// Point before the linear map.
    pub fn raw_point(&self, theta: &DVector<T>) -> DVector<T> {
        let d = self.spec.ambient_dim();
        match &self.family {
            ManifoldFamily::Sphere { dim, radius } => {
                let n = theta.norm();
                let mut x = DVector::zeros(d);
                for i in 0..=*dim {
                    x[i] = *radius * theta[i] / n;
                }
                x
            }
            ManifoldFamily::Torus { major, minor } => {
                let (a, b) = (theta[0], theta[1]);
                let ring = *major + *minor * b.cos();
                let mut x = DVector::zeros(d);
                x[0] = ring * a.cos();
                x[1] = ring * a.sin();
                x[2] = *minor * b.sin();
                x
            }
            ManifoldFamily::Custom(m) => m.eval(theta),
        }
    }

    fn raw_jacobian(&self, theta: &DVector<T>) -> DMatrix<T> {
        let d = self.spec.ambient_dim();
        match &self.family {
            ManifoldFamily::Sphere { dim, radius } => {
                let k = dim + 1;
                let n = theta.norm();
                let u = theta / n;
                let mut j = DMatrix::zeros(d, k);
                let block = (DMatrix::identity(k, k) - &u * u.transpose()) * (*radius / n);
                j.view_mut((0, 0), (k, k)).copy_from(&block);
                j
            }
            ManifoldFamily::Torus { major, minor } => {
                let (a, b) = (theta[0], theta[1]);
                let ring = *major + *minor * b.cos();
                let mut j = DMatrix::zeros(d, 2);
                j[(0, 0)] = -ring * a.sin();
                j[(1, 0)] = ring * a.cos();
                j[(0, 1)] = -*minor * b.sin() * a.cos();
                j[(1, 1)] = -*minor * b.sin() * a.sin();
                j[(2, 1)] = *minor * b.cos();
                j
            }
            ManifoldFamily::Custom(m) => m.jacobian(theta),
        }
    }

    /// Affine tangent space at `theta`.
    pub fn chart_at(&self, theta: &DVector<T>) -> Result<AffineChart<T>> {
        let directions = orthonormal_columns(&self.jacobian(theta), RANK_TOL);
        if directions.ncols() == 0 {
            return Err(Error::EmptyChart);
        }
        Ok(AffineChart {
            spec: self.spec.clone(),
            anchor: self.decode(theta),
            directions,
        })
    }

    pub(crate) fn transformed(&self, a: &DMatrix<T>) -> Self {
        Self {
            embed: a * &self.embed,
            ..self.clone()
        }
    }
}

impl<T: Real> ParamSet<T> for ManifoldPrior<T> {
    fn spec(&self) -> &RepSpec {
        &self.spec
    }

    fn param_dim(&self) -> usize {
        match &self.family {
            ManifoldFamily::Sphere { dim, .. } => dim + 1,
            ManifoldFamily::Torus { .. } => 2,
            ManifoldFamily::Custom(m) => m.param_dim(),
        }
    }

    fn decode(&self, theta: &DVector<T>) -> DVector<T> {
        &self.embed * self.raw_point(theta)
    }

    fn jacobian(&self, theta: &DVector<T>) -> DMatrix<T> {
        &self.embed * self.raw_jacobian(theta)
    }

    fn project(&self, theta: &mut DVector<T>) {
        match &self.family {
            ManifoldFamily::Sphere { .. } => {
                let n = theta.norm();
                if n > T::zero() && n.is_finite() {
                    *theta /= n;
                } else {
                    theta.fill(T::zero());
                    theta[0] = T::one();
                }
            }
            ManifoldFamily::Torus { .. } => {
                let tau = T::two_pi();
                theta.apply(|v| *v -= tau * (*v / tau).floor());
            }
            ManifoldFamily::Custom(m) => m.project(theta),
        }
    }

    fn sample_params(&self, rng: &mut dyn RngCore) -> DVector<T> {
        match &self.family {
            ManifoldFamily::Sphere { dim, .. } => {
                let mut u = gaussian_vector(dim + 1, rng);
                self.project(&mut u);
                u
            }
            ManifoldFamily::Torus { .. } => {
                DVector::from_fn(2, |_, _| T::lit(rng.random::<f64>() * std::f64::consts::TAU))
            }
            ManifoldFamily::Custom(m) => m.sample(rng),
        }
    }
}
